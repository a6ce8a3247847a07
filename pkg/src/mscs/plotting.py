"""Figure rendering for the CLI report paths.

Figures are rendered headlessly to files next to the delimited curve data;
the CSV remains the canonical output, the PNG is the human-readable view.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402


def save_density_figure(
    out_path,
    grid: np.ndarray,
    curves: dict[str, np.ndarray],
    sample_values: np.ndarray | None = None,
    hist_edges: np.ndarray | None = None,
    title: str | None = None,
) -> None:
    """Density curves, optionally over a density-normalized histogram."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    if sample_values is not None:
        edges = hist_edges if hist_edges is not None else "auto"
        ax.hist(
            sample_values,
            bins=edges,
            density=True,
            color="0.85",
            edgecolor="0.6",
            label=f"data (n={len(sample_values)})",
        )
    for label, values in curves.items():
        ax.plot(grid, values, lw=1.6, label=label)
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
