"""Command-line interface.

Subcommands: ``fit`` (single-order MLE report), ``mscs`` (confidence set for
the order), ``simulate`` (Monte Carlo coverage cell), ``plot-density``
(curve data plus rendered figure), ``scenarios`` (benchmark parameter
table).  Every run embeds a manifest in its report; re-running the same
manifest reproduces the outputs bit for bit.

Exit codes: 0 success, 2 validation/parse error, 3 numerical failure.
"""

from __future__ import annotations

import functools
import math
import sys
from pathlib import Path

import click
import numpy as np

from .em import EMConfig, fit
from .engine import PenaltyKind, build_mscs, criterion_value
from .errors import NumericalError, SingularMatrixError, ValidationError
from .gmm import MixtureParams, Sample, log_density
from .report import (
    build_manifest,
    fit_to_dict,
    mscs_to_dict,
    params_from_dict,
    read_observations,
    sim_to_dict,
    to_json,
    write_json,
)
from .sim import SimConfig, run_simulation, scenario_params, scenario_table

_PENALTY_CHOICE = click.Choice(["aic", "bic", "tic"], case_sensitive=False)


def _handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _emit(report: dict, out: str | None) -> Path | None:
    if out is None:
        click.echo(to_json(report), nl=False)
        return None
    path = Path(out)
    write_json(path, report)
    click.echo(f"report written to {path}")
    return path


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


@click.group()
@click.version_option()
def main() -> None:
    """Gaussian mixture order selection with model selection confidence sets."""


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

@main.command("fit")
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--k", type=int, required=True, help="Number of mixture components.")
@click.option("--restarts", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_handle_errors
def cmd_fit(input_path, k, restarts, seed, out):
    """Fit a K-component mixture to INPUT_PATH and report criteria."""
    sample, notices = read_observations(input_path)
    for notice in notices:
        click.echo(notice, err=True)
    config = EMConfig(n_restarts=restarts, seed=seed)
    result = fit(sample, k, config)
    criteria = {
        "aic": criterion_value(result, PenaltyKind.AIC, sample),
        "bic": criterion_value(result, PenaltyKind.BIC, sample),
    }
    warnings = []
    try:
        criteria["tic"] = criterion_value(result, PenaltyKind.TIC, sample)
    except SingularMatrixError as exc:
        criteria["tic"] = math.nan
        warnings.append(f"tic unavailable: {exc}")
    report = {
        "command": "fit",
        "n": sample.n,
        "fit": fit_to_dict(result),
        "criteria": criteria,
        "warnings": warnings,
        "manifest": build_manifest(
            "fit",
            {"input": str(input_path), "k": k, "restarts": restarts, "seed": seed},
            input_path,
        ),
    }
    _emit(report, out)


# ---------------------------------------------------------------------------
# mscs
# ---------------------------------------------------------------------------

@main.command("mscs")
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--kmax", type=int, default=8, show_default=True)
@click.option("--penalty", type=_PENALTY_CHOICE, default="tic", show_default=True)
@click.option("--ref", type=_PENALTY_CHOICE, default="bic", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--restarts", type=int, default=20, show_default=True)
@click.option("--mc-draws", type=int, default=200_000, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--figure/--no-figure", default=True, show_default=True,
              help="Render a density figure next to the report.")
@_handle_errors
def cmd_mscs(input_path, alpha, kmax, penalty, ref, seed, restarts, mc_draws, out, figure):
    """Build the order confidence set for the data in INPUT_PATH."""
    sample, notices = read_observations(input_path)
    for notice in notices:
        click.echo(notice, err=True)
    config = EMConfig(n_restarts=restarts, seed=seed)
    result = build_mscs(
        sample,
        k_max=kmax,
        alpha=alpha,
        penalty=PenaltyKind.parse(penalty),
        em_config=config,
        ref_kind=PenaltyKind.parse(ref),
        mc_draws=mc_draws,
    )
    report = {
        "command": "mscs",
        "n": sample.n,
        **mscs_to_dict(result),
        "manifest": build_manifest(
            "mscs",
            {
                "input": str(input_path), "alpha": alpha, "kmax": kmax,
                "penalty": penalty, "ref": ref, "seed": seed,
                "restarts": restarts, "mc_draws": mc_draws,
            },
            input_path,
        ),
    }
    path = _emit(report, out)
    gamma = ", ".join(str(k) for k in result.gamma)
    click.echo(f"k_hat={result.k_hat}  gamma={{{gamma}}}")
    if path is not None:
        _write_csv(
            path.with_name(path.stem + "_records.csv"),
            ["k", "side", "lrt", "delta", "lrt_star", "q_alpha", "pass"],
            [
                [r.k, r.side, r.lrt, r.delta, r.lrt_star, r.q_alpha, r.passed]
                for r in result.records
            ],
        )
        if figure:
            from .plotting import save_density_figure

            grid = _default_grid(sample.values, None, 512)
            curves = {
                f"k={f.k}": np.exp(log_density(f.params, grid))
                for f in result.fits
                if f.k in result.gamma
            }
            save_density_figure(
                path.with_suffix(".png"),
                grid,
                curves,
                sample_values=sample.values,
                title=f"models in the confidence set (alpha={alpha:g})",
            )


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

@main.command("simulate")
@click.option("--scenario", type=click.IntRange(1, 4), required=True)
@click.option("--n", type=int, required=True)
@click.option("--b", "--B", "b", type=int, required=True, help="Replicate count.")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--penalty", type=_PENALTY_CHOICE, default="tic", show_default=True)
@click.option("--ref", type=_PENALTY_CHOICE, default="bic", show_default=True)
@click.option("--kmax", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--restarts", type=int, default=20, show_default=True)
@click.option("--mc-draws", type=int, default=200_000, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_handle_errors
def cmd_simulate(scenario, n, b, alpha, penalty, ref, kmax, seed, restarts, mc_draws, out):
    """Run one Monte Carlo coverage cell and report the aggregates."""
    config = SimConfig(
        scenario=scenario,
        n=n,
        B=b,
        alpha=alpha,
        penalty=PenaltyKind.parse(penalty),
        ref_kind=PenaltyKind.parse(ref),
        k_max=kmax,
        master_seed=seed,
        em=EMConfig(n_restarts=restarts, seed=seed),
        mc_draws=mc_draws,
    )
    result = run_simulation(config)
    report = {
        "command": "simulate",
        **sim_to_dict(result, config),
        "manifest": build_manifest(
            "simulate",
            {
                "scenario": scenario, "n": n, "B": b, "alpha": alpha,
                "penalty": penalty, "ref": ref, "kmax": kmax, "seed": seed,
                "restarts": restarts, "mc_draws": mc_draws,
            },
        ),
    }
    path = _emit(report, out)
    click.echo(
        f"density {scenario}, n={n}, alpha={alpha:g}: "
        f"coverage {100 * result.coverage:.1f} ({result.mean_size:.1f})  "
        f"k_hat=k0 {100 * result.pct_khat_correct:.1f}"
    )
    if path is not None:
        _write_csv(
            path.with_name(path.stem + "_replicates.csv"),
            ["replicate", "covered", "size", "k_hat"],
            [
                [i, int(c), s, k]
                for i, (c, s, k) in enumerate(result.per_replicate)
            ],
        )


# ---------------------------------------------------------------------------
# plot-density
# ---------------------------------------------------------------------------

def _default_grid(data, params_list, grid_points):
    if data is not None:
        sd = float(np.std(data))
        lo, hi = float(np.min(data)) - 3.0 * sd, float(np.max(data)) + 3.0 * sd
    else:
        lo = min(float(p.means.min() - 3.0 * np.sqrt(p.variances.max())) for p in params_list)
        hi = max(float(p.means.max() + 3.0 * np.sqrt(p.variances.max())) for p in params_list)
    return np.linspace(lo, hi, grid_points)


def _params_from_report(tree: dict) -> list[MixtureParams]:
    if tree.get("command") == "fit":
        return [params_from_dict(tree["fit"]["params"])]
    if tree.get("command") == "mscs":
        gamma = set(tree["gamma"])
        return [
            params_from_dict(f["params"]) for f in tree["fits"] if f["k"] in gamma
        ]
    raise ValidationError("report must come from the fit or mscs command")


@main.command("plot-density")
@click.option("--scenario", type=click.IntRange(1, 4), default=None)
@click.option("--report", "report_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="A fit or mscs report to take parameters from.")
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Observations for the histogram overlay.")
@click.option("--grid-points", type=int, default=512, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Curve CSV path; figure and histogram go alongside.")
@click.option("--figure/--no-figure", default=True, show_default=True)
@_handle_errors
def cmd_plot_density(scenario, report_path, data_path, grid_points, out, figure):
    """Write (x, density) curves for fitted or benchmark models."""
    import json

    if (scenario is None) == (report_path is None):
        raise ValidationError("provide exactly one of --scenario or --report")
    if grid_points < 2:
        raise ValidationError("grid must have at least 2 points")

    if scenario is not None:
        params_list = [scenario_params(scenario).true_params]
    else:
        params_list = _params_from_report(json.loads(Path(report_path).read_text()))

    data = None
    if data_path is not None:
        sample, notices = read_observations(data_path)
        for notice in notices:
            click.echo(notice, err=True)
        data = sample.values

    grid = _default_grid(data, params_list, grid_points)
    curves = {p.k: np.exp(log_density(p, grid)) for p in params_list}

    path = Path(out)
    header = ["x"] + [f"density_k{k}" for k in curves]
    rows = [[grid[i]] + [curves[k][i] for k in curves] for i in range(grid.size)]
    _write_csv(path, header, rows)
    click.echo(f"curves written to {path}")

    hist_edges = None
    if data is not None:
        counts, hist_edges = np.histogram(data, bins="auto")
        _write_csv(
            path.with_name(path.stem + "_hist.csv"),
            ["bin_left", "bin_right", "count"],
            [
                [hist_edges[i], hist_edges[i + 1], int(counts[i])]
                for i in range(counts.size)
            ],
        )
    if figure:
        from .plotting import save_density_figure

        save_density_figure(
            path.with_suffix(".png"),
            grid,
            {f"k={k}": v for k, v in curves.items()},
            sample_values=data,
            hist_edges=hist_edges,
        )


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

@main.command("scenarios")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_handle_errors
def cmd_scenarios(out):
    """Export the benchmark density parameter table."""
    _emit({"command": "scenarios", "table": scenario_table()}, out)


if __name__ == "__main__":
    main()
