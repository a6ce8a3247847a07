"""Null distribution of the likelihood ratio between two mixture orders.

For orders k1 < k2 the statistic converges to a weighted sum of independent
one-degree chi-squared variables.  The weights are the eigenvalues of the
block matrix

    W = [ -B1 A1^{-1}   -C12 A2^{-1} ]
        [ C12^T A1^{-1}   B2 A2^{-1} ]

built from the information-style matrices of the two fits.  Quantiles and
CDF values come from one shared Monte Carlo replicate set per distribution,
so the CDF/quantile round trip is exact up to the empirical grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NonRealSpectrumError, ValidationError
from .gmm import Sample
from .info import _check_invertible, cross_matrix, info_matrices
from .rng import make_rng

IMAG_TOL = 1e-6
DEFAULT_MC_DRAWS = 200_000


@dataclass(frozen=True, eq=False)
class WMatrix:
    """The (p1+p2) x (p1+p2) weight matrix for an ordered pair k1 < k2."""

    entries: np.ndarray
    k1: int
    k2: int


@dataclass(frozen=True, eq=False)
class LambdaWeights:
    """Eigenvalue weights, stored descending, with an imaginary-part diagnostic."""

    lambdas: np.ndarray
    max_imag_ratio: float = 0.0

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise ValidationError("lambdas must be a non-empty 1-d sequence")
        if np.any(np.diff(lam) > 0.0):
            raise ValidationError("lambdas must be sorted descending")
        if self.max_imag_ratio > IMAG_TOL:
            raise ValidationError("max_imag_ratio exceeds the acceptance tolerance")
        object.__setattr__(self, "lambdas", lam)

    def negated(self) -> "LambdaWeights":
        """Weights of the sign-flipped statistic, re-sorted descending."""
        return LambdaWeights(-self.lambdas[::-1], self.max_imag_ratio)


def _solve_right_inverse(m: np.ndarray, a: np.ndarray) -> np.ndarray:
    """M A^{-1} via a linear solve (never an explicit inverse)."""
    return np.linalg.solve(a.T, m.T).T


def assemble_w(a1, b1, a2, b2, c12) -> np.ndarray:
    """Assemble W from the two models' A/B blocks and their cross matrix."""
    top = np.hstack(
        [-_solve_right_inverse(b1, a1), -_solve_right_inverse(c12, a2)]
    )
    bottom = np.hstack(
        [_solve_right_inverse(c12.T, a1), _solve_right_inverse(b2, a2)]
    )
    return np.vstack([top, bottom])


def build_w(fit_small, fit_large, sample: Sample, info_small=None, info_large=None) -> WMatrix:
    """W for an ordered fit pair on the shared sample.

    Precomputed InfoMatrices may be passed to avoid recomputation.  Singular
    average Hessians surface as SingularMatrixError tagged with the
    offending order.
    """
    if fit_small.k >= fit_large.k:
        raise ValidationError("fit_small must have strictly smaller order")
    info1 = info_small if info_small is not None else info_matrices(fit_small.params, sample)
    info2 = info_large if info_large is not None else info_matrices(fit_large.params, sample)
    _check_invertible(info1.a_hat, fit_small.k)
    _check_invertible(info2.a_hat, fit_large.k)
    c12 = cross_matrix(fit_small.params, fit_large.params, sample).c_hat
    entries = assemble_w(info1.a_hat, info1.b_hat, info2.a_hat, info2.b_hat, c12)
    return WMatrix(entries=entries, k1=fit_small.k, k2=fit_large.k)


def eigvals(w: WMatrix) -> LambdaWeights:
    """Eigenvalues of W, accepted only if essentially real.

    Imaginary parts beyond |Im| <= 1e-6 (1 + |Re|) indicate a degenerate fit
    upstream and raise NonRealSpectrumError.
    """
    if not np.all(np.isfinite(w.entries)):
        raise ValidationError("W matrix has non-finite entries")
    lam = np.linalg.eigvals(w.entries)
    ratios = np.abs(lam.imag) / (1.0 + np.abs(lam.real))
    worst = float(ratios.max())
    if worst > IMAG_TOL:
        raise NonRealSpectrumError(
            f"eigenvalues are not real within tolerance (max ratio {worst:.3g})",
            max_imag_ratio=worst,
        )
    return LambdaWeights(np.sort(lam.real)[::-1], worst)


@dataclass(frozen=True, eq=False)
class WeightedChiSq:
    """Monte Carlo representation of sum_i lambda_i Z_i^2.

    One replicate set is drawn per instance (deterministic in the seed) and
    shared between wchisq_cdf and wchisq_quantile.
    """

    lambdas: LambdaWeights
    mc_draws: int = DEFAULT_MC_DRAWS
    seed: int = 0

    def __post_init__(self):
        lam = self.lambdas
        if not isinstance(lam, LambdaWeights):
            lam = LambdaWeights(np.sort(np.asarray(lam, dtype=float))[::-1])
        object.__setattr__(self, "lambdas", lam)
        if self.mc_draws < 10_000:
            raise ValidationError("mc_draws must be at least 10^4")

    @cached_property
    def _sorted_draws(self) -> np.ndarray:
        lam = self.lambdas.lambdas
        rng = make_rng(self.seed)
        z = rng.standard_normal((self.mc_draws, lam.size))
        draws = np.einsum("nm,m->n", z * z, lam, optimize=False)
        draws.sort()
        return draws


def wchisq_cdf(dist: WeightedChiSq, x: float) -> float:
    """Empirical P(sum lambda_i Z_i^2 <= x) on the shared replicate set."""
    draws = dist._sorted_draws
    return float(np.searchsorted(draws, x, side="right")) / draws.size


def wchisq_quantile(dist: WeightedChiSq, alpha: float) -> float:
    """Lower-tail empirical alpha-quantile: inf{x : F_hat(x) >= alpha}."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    draws = dist._sorted_draws
    idx = int(np.ceil(alpha * draws.size)) - 1
    return float(draws[max(idx, 0)])
