"""Univariate Gaussian mixture densities.

Parameter containers, log-density evaluation, sampling, and the packing of
mixture parameters into the free coordinate vector

    theta = (pi_1, ..., pi_{k-1}, mu_1, ..., mu_k, var_1, ..., var_k)

of length ``p_k = 3k - 1`` (the last weight is implied by the simplex
constraint).  Components are kept in strictly ascending mean order so that a
mixture has exactly one valid labelling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import ValidationError
from .rng import make_rng

# Weights live in [WEIGHT_FLOOR, 1 - WEIGHT_FLOOR] for k >= 2; a hard floor
# keeps the open-interval constraint testable.
WEIGHT_FLOOR = 1e-8
_WEIGHT_SUM_TOL = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class Sample:
    """An i.i.d. sample of univariate observations (finite, at least one)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValidationError("sample must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(values)):
            raise ValidationError("sample contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Parameters of a k-component Gaussian mixture, ascending-mean labelled.

    Invariants enforced at construction: positive weights within the floor
    that sum to one, strictly ascending means, strictly positive variances.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if not (w.ndim == m.ndim == v.ndim == 1):
            raise ValidationError("weights, means, variances must be 1-d")
        k = m.size
        if k < 1 or w.size != k or v.size != k:
            raise ValidationError("weights, means, variances must share length k >= 1")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise ValidationError("mixture parameters must be finite")
        if k == 1:
            if abs(w[0] - 1.0) > _WEIGHT_SUM_TOL:
                raise ValidationError("single-component weight must be 1")
        else:
            if np.any(w < WEIGHT_FLOOR) or np.any(w > 1.0 - WEIGHT_FLOOR):
                raise ValidationError(
                    f"weights must lie in [{WEIGHT_FLOOR:g}, 1-{WEIGHT_FLOOR:g}]"
                )
            if abs(math.fsum(w) - 1.0) > _WEIGHT_SUM_TOL:
                raise ValidationError("weights must sum to 1 within 1e-12")
        if np.any(np.diff(m) <= 0.0):
            raise ValidationError("means must be strictly ascending")
        if np.any(v <= 0.0):
            raise ValidationError("variances must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def k(self) -> int:
        """Number of mixture components."""
        return int(self.means.size)

    @property
    def p(self) -> int:
        """Number of free parameters, 3k - 1."""
        return 3 * self.k - 1


def n_free_params(k: int) -> int:
    """Free parameter count p_k = 3k - 1 of a k-component mixture."""
    return 3 * int(k) - 1


def make_mixture(weights, means, variances) -> MixtureParams:
    """Build MixtureParams from arbitrarily labelled components.

    Components are relabelled to ascending means (ties broken by ascending
    variance); weights and variances are permuted in lockstep.
    """
    w = np.asarray(weights, dtype=float)
    m = np.asarray(means, dtype=float)
    v = np.asarray(variances, dtype=float)
    order = np.lexsort((v, m))
    return MixtureParams(w[order], m[order], v[order])


# ---------------------------------------------------------------------------
# Packing between MixtureParams and the free coordinate vector
# ---------------------------------------------------------------------------

def pack(params: MixtureParams) -> np.ndarray:
    """Pack parameters as (pi_1..pi_{k-1}, mu_1..mu_k, var_1..var_k)."""
    return np.concatenate([params.weights[:-1], params.means, params.variances])


def unpack(theta, k: int) -> MixtureParams:
    """Inverse of pack; validates all MixtureParams invariants.

    Fails on wrong length, a non-positive (or >= 1) implied last weight,
    non-ascending means, or non-positive variances.
    """
    theta = np.asarray(theta, dtype=float)
    k = int(k)
    if theta.shape != (n_free_params(k),):
        raise ValidationError(f"theta must have length {n_free_params(k)} for k={k}")
    w_free = theta[: k - 1]
    means = theta[k - 1 : 2 * k - 1]
    variances = theta[2 * k - 1 :]
    w_last = 1.0 - math.fsum(w_free)
    if k > 1 and not (0.0 < w_last < 1.0):
        raise ValidationError(f"implied last weight {w_last:g} outside (0, 1)")
    weights = np.concatenate([w_free, [w_last]])
    return MixtureParams(weights, means, variances)


# ---------------------------------------------------------------------------
# Density evaluation
# ---------------------------------------------------------------------------

def _component_logpdf(means, variances, x):
    """Per-component Gaussian log-densities, shape x.shape + (k,)."""
    x = np.asarray(x, dtype=float)
    z = x[..., np.newaxis] - means
    return -0.5 * (_LOG_2PI + np.log(variances) + z * z / variances)


def _log_density_raw(weights, means, variances, x):
    """log f(x) on raw arrays; no invariant checks (used for derivative probes)."""
    lp = _component_logpdf(means, variances, x) + np.log(weights)
    return logsumexp(lp, axis=-1)


def log_density(params: MixtureParams, x):
    """Log of the mixture density at x (scalar or array).

    Uses log-sum-exp over the component terms, so the result is finite for
    every finite x.
    """
    out = _log_density_raw(params.weights, params.means, params.variances, x)
    if np.ndim(x) == 0:
        return float(out)
    return out


def loglik(params: MixtureParams, sample: Sample) -> float:
    """Sample log-likelihood, reduced with an exactly rounded summation.

    fsum makes the reduction independent of observation order and exactly
    additive under duplication, which downstream contracts rely on.
    """
    return math.fsum(log_density(params, sample.values))


def mixture_cdf(params: MixtureParams, x):
    """CDF of the mixture at x (scalar or array)."""
    x = np.asarray(x, dtype=float)
    z = (x[..., np.newaxis] - params.means) / np.sqrt(params.variances)
    out = ndtr(z) @ params.weights
    return float(out) if out.ndim == 0 else out


def sample_from(params: MixtureParams, n: int, seed: int) -> Sample:
    """Draw n i.i.d. observations; deterministic given the seed."""
    n = int(n)
    if n < 1:
        raise ValidationError("n must be at least 1")
    rng = make_rng(seed)
    comp = rng.choice(params.k, size=n, p=params.weights)
    values = rng.normal(params.means[comp], np.sqrt(params.variances[comp]))
    return Sample(values)
