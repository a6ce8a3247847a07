"""Maximum-likelihood mixture fitting by EM with multiple restarts.

The unequal-variance Gaussian mixture likelihood is unbounded, so every
variance is clamped below at ``variance_floor_factor * var(sample)``.  Chains
whose smallest variance ends pinned at that floor are counted as degenerate
and excluded from selection unless nothing else is available.

Restart layout for order k:
  0           deterministic ladder of sample quantiles, pooled variance,
              uniform weights
  1 (k >= 2)  the (k-1)-component fit with its heaviest component cloned in
              two equal halves; EM started there can never end below the
              (k-1) log-likelihood, which keeps the likelihood monotone in k
  2 (k >= 2)  the same deterministic ladder with tight variances,
              pooled / (2k)^2, which lets components contract onto narrow
              structure sitting inside the bulk of the data
  3 ..        jittered quantile ladders

Quantile starts deliberately begin inside the bulk of the data; outlying
micro-clusters are only picked up when a spare component migrates to them.
That matches how the maximum likelihood estimates behind the screening test
are conventionally computed, and keeps overfitted orders at interpretable
local maxima instead of the floor-bounded spike solutions that a global
search would reach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError
from .gmm import (
    WEIGHT_FLOOR,
    _LOG_2PI,
    MixtureParams,
    Sample,
    _component_logpdf,
    loglik,
    make_mixture,
)
from .rng import make_rng


@dataclass(frozen=True)
class EMConfig:
    """Knobs for the EM driver; rel_tol applies to the log-likelihood change."""

    max_iter: int = 500
    rel_tol: float = 1e-8
    n_restarts: int = 20
    variance_floor_factor: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if not self.rel_tol > 0.0:
            raise ValidationError("rel_tol must be positive")
        if self.n_restarts < 1:
            raise ValidationError("n_restarts must be at least 1")
        if not 0.0 < self.variance_floor_factor < 0.5:
            raise ValidationError("variance_floor_factor must lie in (0, 0.5)")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Best EM solution for one order, with convergence metadata.

    ``collapsed`` marks a solution whose components include exact duplicates
    (the cloned-restart fixed point): its likelihood is valid, but the model
    is not locally identified there, so derivative-based screening refuses
    such fits.
    """

    params: MixtureParams
    loglik: float
    n_iter: int
    converged: bool
    n_restarts_used: int
    degenerate_restarts: int
    collapsed: bool = False

    @property
    def k(self) -> int:
        return self.params.k


def variance_floor(sample: Sample, config: EMConfig) -> float:
    """Absolute variance floor used by every chain on this sample."""
    return config.variance_floor_factor * float(np.var(sample.values))


def responsibilities(params: MixtureParams, sample: Sample) -> np.ndarray:
    """Posterior component probabilities, one row per observation.

    Computed in log space and renormalized, so each row sums to one to
    machine precision.
    """
    return _responsibilities_raw(
        params.weights, params.means, params.variances, sample.values
    )


def _resp_and_loglik(weights, means, variances, x):
    """Responsibilities and total log-likelihood from one density evaluation."""
    lp = _component_logpdf(means, variances, x) + np.log(weights)
    top = lp.max(axis=-1, keepdims=True)
    e = np.exp(lp - top)
    se = e.sum(axis=-1, keepdims=True)
    ll = float(np.sum(top) + np.sum(np.log(se)))
    return e / se, ll


def _responsibilities_raw(weights, means, variances, x) -> np.ndarray:
    lp = _component_logpdf(means, variances, x) + np.log(weights)
    resp = np.exp(lp - logsumexp(lp, axis=-1, keepdims=True))
    return resp / resp.sum(axis=-1, keepdims=True)


def _m_step_from_resp(resp, means, variances, x, floor):
    nk = resp.sum(axis=0)
    alive = nk > 1e-10
    nk_safe = np.where(alive, nk, 1.0)
    new_means = np.where(
        alive, np.einsum("nk,n->k", resp, x, optimize=False) / nk_safe, means
    )
    d = x[:, np.newaxis] - new_means
    new_vars = np.where(
        alive, np.einsum("nk,nk->k", resp, d * d, optimize=False) / nk_safe, variances
    )
    new_vars = np.maximum(new_vars, floor)
    # lower clip at twice the floor so the renormalized maximum stays
    # strictly inside [WEIGHT_FLOOR, 1 - WEIGHT_FLOOR]
    new_weights = np.clip(nk / x.size, 2.0 * WEIGHT_FLOOR, None)
    new_weights = new_weights / new_weights.sum()
    return new_weights, new_means, new_vars


def _m_step_raw(weights, means, variances, x, floor):
    """One EM update on raw arrays; dead components keep their parameters."""
    resp = _responsibilities_raw(weights, means, variances, x)
    return _m_step_from_resp(resp, means, variances, x, floor)


def em_step(params: MixtureParams, sample: Sample, floor: float) -> MixtureParams:
    """One EM iteration; output relabelled to ascending means."""
    w, m, v = _m_step_raw(
        params.weights, params.means, params.variances, sample.values, floor
    )
    return make_mixture(w, m, v)


def _strictify_means(means, variances, scale):
    """Separate tied/inverted means so the ascending-order invariant holds.

    Returns the repaired means, the sort order, and whether any exact tie
    had to be repaired (the signature of a collapsed duplicate-component
    solution).
    """
    order = np.lexsort((variances, means))
    m = means[order].copy()
    eps = max(1e-12 * max(scale, 1.0), 1e-300)
    tied = False
    for i in range(1, m.size):
        if m[i] <= m[i - 1]:
            m[i] = m[i - 1] + eps
            tied = True
    return m, order, tied


def _run_chain(init, x, floor, config):
    """Iterate EM from one initialization; returns raw arrays and metadata.

    The log-likelihood tracked for convergence is the one evaluated at the
    parameters entering each E-step, so one density evaluation per iteration
    serves both the responsibilities and the stopping rule.
    """
    w, m, v, n_iter, converged = _run_chain_batch(
        [init], x, floor, config
    )[0]
    return w, m, v, n_iter, converged


def _run_chain_batch(inits, x, floor, config):
    """Run several same-order EM chains as one vectorized batch.

    Chains are mathematically independent; batching only amortizes array
    overhead.  Converged chains are compacted out of the working set, so
    results are identical for any batch composition.
    """
    n = x.size
    n_chains = len(inits)
    w_cur = np.stack([w for w, _, _ in inits]).astype(float)
    m_cur = np.stack([m for _, m, _ in inits]).astype(float)
    v_cur = np.stack([v for _, _, v in inits]).astype(float)
    idx = np.arange(n_chains)
    prev_ll = np.full(n_chains, -np.inf)
    out = [None] * n_chains

    for it in range(1, config.max_iter + 1):
        # E-step (log-space) and the log-likelihood at the entering params
        d = x[np.newaxis, :, np.newaxis] - m_cur[:, np.newaxis, :]
        lp = d * d
        lp *= (-0.5 / v_cur)[:, np.newaxis, :]
        lp += (np.log(w_cur) - 0.5 * np.log(v_cur) - 0.5 * _LOG_2PI)[:, np.newaxis, :]
        top = lp.max(axis=2)
        np.exp(lp - top[..., np.newaxis], out=lp)
        se = lp.sum(axis=2)
        ll = top.sum(axis=1) + np.log(se).sum(axis=1)
        resp = lp / se[..., np.newaxis]

        # M-step; dead components keep their parameters
        nk = resp.sum(axis=1)
        alive = nk > 1e-10
        nk_safe = np.where(alive, nk, 1.0)
        m_new = np.einsum("ank,n->ak", resp, x, optimize=False) / nk_safe
        m_new = np.where(alive, m_new, m_cur)
        d2 = x[np.newaxis, :, np.newaxis] - m_new[:, np.newaxis, :]
        v_new = np.einsum("ank,ank->ak", resp, d2 * d2, optimize=False) / nk_safe
        v_new = np.maximum(np.where(alive, v_new, v_cur), floor)
        w_new = np.clip(nk / n, 2.0 * WEIGHT_FLOOR, None)
        w_new = w_new / w_new.sum(axis=1, keepdims=True)
        w_cur, m_cur, v_cur = w_new, m_new, v_new

        tol_done = np.abs(ll - prev_ll) <= config.rel_tol * (1.0 + np.abs(ll))
        finish = np.logical_or(tol_done, it == config.max_iter)
        if finish.any():
            for j in np.flatnonzero(finish):
                out[idx[j]] = (w_cur[j], m_cur[j], v_cur[j], it, bool(tol_done[j]))
            keep = ~finish
            if not keep.any():
                break
            idx = idx[keep]
            prev_ll = ll[keep]
            w_cur, m_cur, v_cur = w_cur[keep], m_cur[keep], v_cur[keep]
        else:
            prev_ll = ll

    return out


def _finalize_chain(w, m, v, sample, floor):
    """Relabel, repair exact mean ties, and score a finished chain."""
    m2, order, tied = _strictify_means(m, v, float(np.ptp(sample.values)))
    params = MixtureParams(w[order], m2, v[order])
    degenerate = bool(np.min(params.variances) <= floor)
    return params, loglik(params, sample), degenerate, tied


def _quantile_init(x, k, rng=None, var_scale=1.0):
    """Sample-quantile means (jittered when an rng is given), pooled variance."""
    probs = (np.arange(k) + 0.5) / k
    means = np.quantile(x, probs)
    if rng is not None:
        means = means + 0.25 * np.std(x) * rng.standard_normal(k)
    variances = np.full(k, max(np.var(x) * var_scale, 1e-12))
    weights = np.full(k, 1.0 / k)
    return weights, np.sort(means), variances


def _clone_init(prev: MixtureParams):
    """Duplicate the heaviest component of a (k-1)-fit in two equal halves.

    The cloned mixture has the same density as the (k-1) solution, so the
    chain starts exactly at its log-likelihood and EM can only stay there or
    improve.
    """
    j = int(np.argmax(prev.weights))
    w = np.insert(prev.weights, j, prev.weights[j] / 2.0)
    w[j + 1] = w[j]
    m = np.insert(prev.means, j, prev.means[j])
    v = np.insert(prev.variances, j, prev.variances[j])
    return w, m, v


def fit(
    sample: Sample,
    k: int,
    config: EMConfig | None = None,
    prev_fit: FitResult | None = None,
) -> FitResult:
    """Fit a k-component mixture by restarted EM.

    ``prev_fit`` supplies the (k-1)-component solution used by the clone
    restart; when omitted for k >= 2 it is computed recursively.  The result
    is bitwise reproducible for a fixed (sample, k, config).
    """
    config = config or EMConfig()
    k = int(k)
    if k < 1:
        raise ValidationError("order k must be at least 1")
    if sample.n < 3 * k:
        raise ValidationError(f"need n >= 3k observations to fit k={k} (n={sample.n})")

    x = sample.values
    floor = variance_floor(sample, config)

    if k == 1:
        # Closed form: one EM step from any start lands on (mean, var).
        params = MixtureParams(
            np.array([1.0]),
            np.array([float(np.mean(x))]),
            np.array([max(float(np.var(x)), floor)]),
        )
        return FitResult(
            params=params,
            loglik=loglik(params, sample),
            n_iter=1,
            converged=True,
            n_restarts_used=1,
            degenerate_restarts=0,
        )

    if prev_fit is None:
        prev_fit = fit(sample, k - 1, config)

    inits = []
    for r in range(config.n_restarts):
        if r == 0:
            inits.append(_quantile_init(x, k))
        elif r == 1:
            inits.append(_clone_init(prev_fit.params))
        elif r == 2:
            inits.append(_quantile_init(x, k, var_scale=1.0 / (2 * k) ** 2))
        else:
            inits.append(_quantile_init(x, k, make_rng(config.seed, k, r)))

    # Selection tiers: clean chains first, then collapsed (duplicate-component)
    # chains, which still certify the nested likelihood, then degenerate ones.
    best_clean = None        # (loglik, params, n_iter, converged)
    best_collapsed = None
    best_degenerate = None
    n_degenerate = 0
    for w, m, v, n_iter, converged in _run_chain_batch(inits, x, floor, config):
        params, ll, degenerate, tied = _finalize_chain(w, m, v, sample, floor)
        entry = (ll, params, n_iter, converged)
        if degenerate:
            n_degenerate += 1
            if best_degenerate is None or ll > best_degenerate[0]:
                best_degenerate = entry
        elif tied:
            if best_collapsed is None or ll > best_collapsed[0]:
                best_collapsed = entry
        elif best_clean is None or ll > best_clean[0]:
            best_clean = entry

    if best_clean is not None:
        ll, params, n_iter, converged = best_clean
        return FitResult(params, ll, n_iter, converged, config.n_restarts, n_degenerate)
    if best_collapsed is not None:
        ll, params, n_iter, converged = best_collapsed
        return FitResult(
            params, ll, n_iter, converged, config.n_restarts, n_degenerate,
            collapsed=True,
        )
    ll, params, n_iter, _ = best_degenerate
    return FitResult(params, ll, n_iter, False, config.n_restarts, n_degenerate)
