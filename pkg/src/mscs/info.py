"""Scores, Hessians, and information-style matrices of the mixture log-density.

All derivatives are taken with respect to the free coordinates
(pi_1..pi_{k-1}, mu_1..mu_k, var_1..var_k).  Writing g_j = phi_j / f for the
component density ratio, the analytic gradient of log f is

    d/dpi_j   = g_j - g_k                      (j < k)
    d/dmu_j   = pi_j g_j (x - mu_j) / var_j
    d/dvar_j  = pi_j g_j ((x - mu_j)^2 - var_j) / (2 var_j^2)

Hessians are central finite differences of that analytic score.  Sample
averages sort the observations first, which makes every matrix here exactly
invariant under reordering of the input sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve
from scipy.special import logsumexp

from .errors import SingularMatrixError, ValidationError
from .gmm import MixtureParams, Sample, _component_logpdf, pack

COND_LIMIT = 1e12
_FD_STEP = float(np.finfo(float).eps) ** (1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class InfoMatrices:
    """Sample-average Hessian (a_hat) and score outer product (b_hat)."""

    a_hat: np.ndarray
    b_hat: np.ndarray
    n: int

    def __post_init__(self):
        a, b = self.a_hat, self.b_hat
        scale = np.abs(a).max() + 1.0
        if np.abs(a - a.T).max() > 1e-8 * scale:
            raise ValidationError("a_hat is not symmetric within tolerance")
        min_eig = float(np.linalg.eigvalsh(b).min())
        if min_eig < -1e-8 * np.trace(b):
            raise ValidationError("b_hat is not positive semidefinite within tolerance")


@dataclass(frozen=True, eq=False)
class CrossMatrix:
    """Average cross product of scores from two models on the same sample."""

    c_hat: np.ndarray
    k1: int
    k2: int


def _score_matrix_raw(weights, means, variances, x) -> np.ndarray:
    """Score rows for each observation; raw arrays, no invariant checks."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = len(means)
    lp = _component_logpdf(means, variances, x)
    logf = logsumexp(lp + np.log(weights), axis=-1)
    g = np.exp(lp - logf[:, np.newaxis])           # phi_j / f
    d = x[:, np.newaxis] - means
    d_mu = weights * g * d / variances
    d_var = weights * g * (d * d - variances) / (2.0 * variances * variances)
    d_pi = g[:, : k - 1] - g[:, k - 1 :]
    return np.concatenate([d_pi, d_mu, d_var], axis=1)


def score_matrix(params: MixtureParams, x) -> np.ndarray:
    """Scores of log f at each point of x, shape (n, p_k)."""
    return _score_matrix_raw(params.weights, params.means, params.variances, x)


def score(params: MixtureParams, x: float) -> np.ndarray:
    """Analytic gradient of log f(x) in the free coordinates."""
    return score_matrix(params, x)[0]


def _split_theta(theta, k):
    w_free = theta[: k - 1]
    weights = np.concatenate([w_free, [1.0 - w_free.sum()]])
    return weights, theta[k - 1 : 2 * k - 1], theta[2 * k - 1 :]


def _hessian_stack(params: MixtureParams, x) -> np.ndarray:
    """Per-observation Hessians via central differences of the analytic score.

    Step per coordinate: cbrt(eps) * max(1, |theta_j|), shrunk where needed
    so perturbed weights (including the implied last one) and variances stay
    strictly positive.  Each Hessian is symmetrized as (H + H^T) / 2.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = params.k
    theta = pack(params)
    p = theta.size
    h = _FD_STEP * np.maximum(1.0, np.abs(theta))
    w_last = float(params.weights[-1])
    for j in range(k - 1):
        h[j] = min(h[j], theta[j] / 2.0, w_last / 2.0)
    for j in range(2 * k - 1, p):
        h[j] = min(h[j], theta[j] / 2.0)
    hess = np.empty((x.size, p, p))
    for j in range(p):
        tp = theta.copy()
        tm = theta.copy()
        tp[j] = theta[j] + h[j]
        tm[j] = theta[j] - h[j]
        step = tp[j] - tm[j]
        s_plus = _score_matrix_raw(*_split_theta(tp, k), x)
        s_minus = _score_matrix_raw(*_split_theta(tm, k), x)
        hess[:, :, j] = (s_plus - s_minus) / step
    return 0.5 * (hess + hess.transpose(0, 2, 1))


def hessian_logf(params: MixtureParams, x: float) -> np.ndarray:
    """Symmetrized Hessian of log f(x), shape (p_k, p_k)."""
    return _hessian_stack(params, x)[0]


def info_matrices(params: MixtureParams, sample: Sample) -> InfoMatrices:
    """A_hat = mean Hessian, B_hat = mean score outer product."""
    xs = np.sort(sample.values)
    n = xs.size
    s = score_matrix(params, xs)
    b_hat = np.einsum("ni,nj->ij", s, s, optimize=False) / n
    a_hat = np.add.reduce(_hessian_stack(params, xs), axis=0) / n
    return InfoMatrices(a_hat=a_hat, b_hat=b_hat, n=n)


def cross_matrix(
    params1: MixtureParams, params2: MixtureParams, sample: Sample
) -> CrossMatrix:
    """Average of score1(x) score2(x)^T over the sample, shape (p_k1, p_k2)."""
    xs = np.sort(sample.values)
    s1 = score_matrix(params1, xs)
    s2 = score_matrix(params2, xs)
    c_hat = np.einsum("ni,nj->ij", s1, s2, optimize=False) / xs.size
    return CrossMatrix(c_hat=c_hat, k1=params1.k, k2=params2.k)


def _check_invertible(a_hat: np.ndarray, order: int) -> None:
    if not np.all(np.isfinite(a_hat)):
        raise SingularMatrixError("average Hessian has non-finite entries", order=order)
    try:
        cond = float(np.linalg.cond(a_hat))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"condition estimate failed ({exc})", order=order)
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise SingularMatrixError(
            f"average Hessian numerically singular (cond={cond:.3g})", order=order
        )


def tic_effective_params_from(info: InfoMatrices, order: int) -> float:
    """tr{(-A_hat)^{-1} B_hat} from precomputed matrices."""
    _check_invertible(info.a_hat, order)
    return float(np.trace(solve(-info.a_hat, info.b_hat)))


def tic_effective_params(params: MixtureParams, sample: Sample) -> float:
    """Effective parameter count tr{(-A_hat)^{-1} B_hat}.

    The sign flip on A_hat makes the count reduce to p_k under correct
    specification.  Solved as a linear system behind a condition-number
    guard; a singular A_hat raises SingularMatrixError.
    """
    return tic_effective_params_from(info_matrices(params, sample), params.k)
