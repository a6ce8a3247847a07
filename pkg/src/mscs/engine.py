"""Construction of the model selection confidence set for the mixture order.

A reference order k_hat is picked by an information criterion, every other
candidate order k is screened with the penalized likelihood ratio

    LRT*(k_hat, k) = 2 (loglik_k - loglik_khat) - delta_n(k_hat, k),

and the set keeps the candidates whose statistic clears the lower-tail
alpha-quantile of the weighted chi-squared null.  For candidates below the
reference the statistic flips sign, so the null weights are negated.  The
reported set is the interval {k_lower, ..., k_upper}; per-candidate pass
flags stay visible in the records.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .em import EMConfig, FitResult, fit
from .errors import NumericalError, SingularMatrixError, ValidationError
from .gmm import Sample, n_free_params
from .nulldist import (
    DEFAULT_MC_DRAWS,
    LambdaWeights,
    WeightedChiSq,
    build_w,
    eigvals,
    wchisq_quantile,
)
from .info import (
    InfoMatrices,
    info_matrices,
    tic_effective_params,
    tic_effective_params_from,
)
from .rng import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 8


class OrderCache:
    """Memoizes per-order information matrices within one screening pass.

    Screening k_max candidates touches the reference order's matrices over
    and over; sharing one cache across screen calls avoids recomputing them.
    """

    def __init__(self, sample: Sample):
        self.sample = sample
        self._infos: dict[int, InfoMatrices] = {}
        self._ptilde: dict[int, float] = {}

    def info(self, fit_result: FitResult) -> InfoMatrices:
        k = fit_result.k
        if k not in self._infos:
            self._infos[k] = info_matrices(fit_result.params, self.sample)
        return self._infos[k]

    def ptilde(self, fit_result: FitResult) -> float:
        k = fit_result.k
        if k not in self._ptilde:
            self._ptilde[k] = tic_effective_params_from(self.info(fit_result), k)
        return self._ptilde[k]


class PenaltyKind(enum.Enum):
    """Information criterion family used for reference selection or penalties."""

    AIC = "aic"
    BIC = "bic"
    TIC = "tic"

    @classmethod
    def parse(cls, name: str) -> "PenaltyKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValidationError(f"unknown penalty kind {name!r}") from None


@dataclass(frozen=True, eq=False)
class TestRecord:
    """Outcome of screening one candidate order against the reference."""

    k: int
    side: str                     # "smaller" | "larger" | "reference"
    lrt: float
    delta: float
    lrt_star: float
    lambdas: tuple[float, ...]
    q_alpha: float
    passed: bool
    diagnostic: str | None = None


@dataclass(frozen=True, eq=False)
class MSCSResult:
    """Confidence set for the order plus everything needed to audit it."""

    k_hat: int
    k_lower: int
    k_upper: int
    gamma: tuple[int, ...]
    records: tuple[TestRecord, ...]
    alpha: float
    penalty: PenaltyKind
    ref_kind: PenaltyKind
    criterion_values: tuple[float, ...]
    fits: tuple[FitResult, ...]

    @property
    def card(self) -> int:
        return len(self.gamma)


def criterion_value(fit_result: FitResult, kind: PenaltyKind, sample: Sample) -> float:
    """AIC/BIC/TIC value of a fit; smaller is better."""
    ll = fit_result.loglik
    p = n_free_params(fit_result.k)
    if kind is PenaltyKind.AIC:
        return -2.0 * ll + 2.0 * p
    if kind is PenaltyKind.BIC:
        return -2.0 * ll + math.log(sample.n) * p
    return -2.0 * ll + 2.0 * tic_effective_params(fit_result.params, sample)


def select_reference(
    fits: list[FitResult], kind: PenaltyKind, sample: Sample
) -> int:
    """Order minimizing the criterion; ties break toward the smaller order."""
    best_k, best_value = fits[0].k, criterion_value(fits[0], kind, sample)
    for f in fits[1:]:
        value = criterion_value(f, kind, sample)
        if value < best_value:
            best_k, best_value = f.k, value
    return best_k


def delta_n(
    kind: PenaltyKind,
    fit_ref: FitResult,
    fit_k: FitResult,
    sample: Sample,
    cache: OrderCache | None = None,
) -> float:
    """Complexity penalty difference between candidate and reference."""
    if fit_k.k == fit_ref.k:
        return 0.0
    if kind is PenaltyKind.AIC:
        return 2.0 * (n_free_params(fit_k.k) - n_free_params(fit_ref.k))
    if kind is PenaltyKind.BIC:
        return math.log(sample.n) * (n_free_params(fit_k.k) - n_free_params(fit_ref.k))
    cache = cache if cache is not None else OrderCache(sample)
    return 2.0 * (cache.ptilde(fit_k) - cache.ptilde(fit_ref))


def screen(
    fit_ref: FitResult,
    fit_k: FitResult,
    sample: Sample,
    alpha: float,
    kind: PenaltyKind,
    mc_seed: int,
    mc_draws: int = DEFAULT_MC_DRAWS,
    cache: OrderCache | None = None,
    delta_override: float | None = None,
) -> TestRecord:
    """Screen one candidate order against the reference fit.

    Numerical failures (singular average Hessian, complex spectrum) turn
    into a failing record with the diagnostic attached instead of aborting
    the whole set; a TIC penalty that cannot be computed (or that carries
    the wrong sign) falls back to AIC for this record with a logged
    warning.  ``delta_override`` lets the caller supply a penalty computed
    from a jointly constrained effective-parameter profile.
    """
    if fit_k.k == fit_ref.k:
        raise ValidationError("candidate order must differ from the reference")
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")

    cache = cache if cache is not None else OrderCache(sample)
    side = "smaller" if fit_k.k < fit_ref.k else "larger"
    lrt = 2.0 * (fit_k.loglik - fit_ref.loglik)

    if fit_k.collapsed:
        # Duplicate components: the candidate model is not locally identified
        # at its fit, so the derivative-based null distribution is undefined.
        diag = "candidate fit collapsed to duplicate components; screen not computable"
        logger.warning("screen k=%d: %s", fit_k.k, diag)
        delta = delta_n(PenaltyKind.AIC, fit_ref, fit_k, sample)
        return TestRecord(
            k=fit_k.k, side=side, lrt=lrt, delta=delta, lrt_star=lrt - delta,
            lambdas=(), q_alpha=math.nan, passed=False, diagnostic=diag,
        )

    notes = []
    try:
        if delta_override is not None:
            delta = delta_override
        else:
            delta = delta_n(kind, fit_ref, fit_k, sample, cache)
        # The screening framework assumes sign(delta) = sign(k - k_hat); an
        # estimated TIC penalty violating that reflects a breakdown of the
        # effective-parameter estimate, not a cheaper model.
        if kind is PenaltyKind.TIC and (
            (fit_k.k > fit_ref.k) != (delta > 0.0) or delta == 0.0
        ):
            raise SingularMatrixError(
                f"tic penalty {delta:.3g} has the wrong sign", order=fit_k.k
            )
    except SingularMatrixError as exc:
        delta = delta_n(PenaltyKind.AIC, fit_ref, fit_k, sample)
        notes.append(f"tic penalty fell back to aic ({exc})")
        logger.warning("screen k=%d: %s", fit_k.k, notes[-1])
    lrt_star = lrt - delta

    # The weighted chi-squared limit is stated for 2(loglik_small - loglik_large):
    # its mean is tr(W) = ptilde_small - ptilde_large.  Our statistic is
    # 2(loglik_k - loglik_ref), so the weights flip sign exactly when the
    # candidate is the larger model.
    try:
        if fit_k.k < fit_ref.k:
            w = build_w(fit_k, fit_ref, sample,
                        info_small=cache.info(fit_k), info_large=cache.info(fit_ref))
            lam = eigvals(w)
        else:
            w = build_w(fit_ref, fit_k, sample,
                        info_small=cache.info(fit_ref), info_large=cache.info(fit_k))
            lam = eigvals(w).negated()
        dist = WeightedChiSq(lam, mc_draws=mc_draws, seed=mc_seed)
        q_alpha = wchisq_quantile(dist, alpha)
        # Fits are likelihood-nested, so the realized statistic is >= 0 for
        # larger candidates and <= 0 for smaller ones; the retention
        # threshold is projected onto that support.
        if fit_k.k > fit_ref.k:
            q_alpha = max(q_alpha, 0.0)
        else:
            q_alpha = min(q_alpha, 0.0)
        passed = lrt_star > q_alpha
        lambdas = tuple(float(v) for v in lam.lambdas)
    except NumericalError as exc:
        notes.append(str(exc))
        logger.warning("screen k=%d failed: %s", fit_k.k, exc)
        q_alpha = math.nan
        passed = False
        lambdas = ()

    return TestRecord(
        k=fit_k.k,
        side=side,
        lrt=lrt,
        delta=delta,
        lrt_star=lrt_star,
        lambdas=lambdas,
        q_alpha=q_alpha,
        passed=passed,
        diagnostic="; ".join(notes) or None,
    )


def _gated_tic_deltas(
    fits: list[FitResult], k_hat: int, sample: Sample, cache: OrderCache
) -> dict[int, float]:
    """TIC penalties validated along the order path, with AIC fallbacks.

    The candidate orders are likelihood-nested, so effective parameter counts
    cannot genuinely decrease with k.  A TIC delta is trusted for candidate k
    only while the estimated profile stays monotone on the whole path from
    the reference to k; the first violation (or missing estimate) marks the
    effective-parameter estimates beyond it as unreliable, and those records
    use the AIC penalty instead.
    """
    ptilde = {}
    for f in fits:
        if f.collapsed:
            continue
        try:
            ptilde[f.k] = cache.ptilde(f)
        except SingularMatrixError:
            continue
    deltas: dict[int, float] = {}
    if k_hat not in ptilde:
        return deltas
    base = ptilde[k_hat]

    def aic(k):
        return 2.0 * (n_free_params(k) - n_free_params(k_hat))

    prev, valid = base, True
    for k in range(k_hat + 1, max(f.k for f in fits) + 1):
        if valid and k in ptilde and ptilde[k] >= prev:
            deltas[k] = 2.0 * (ptilde[k] - base)
            prev = ptilde[k]
        else:
            if valid:
                logger.warning(
                    "tic profile breaks at k=%d; aic penalty for k>=%d", k, k
                )
            valid = False
            deltas[k] = aic(k)
    prev, valid = base, True
    for k in range(k_hat - 1, 0, -1):
        if valid and k in ptilde and ptilde[k] <= prev:
            deltas[k] = 2.0 * (ptilde[k] - base)
            prev = ptilde[k]
        else:
            if valid:
                logger.warning(
                    "tic profile breaks at k=%d; aic penalty for k<=%d", k, k
                )
            valid = False
            deltas[k] = aic(k)
    return deltas


def _reference_record(k: int) -> TestRecord:
    return TestRecord(
        k=k,
        side="reference",
        lrt=0.0,
        delta=0.0,
        lrt_star=0.0,
        lambdas=(),
        q_alpha=math.nan,
        passed=True,
    )


def assemble_gamma(records: list[TestRecord], k_hat: int) -> tuple[int, int]:
    """Interval endpoints: min passing candidate below k_hat, max above."""
    lower = [r.k for r in records if r.k < k_hat and r.passed]
    upper = [r.k for r in records if r.k > k_hat and r.passed]
    return (min(lower) if lower else k_hat, max(upper) if upper else k_hat)


def build_mscs(
    sample: Sample,
    k_max: int = DEFAULT_K_MAX,
    alpha: float = 0.05,
    penalty: PenaltyKind = PenaltyKind.TIC,
    em_config: EMConfig | None = None,
    ref_kind: PenaltyKind = PenaltyKind.BIC,
    mc_draws: int = DEFAULT_MC_DRAWS,
) -> MSCSResult:
    """Fit all orders up to k_max and assemble the confidence set.

    k_max is capped at floor(n/3) (with a warning) so every order remains
    fittable.  The Monte Carlo seed of each screening comparison derives
    from (k_hat, k, n, em seed), which makes the whole result reproducible.
    """
    em_config = em_config or EMConfig()
    k_max = int(k_max)
    if k_max < 1:
        raise ValidationError("k_max must be at least 1")
    cap = sample.n // 3
    if cap < 1:
        raise ValidationError("sample too small to fit any mixture order")
    if k_max > cap:
        logger.warning("k_max=%d capped to floor(n/3)=%d", k_max, cap)
        k_max = cap

    fits: list[FitResult] = []
    prev = None
    for k in range(1, k_max + 1):
        prev = fit(sample, k, em_config, prev_fit=prev)
        fits.append(prev)

    crit_values = tuple(criterion_value(f, ref_kind, sample) for f in fits)
    k_hat = fits[int(np.argmin(crit_values))].k
    fit_ref = fits[k_hat - 1]

    cache = OrderCache(sample)
    deltas = (
        _gated_tic_deltas(fits, k_hat, sample, cache)
        if penalty is PenaltyKind.TIC
        else {}
    )
    records = []
    for f in fits:
        if f.k == k_hat:
            records.append(_reference_record(k_hat))
        else:
            mc_seed = derive_seed(k_hat, f.k, sample.n, em_config.seed)
            records.append(
                screen(
                    fit_ref, f, sample, alpha, penalty, mc_seed, mc_draws, cache,
                    delta_override=deltas.get(f.k),
                )
            )

    k_lower, k_upper = assemble_gamma(records, k_hat)
    return MSCSResult(
        k_hat=k_hat,
        k_lower=k_lower,
        k_upper=k_upper,
        gamma=tuple(range(k_lower, k_upper + 1)),
        records=tuple(records),
        alpha=alpha,
        penalty=penalty,
        ref_kind=ref_kind,
        criterion_values=crit_values,
        fits=tuple(fits),
    )
