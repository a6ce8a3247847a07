"""Gaussian mixture order selection with model selection confidence sets."""

__version__ = "0.1.0"

from .em import EMConfig, FitResult, em_step, fit, responsibilities
from .engine import (
    MSCSResult,
    PenaltyKind,
    TestRecord,
    build_mscs,
    criterion_value,
    delta_n,
    screen,
    select_reference,
)
from .errors import (
    DataFormatError,
    MscsError,
    NonRealSpectrumError,
    NumericalError,
    SingularMatrixError,
    ValidationError,
)
from .gmm import (
    MixtureParams,
    Sample,
    log_density,
    loglik,
    make_mixture,
    mixture_cdf,
    pack,
    sample_from,
    unpack,
)
from .info import (
    CrossMatrix,
    InfoMatrices,
    cross_matrix,
    hessian_logf,
    info_matrices,
    score,
    tic_effective_params,
)
from .nulldist import (
    LambdaWeights,
    WeightedChiSq,
    WMatrix,
    build_w,
    eigvals,
    wchisq_cdf,
    wchisq_quantile,
)
from .sim import (
    ScenarioSpec,
    SimConfig,
    SimResult,
    kl_divergence,
    run_replicate,
    run_simulation,
    scenario_params,
    scenario_table,
)

__all__ = [
    "__version__",
    "EMConfig", "FitResult", "em_step", "fit", "responsibilities",
    "MSCSResult", "PenaltyKind", "TestRecord", "build_mscs",
    "criterion_value", "delta_n", "screen", "select_reference",
    "DataFormatError", "MscsError", "NonRealSpectrumError",
    "NumericalError", "SingularMatrixError", "ValidationError",
    "MixtureParams", "Sample", "log_density", "loglik", "make_mixture",
    "mixture_cdf", "pack", "sample_from", "unpack",
    "CrossMatrix", "InfoMatrices", "cross_matrix", "hessian_logf",
    "info_matrices", "score", "tic_effective_params",
    "LambdaWeights", "WeightedChiSq", "WMatrix", "build_w", "eigvals",
    "wchisq_cdf", "wchisq_quantile",
    "ScenarioSpec", "SimConfig", "SimResult", "kl_divergence",
    "run_replicate", "run_simulation", "scenario_params", "scenario_table",
]
