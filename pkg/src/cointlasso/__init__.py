"""Adaptive Lasso variable selection for cointegrating regressions."""

from .dgp import (
    Dataset,
    DgpSpec,
    ErrorKind,
    ErrorSpec,
    builtin_model,
    long_run_variance,
    read_csv,
    simulate,
    toeplitz_cov,
    write_csv,
)
from .estimator import (
    FitResult,
    PenaltyConfig,
    SingularSystemError,
    adaptive_lasso_fit,
    build_penalty_matrix,
    lqa_step,
    objective,
    ridge_fit,
    sandwich_cov,
)

__version__ = "0.1.0"
