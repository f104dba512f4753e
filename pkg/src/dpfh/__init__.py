"""Small area estimation on an estimated power-transformed scale.

Area-level direct estimates that are positive and skewed rarely satisfy
the normality that the classical Fay-Herriot model assumes.  This package
fits that model to dual-power-transformed data with the transformation
parameter estimated jointly with the variance components, predicts the
per-area means by EBLUP, and attaches second-order unbiased
prediction-error estimates via a parametric bootstrap.
"""

from .estimator import (
    FitResult,
    TransformedFayHerriot,
    fit_model,
    profile_score,
)
from .exceptions import DataError, DpfhError, ParseError, SolverError
from .model import AreaData, ModelParams, gls_beta, log_likelihood, score_lambda
from .mse import (
    MseBreakdown,
    MseResult,
    PredictorGradients,
    bootstrap_dataset,
    estimate_mse,
    g_terms,
    predictor_gradients,
)
from .panels import HistoricalPanel, SamplingVarianceResult, estimate_sampling_variances
from .prediction import Prediction, best_predictor, eblup
from .simulation import (
    ScenarioConfig,
    StudyReport,
    generate_replicate,
    run_estimation_study,
    run_mse_estimator_study,
    run_true_mse_study,
    run_zero_estimate_sweep,
)
from .transforms import (
    LAMBDA_EPS,
    LAMBDA_MAX,
    DualPowerTransform,
    IntegrabilityReport,
    LogTransform,
    TransformDerivatives,
    check_integrability,
    make_transform,
)
from .variance import (
    VarianceEstimate,
    asymptotic_variance,
    estimate_re_variance,
    expected_lambda_slope,
)

__version__ = "0.1.0"

__all__ = [
    "AreaData",
    "DataError",
    "DpfhError",
    "DualPowerTransform",
    "FitResult",
    "HistoricalPanel",
    "IntegrabilityReport",
    "LAMBDA_EPS",
    "LAMBDA_MAX",
    "LogTransform",
    "ModelParams",
    "MseBreakdown",
    "MseResult",
    "ParseError",
    "Prediction",
    "PredictorGradients",
    "SamplingVarianceResult",
    "ScenarioConfig",
    "SolverError",
    "StudyReport",
    "TransformDerivatives",
    "TransformedFayHerriot",
    "VarianceEstimate",
    "best_predictor",
    "bootstrap_dataset",
    "check_integrability",
    "eblup",
    "estimate_mse",
    "estimate_re_variance",
    "estimate_sampling_variances",
    "expected_lambda_slope",
    "fit_model",
    "g_terms",
    "generate_replicate",
    "gls_beta",
    "log_likelihood",
    "make_transform",
    "predictor_gradients",
    "profile_score",
    "run_estimation_study",
    "run_mse_estimator_study",
    "run_true_mse_study",
    "run_zero_estimate_sweep",
    "score_lambda",
    "asymptotic_variance",
]
