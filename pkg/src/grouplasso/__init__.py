"""Group lasso and adaptive group lasso with selection-bound diagnostics."""

from importlib.metadata import PackageNotFoundError, version

from .adaptive import AdaptiveConfig, TwoStageResult, adaptive_fit, adaptive_path, adaptive_weights, two_stage
from .model import (
    GroupedCoefficients,
    GroupedDesign,
    GroupMetric,
    GroupStructure,
    map_back,
    orthonormalize_groups,
    read_grouped_csv,
    reparameterize,
    standardize,
)
from .selection import BicRecord, bic_score, select_by_bic
from .simulation import ExampleSpec, example_spec, generate, model_error, run_replications
from .solver import FitResult, PenaltyConfig, SolverOptions, fit, fit_path, kkt_residual, lambda_grid, lambda_max

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig",
    "BicRecord",
    "ExampleSpec",
    "FitResult",
    "GroupMetric",
    "GroupStructure",
    "GroupedCoefficients",
    "GroupedDesign",
    "PenaltyConfig",
    "SolverOptions",
    "TwoStageResult",
    "adaptive_fit",
    "adaptive_path",
    "adaptive_weights",
    "bic_score",
    "example_spec",
    "fit",
    "fit_path",
    "generate",
    "kkt_residual",
    "lambda_grid",
    "lambda_max",
    "map_back",
    "model_error",
    "orthonormalize_groups",
    "read_grouped_csv",
    "reparameterize",
    "run_replications",
    "select_by_bic",
    "standardize",
    "two_stage",
]
