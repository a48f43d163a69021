"""GEE estimation with optimal Poisson subsampling for balanced panels."""

__version__ = "0.1.0"

from .benchmark import (
    BenchmarkResult,
    MethodCell,
    SimulationConfig,
    compute_mse,
    run_benchmark,
    write_result_csv,
)
from .correlation import (
    StandardizedResiduals,
    Structure,
    WorkingCorrelation,
    build_correlation,
    estimate_alpha_gpl,
    estimate_alpha_moment,
    estimate_dispersion,
    estimate_unstructured,
    feasible_interval,
)
from .errors import (
    BenchmarkError,
    ConvergenceError,
    DataError,
    DegenerateError,
    DomainError,
    GeesubError,
    InfeasibleError,
    RankError,
)
from .families import BERNOULLI_LOGIT, GAUSSIAN_IDENTITY, ResponseFamily, get_family
from .inference import (
    ConfidenceInterval,
    SandwichCovariance,
    confidence_interval,
    meat_full,
    sandwich_full,
    sandwich_subsample,
)
from .panel import (
    DesignDiagnostics,
    PanelDataset,
    load_csv,
    validate_conditions,
    write_csv,
)
from .simulate import (
    generate_covariates,
    generate_responses,
    make_beta0,
    simulate_panel,
)
from .solver import (
    GeeFit,
    SubjectWeights,
    compute_residuals,
    fisher_information,
    fit,
    score,
)
from .subsampling import (
    HScores,
    SubsampleDraw,
    SubsamplePlan,
    TwoStepResult,
    capped_probabilities,
    compute_h_scores,
    estimate_psi,
    poisson_draw,
    shrinkage_probabilities,
    subsample_fit,
    two_step_fit,
    uniform_plan,
)

__all__ = [
    "__version__",
    "BenchmarkResult",
    "MethodCell",
    "SimulationConfig",
    "compute_mse",
    "run_benchmark",
    "write_result_csv",
    "StandardizedResiduals",
    "Structure",
    "WorkingCorrelation",
    "build_correlation",
    "estimate_alpha_gpl",
    "estimate_alpha_moment",
    "estimate_dispersion",
    "estimate_unstructured",
    "feasible_interval",
    "BenchmarkError",
    "ConvergenceError",
    "DataError",
    "DegenerateError",
    "DomainError",
    "GeesubError",
    "InfeasibleError",
    "RankError",
    "BERNOULLI_LOGIT",
    "GAUSSIAN_IDENTITY",
    "ResponseFamily",
    "get_family",
    "ConfidenceInterval",
    "SandwichCovariance",
    "confidence_interval",
    "meat_full",
    "sandwich_full",
    "sandwich_subsample",
    "DesignDiagnostics",
    "PanelDataset",
    "load_csv",
    "validate_conditions",
    "write_csv",
    "generate_covariates",
    "generate_responses",
    "make_beta0",
    "simulate_panel",
    "GeeFit",
    "SubjectWeights",
    "compute_residuals",
    "fisher_information",
    "fit",
    "score",
    "HScores",
    "SubsampleDraw",
    "SubsamplePlan",
    "TwoStepResult",
    "capped_probabilities",
    "compute_h_scores",
    "estimate_psi",
    "poisson_draw",
    "shrinkage_probabilities",
    "subsample_fit",
    "two_step_fit",
    "uniform_plan",
]
