"""Measurement error correction and sensitivity analysis for linear models.

The package corrects the attenuation that random measurement error in an
exposure variable induces in its regression coefficient, via regression
calibration or simulation-extrapolation, estimates the error variance from
replicate measurements when available, runs prior-based sensitivity analyses
when it is not, and ships a Monte Carlo harness that benchmarks the methods
on synthetic data.
"""

from .correct import (
    DEFAULT_LAMBDA_GRID,
    CorrectionResult,
    ErrorVariance,
    SimexConfig,
    bootstrap_ci,
    conditional_exposure_variance,
    correct_rc,
    correct_simex,
    estimate_tau2_from_replicates,
    extrapolate,
    fit_uncorrected,
    simex_estimates_per_lambda,
)
from .data import AnalysisSpec, Dataset, design_matrix, load_csv, write_csv
from .errors import (
    BootstrapError,
    DataError,
    InfeasibleCorrectionError,
    InsufficientDataError,
    InsufficientReplicatesError,
    MecalibError,
    SimulationError,
    SingularDesignError,
)
from .linreg import FitResult, ols_fit, residual_variance_of, wald_interval
from .sensitivity import (
    ErrorVarianceDistribution,
    SensitivityDraw,
    SensitivityResult,
    emit_plot_data,
    run_sensitivity,
    sample_tau2,
    triangular_inverse_cdf,
    trapezoidal_inverse_cdf,
    uniform_inverse_cdf,
)
from .simstudy import (
    MethodPerformance,
    PerformanceSummary,
    ScenarioConfig,
    ScenarioDerived,
    derive_scenario,
    emit_study_report,
    generate_dataset,
    load_scenarios,
    run_scenario,
    scenario_grid,
    scenario_spec,
)
from .util import DEFAULT_SEED, substream

__version__ = "0.1.0"

__all__ = [
    "AnalysisSpec",
    "BootstrapError",
    "CorrectionResult",
    "DEFAULT_LAMBDA_GRID",
    "DEFAULT_SEED",
    "DataError",
    "Dataset",
    "ErrorVariance",
    "ErrorVarianceDistribution",
    "FitResult",
    "InfeasibleCorrectionError",
    "InsufficientDataError",
    "InsufficientReplicatesError",
    "MecalibError",
    "MethodPerformance",
    "PerformanceSummary",
    "ScenarioConfig",
    "ScenarioDerived",
    "SensitivityDraw",
    "SensitivityResult",
    "SimexConfig",
    "SimulationError",
    "SingularDesignError",
    "bootstrap_ci",
    "conditional_exposure_variance",
    "correct_rc",
    "correct_simex",
    "derive_scenario",
    "design_matrix",
    "emit_plot_data",
    "emit_study_report",
    "estimate_tau2_from_replicates",
    "extrapolate",
    "fit_uncorrected",
    "generate_dataset",
    "load_csv",
    "load_scenarios",
    "ols_fit",
    "residual_variance_of",
    "run_scenario",
    "run_sensitivity",
    "sample_tau2",
    "scenario_grid",
    "scenario_spec",
    "simex_estimates_per_lambda",
    "substream",
    "trapezoidal_inverse_cdf",
    "triangular_inverse_cdf",
    "uniform_inverse_cdf",
    "wald_interval",
    "write_csv",
]
