"""Isotropic multiplicative matrix flows and their exact spectral laws.

The package is organized around one pipeline: sample an isotropic Gaussian
matrix ensemble (``ensemble``), drive a multiplicative stochastic flow with
it and extract finite-time exponents stably (``flow``), compare against the
asymptotic spectrum and stability diagram (``spectral``), and against the
closed-form finite-time laws of the complex ensemble (``exact``).  The
``cli`` module wraps all of it behind a seeded batch executable and
``validation`` holds the reduced-scale cross-checks.
"""

from .ensemble import (
    CovarianceEstimate,
    EnsembleParams,
    GaussianMatrix,
    IsotropyDecomposition,
    covariance,
    estimate_covariance,
    matrices_from_normals,
    normal_block_shape,
    sample,
    sample_batch,
)
from .errors import (
    AccuracyWarning,
    ConditioningError,
    ConfigError,
    DegenerateDensityError,
    DegenerateSourceError,
    DegenerateTrajectoryError,
    FlowOverflowError,
    IsoflowError,
    ParameterError,
    SingularityError,
)
from .exact import (
    ExactModel,
    GramKernel,
    build_kernel,
    gaussian_moment,
    gaussian_truncated_moment,
    jpdf,
    jpdf_general_log,
    jpdf_log,
    jpdf_log_batch,
    level_density,
    max_cdf,
    min_cdf,
    sample_gue_external_source,
)
from .flow import (
    EnsembleResult,
    EvolutionState,
    ExponentSpectrum,
    FlowParams,
    NoiseCursor,
    auto_qr_period,
    drift_rate,
    evolve,
    exponents,
    exponents_direct,
    initial_state,
    ito_correction,
    renormalize_qr,
    run_ensemble,
    run_trajectory,
    step_ito,
    step_stratonovich,
    top_exponent,
)
from .spectral import (
    LyapunovSpectrum,
    PhasePoint,
    classify,
    coth_cyclic_identity,
    fp_generator_apply,
    fp_residual_pair,
    lyapunov_infinite,
    lyapunov_rates,
    square_law_density,
    square_law_support,
)
from .streams import substream, trajectory_stream
from .validation import CheckResult, run_validation

__version__ = "0.1.0"

__all__ = [
    "AccuracyWarning",
    "CheckResult",
    "ConditioningError",
    "ConfigError",
    "CovarianceEstimate",
    "DegenerateDensityError",
    "DegenerateSourceError",
    "DegenerateTrajectoryError",
    "EnsembleParams",
    "EnsembleResult",
    "EvolutionState",
    "ExactModel",
    "ExponentSpectrum",
    "FlowOverflowError",
    "FlowParams",
    "GaussianMatrix",
    "GramKernel",
    "IsoflowError",
    "IsotropyDecomposition",
    "LyapunovSpectrum",
    "NoiseCursor",
    "ParameterError",
    "PhasePoint",
    "SingularityError",
    "auto_qr_period",
    "build_kernel",
    "classify",
    "coth_cyclic_identity",
    "covariance",
    "drift_rate",
    "estimate_covariance",
    "evolve",
    "exponents",
    "exponents_direct",
    "fp_generator_apply",
    "fp_residual_pair",
    "gaussian_moment",
    "gaussian_truncated_moment",
    "initial_state",
    "ito_correction",
    "jpdf",
    "jpdf_general_log",
    "jpdf_log",
    "jpdf_log_batch",
    "level_density",
    "lyapunov_infinite",
    "lyapunov_rates",
    "matrices_from_normals",
    "max_cdf",
    "min_cdf",
    "normal_block_shape",
    "renormalize_qr",
    "run_ensemble",
    "run_trajectory",
    "run_validation",
    "sample",
    "sample_batch",
    "sample_gue_external_source",
    "square_law_density",
    "square_law_support",
    "step_ito",
    "step_stratonovich",
    "substream",
    "top_exponent",
    "trajectory_stream",
]
