"""torusot: diffusion empirical measures on flat tori and their Wasserstein
distances -- exact and entropic transport solvers, spectral functionals,
limit-law sampling, and a reproducible experiment harness."""

from ._version import __version__
from .diffusion import (
    CosinePotential,
    DiscreteMeasure,
    EmpiricalSpectrum,
    SamplePath,
    empirical_measure_grid,
    psi_functionals,
    simulate_path,
    smoothed_density_coeffs,
    sup_deviation,
    time_sampled_measure,
    uniform_measure,
)
from .errors import ArgumentError, CapacityError, DivergenceError, NumericError, ValidationError
from .experiments import ExperimentConfig, RunRecord, default_config, emit_report, run_experiment
from .geometry import (
    CirclePotentialSpectrum,
    ModeSet,
    SpectralMode,
    circle_potential_eigensolve,
    enumerate_modes,
    eigenfunction_eval,
    geodesic_distance,
    heat_kernel,
    normalize_angles,
    weyl_bound_estimate,
)
from .limits import (
    LimitSample,
    RateFit,
    ks_distance,
    rate_fit,
    rate_function_circle,
    sample_limit_law,
)
from .spectral import (
    SpectralEstimate,
    estimate_lambda1,
    expected_xi_stationary,
    laplace_transform_spectral,
    limit_series,
    sobolev_energy,
    xi_r,
)
from .transport import (
    TransportResult,
    dual_lower_bound_best,
    dual_lower_bound_w2,
    hopf_lax,
    mix_with_uniform,
    sinkhorn_w2,
    w1_lp_small,
    w2_circle_exact,
    w2_upper_bound_fourier,
)

__all__ = [
    "__version__",
    "ArgumentError",
    "CapacityError",
    "CirclePotentialSpectrum",
    "CosinePotential",
    "DiscreteMeasure",
    "DivergenceError",
    "EmpiricalSpectrum",
    "ExperimentConfig",
    "LimitSample",
    "ModeSet",
    "NumericError",
    "RateFit",
    "RunRecord",
    "SamplePath",
    "SpectralEstimate",
    "SpectralMode",
    "TransportResult",
    "ValidationError",
    "circle_potential_eigensolve",
    "default_config",
    "dual_lower_bound_best",
    "dual_lower_bound_w2",
    "eigenfunction_eval",
    "emit_report",
    "empirical_measure_grid",
    "enumerate_modes",
    "estimate_lambda1",
    "expected_xi_stationary",
    "geodesic_distance",
    "heat_kernel",
    "hopf_lax",
    "ks_distance",
    "laplace_transform_spectral",
    "limit_series",
    "mix_with_uniform",
    "normalize_angles",
    "psi_functionals",
    "rate_fit",
    "rate_function_circle",
    "run_experiment",
    "sample_limit_law",
    "simulate_path",
    "sinkhorn_w2",
    "smoothed_density_coeffs",
    "sobolev_energy",
    "sup_deviation",
    "time_sampled_measure",
    "uniform_measure",
    "w1_lp_small",
    "w2_circle_exact",
    "w2_upper_bound_fourier",
    "weyl_bound_estimate",
    "xi_r",
]
