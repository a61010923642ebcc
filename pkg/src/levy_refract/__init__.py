"""Refracted-reflected spectrally positive Levy processes with phase-type jumps.

Scale functions and every fluctuation identity of the surplus process that is
reflected at 0 (capital injection) and refracted at b (dividends at a capped
rate) are evaluated in closed form as exponential mixtures; the optimal
refraction level and value function of the dividend problem come from the
same machinery; a Monte Carlo path simulator cross-validates all of it.
"""

from .control import (
    ControlProblem,
    SolveResult,
    f_of_b,
    hjb_residual,
    sensitivity_sweep,
    solve_bstar,
    unrestricted_barrier,
    unrestricted_limit,
    value_derivatives,
    value_optimal,
    value_refraction,
)
from .errors import LevyRefractError
from .fluctuation import (
    Geometry,
    IntervalSet,
    apply_generator,
    dividends_npv,
    exit_laplace,
    gamma_kernel,
    identity_probe,
    injection_npv,
    kernel_cal_R,
    kernel_r,
    kernel_r_hat,
    kernel_r_hat_prime,
    kernel_r_prime,
    occupation_laplace,
    resolvent_finite,
    resolvent_infinite,
)
from .mixture import ExpMixture
from .model import (
    LevyModelSpec,
    PhaseTypeJump,
    ValidatedModel,
    absnormal_phase_type,
    jump_density,
    laplace_exponent,
    load_model_config,
    reference_model,
    validate_model,
    variation_class,
)
from .montecarlo import (
    EstimateWithCI,
    PathRecord,
    SimConfig,
    block_rng,
    estimate_exit_bundle,
    estimate_functional,
    estimate_value,
    run_levels,
    sample_phase_type,
    simulate_path,
)
from .scale import (
    ScaleFamily,
    build_scale_family,
    convolve_on_interval,
    eval_scale,
    exp_weighted_integral,
    laplace_check,
)
from .spectral import RootSet, characteristic_roots, psi_derivative

__version__ = "0.1.0"

__all__ = [
    "ControlProblem", "SolveResult", "f_of_b", "hjb_residual",
    "sensitivity_sweep", "solve_bstar", "unrestricted_barrier",
    "unrestricted_limit", "value_derivatives", "value_optimal",
    "value_refraction", "LevyRefractError", "Geometry", "IntervalSet",
    "apply_generator", "dividends_npv", "exit_laplace", "gamma_kernel",
    "identity_probe", "injection_npv", "kernel_cal_R", "kernel_r",
    "kernel_r_hat", "kernel_r_hat_prime", "kernel_r_prime",
    "occupation_laplace", "resolvent_finite", "resolvent_infinite",
    "ExpMixture", "LevyModelSpec", "PhaseTypeJump", "ValidatedModel",
    "absnormal_phase_type", "jump_density", "laplace_exponent",
    "load_model_config", "reference_model", "validate_model",
    "variation_class", "EstimateWithCI", "PathRecord", "SimConfig",
    "block_rng", "estimate_exit_bundle", "estimate_functional",
    "estimate_value", "run_levels", "sample_phase_type", "simulate_path",
    "ScaleFamily", "build_scale_family", "convolve_on_interval",
    "eval_scale", "exp_weighted_integral", "laplace_check", "RootSet",
    "characteristic_roots", "psi_derivative",
]
