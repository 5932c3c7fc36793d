"""Closed-form Nash equilibrium of a resource extraction and taxation game
under a regime-switching jump-diffusion price, with independent checks."""

from .equilibrium import Equilibrium, find_equilibrium, solve_a1
from .errors import (
    DegenerateTax,
    ExtractionGameError,
    NoEquilibrium,
    NoRealRoot,
    ParseError,
    QuadratureFailure,
    SingularSystem,
    UnstableSystem,
    ValidationError,
)
from .levy import jump_integral, jump_integral_quadrature
from .model import (
    Contract,
    LevyMeasureSpec,
    MarketModel,
    RegimeParams,
    SimConfig,
    dump_config,
    load_config,
    load_config_file,
    validate_model,
)
from .oracle import policy_value, stationary_value, truncated_value
from .sim import Policy, deviation_test, estimate_payoffs, simulate_batch, simulate_path

__all__ = [
    "Contract", "DegenerateTax", "Equilibrium", "ExtractionGameError", "LevyMeasureSpec",
    "MarketModel", "NoEquilibrium", "NoRealRoot", "ParseError", "Policy", "QuadratureFailure",
    "RegimeParams", "SimConfig", "SingularSystem", "UnstableSystem", "ValidationError",
    "deviation_test", "dump_config", "estimate_payoffs", "find_equilibrium", "jump_integral",
    "jump_integral_quadrature", "load_config", "load_config_file", "policy_value",
    "simulate_batch", "simulate_path", "solve_a1", "stationary_value", "truncated_value",
    "validate_model",
]
