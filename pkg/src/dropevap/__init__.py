"""Single-droplet evaporation in a rescaled spherical shell, with a verification harness."""
from .config import ConfigError, RunConfig, load_config, parse_config
from .discretization import Field, Kind, SolveError
from .fixedpoint import RadiusPath, decoupled_solve, picard_to_fixed_point, stability_ratio, volterra_apply
from .flowfields import Acoustic, Stagnant, Stokes, amplitude_to_spl, spl_to_amplitude
from .geometry import AxiGrid, build_grid, surface_weights
from .oracle import D2Law, d2_law, d2_radius_sq, harmonic_profile, solve_wet_bulb
from .physics import DryingState, MaterialParams, PhysicsError, hk_coefficient, p_sat
from .timeloop import (ConvergenceError, FieldSolver, InvariantViolation, SimState, SolverConfig,
                       run, volume_to_radius)

__version__ = "0.1.0"

__all__ = [
    "Acoustic", "AxiGrid", "ConfigError", "ConvergenceError", "D2Law", "DryingState", "Field",
    "FieldSolver", "InvariantViolation", "Kind", "MaterialParams", "PhysicsError", "RadiusPath",
    "RunConfig", "SimState", "SolveError", "SolverConfig", "Stagnant", "Stokes",
    "amplitude_to_spl", "build_grid", "d2_law", "d2_radius_sq", "decoupled_solve",
    "harmonic_profile", "hk_coefficient", "load_config", "p_sat", "parse_config",
    "picard_to_fixed_point", "run", "solve_wet_bulb", "spl_to_amplitude", "stability_ratio",
    "surface_weights", "volterra_apply", "volume_to_radius",
]
