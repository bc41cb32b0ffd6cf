"""Casimir free energy, force and entropy between a sphere and a plate.

Scattering-theory solver in the multipole basis, with perfect-reflector,
plasma and Drude material models, plus asymptotic reference formulas.
"""
__version__ = "0.1.0"

from .errors import CasimirError, ConvergenceError, DomainError, SingularityError
from .geometry import Geometry, SolverParams, ThermalSpec
from .materials import GOLD_LAMBDA_GAMMA, GOLD_LAMBDA_P, MaterialModel
from .thermo import (
    CasimirResult,
    compute,
    entropy,
    force,
    force_zero_T,
    free_energy,
    free_energy_zero_T,
    rho_F,
    theta,
)
from .reference import (
    dipole_free_energy,
    high_T_limits,
    perfect_asymptotics,
    pfa_force,
    plasma_drude_force_ratio,
)

__all__ = [
    "CasimirError", "ConvergenceError", "DomainError", "SingularityError",
    "Geometry", "SolverParams", "ThermalSpec",
    "MaterialModel", "GOLD_LAMBDA_P", "GOLD_LAMBDA_GAMMA",
    "CasimirResult", "compute", "free_energy", "free_energy_zero_T", "force", "force_zero_T",
    "entropy", "rho_F", "theta",
    "pfa_force", "dipole_free_energy", "perfect_asymptotics", "high_T_limits",
    "plasma_drude_force_ratio",
]
