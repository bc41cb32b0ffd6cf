"""Geometry, temperature and solver parameter containers."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from scipy.constants import Boltzmann as K_B, c as C_LIGHT, hbar as HBAR

from .errors import DomainError

__all__ = ["Geometry", "ThermalSpec", "SolverParams", "default_lmax", "HBAR", "K_B", "C_LIGHT"]


@dataclass(frozen=True)
class Geometry:
    """Sphere of radius ``R`` at closest distance ``L`` from the plate (metres)."""

    R: float
    L: float

    def __post_init__(self):
        for name in ("R", "L"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be finite and positive, got {val}")

    @property
    def center_distance(self) -> float:
        """Distance from the sphere centre to the plate, L + R."""
        return self.L + self.R

    def with_L(self, L: float) -> "Geometry":
        return replace(self, L=L)


@dataclass(frozen=True)
class ThermalSpec:
    """Temperature in kelvin; T = 0 selects the frequency integral."""

    T: float

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T >= 0):
            raise DomainError(f"temperature must be finite and >= 0, got {self.T}")

    @property
    def lambda_T(self) -> float:
        """Thermal wavelength hbar c / (k_B T)."""
        if self.T == 0:
            return math.inf
        return HBAR * C_LIGHT / (K_B * self.T)

    def matsubara(self, n: int) -> float:
        """n-th Matsubara frequency 2 pi n k_B T / hbar in rad/s."""
        return 2 * math.pi * n * K_B * self.T / HBAR

    def nu(self, geometry: Geometry) -> float:
        """2 pi (L + R) / lambda_T."""
        return 2 * math.pi * geometry.center_distance / self.lambda_T


def default_lmax(geometry: Geometry) -> int:
    # the small offset keeps exact ratios such as R/L = 5 from rounding up
    return max(15, math.ceil(10 * geometry.R / geometry.L - 1e-9))


@dataclass(frozen=True)
class SolverParams:
    """Numerical knobs. ``None`` entries are resolved from the geometry.

    ``xi0_epsilons`` are the two dimensionless frequencies xi (L+R)/c at which
    the round-trip determinant is evaluated to extrapolate the n = 0 term.
    """

    ell_max: int | None = None
    quad_order_k: int | None = None
    quad_order_xi: int = 41
    xi_quad_tol: float = 1e-4
    matsubara_rel_tol: float = 1e-9
    mat_consecutive: int = 3
    xi0_epsilons: tuple[float, float] = (1e-3, 5e-4)
    fd_rel_step_T: float = 1e-3
    quad_tol: float = 1e-8
    m_rel_tol: float = 1e-12
    n_max_cap: int = 20000
    workers: int = 1

    def __post_init__(self):
        if self.ell_max is not None and self.ell_max < 1:
            raise DomainError(f"ell_max must be >= 1, got {self.ell_max}")
        if self.quad_order_k is not None and self.quad_order_k < 2:
            raise DomainError(f"quad_order_k must be >= 2, got {self.quad_order_k}")
        positives = {
            "quad_order_xi": self.quad_order_xi,
            "matsubara_rel_tol": self.matsubara_rel_tol,
            "mat_consecutive": self.mat_consecutive,
            "fd_rel_step_T": self.fd_rel_step_T,
            "quad_tol": self.quad_tol,
            "xi_quad_tol": self.xi_quad_tol,
            "m_rel_tol": self.m_rel_tol,
            "n_max_cap": self.n_max_cap,
            "workers": self.workers,
        }
        for name, val in positives.items():
            if not val > 0:
                raise DomainError(f"{name} must be positive, got {val}")
        e1, e2 = self.xi0_epsilons
        if not (0 < e2 < e1 < 1e-2):
            raise DomainError(f"xi0_epsilons must satisfy 0 < e2 < e1 < 1e-2, got {self.xi0_epsilons}")

    def lmax_for(self, geometry: Geometry) -> int:
        return self.ell_max if self.ell_max is not None else default_lmax(geometry)

    def quad_order_for(self, lmax: int) -> int:
        return self.quad_order_k if self.quad_order_k is not None else max(25, 2 * lmax)

    def replace(self, **changes) -> "SolverParams":
        return replace(self, **changes)
