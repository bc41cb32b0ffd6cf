r"""Closed-form and low-dimensional oracles for the sphere-plate problem.

* proximity-force approximation from the Lifshitz parallel-plate free energy,
* the dipole (l = 1) approximation from one-dimensional k-integrals,
* perfect-reflector large-distance free energy and entropy,
* plasma and Drude high-temperature limits and their force ratio.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import ConvergenceError, DomainError
from .geometry import C_LIGHT, HBAR, K_B, Geometry, SolverParams, ThermalSpec
from .materials import GOLD_LAMBDA_P, MaterialModel, fresnel_arrays, mie, mie_zero_freq_expansion

__all__ = [
    "AsymptoticRegime",
    "pfa_force",
    "parallel_plate_free_energy",
    "dipole_free_energy",
    "phi",
    "phi_prime",
    "perfect_asymptotics",
    "high_T_limits",
    "plasma_bracket",
    "plasma_drude_force_ratio",
]

_QUAD = dict(epsabs=0.0, epsrel=1e-11, limit=400)


@dataclass(frozen=True)
class AsymptoticRegime:
    """Dimensionless parameters nu = 2 pi (L+R) / lambda_T and alpha = 2 pi R / lambda_P."""

    nu: float
    alpha: float = math.inf

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    @classmethod
    def of(cls, geometry: Geometry, thermal: ThermalSpec,
           model: MaterialModel | None = None) -> "AsymptoticRegime":
        alpha = math.inf if model is None or model.is_perfect else model.alpha(geometry.R)
        return cls(thermal.nu(geometry), alpha)


def _quad(f, a, b=math.inf) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        try:
            val, _ = quad(f, a, b, **_QUAD)
        except Exception as exc:  # IntegrationWarning is promoted to an error here
            raise ConvergenceError(f"k-integral did not converge: {exc}") from exc
    return val


def _plates_integral(xi: float, L: float, model: MaterialModel) -> float:
    """int_0^inf k dk/(2 pi) sum_p ln(1 - r_p^2 e^{-2 kappa L}) at one frequency, per area."""
    y0 = 2 * xi * L / C_LIGHT

    def f(y):
        kappa = np.array([y / (2 * L)])
        rte, rtm = fresnel_arrays(kappa, xi, model)
        e = math.exp(-y)
        return y * (math.log1p(-rte[0] ** 2 * e) + math.log1p(-rtm[0] ** 2 * e))

    # k dk = kappa dkappa, y = 2 kappa L
    return _quad(f, y0) / (8 * math.pi * L * L)


def _sum_matsubara(term, kT: float, params: SolverParams) -> float:
    total = 0.5 * term(0.0)
    quiet = 0
    n = 1
    while True:
        val = term(2 * math.pi * n * kT / HBAR)
        total += val
        quiet = quiet + 1 if abs(val) <= params.matsubara_rel_tol * abs(total) else 0
        if quiet >= params.mat_consecutive:
            return total
        if n >= params.n_max_cap:
            raise ConvergenceError(f"Matsubara sum not converged after {n} terms")
        n += 1


def parallel_plate_free_energy(L: float, model: MaterialModel, thermal: ThermalSpec,
                               params: SolverParams | None = None) -> float:
    """Lifshitz free energy per unit area (J/m^2) of two identical plates at distance ``L``."""
    if not L > 0:
        raise DomainError(f"L must be positive, got {L}")
    params = params or SolverParams()
    if thermal.T == 0:
        # xi = c y / (2 L)
        inner = lambda y: _plates_integral(C_LIGHT * y / (2 * L), L, model)
        return HBAR * C_LIGHT / (2 * L) * _quad(inner, 0.0) / (2 * math.pi)
    kT = K_B * thermal.T
    return kT * _sum_matsubara(lambda xi: _plates_integral(xi, L, model), kT, params)


def pfa_force(geometry: Geometry, model: MaterialModel, thermal: ThermalSpec,
              params: SolverParams | None = None) -> float:
    """Proximity-force approximation -2 pi R F_PP(L)/A in newtons (positive = attractive)."""
    return -2 * math.pi * geometry.R * parallel_plate_free_energy(geometry.L, model, thermal, params)


def _dipole_term(xi: float, geometry: Geometry, model: MaterialModel) -> float:
    """sum_P [M^(0)(P,P)_11 + 2 M^(1)(P,P)_11] from explicit k-integrals."""
    calL, R = geometry.center_distance, geometry.R

    if xi == 0.0:
        zf = mie_zero_freq_expansion(1, model, R)
        # a_1 / (xi/c)^3 -> coef_a R^3; b_1 likewise only when it scales as xi^3
        pa = zf.coef_a * R ** 3
        pb = zf.coef_b * R ** 3 if zf.power_b == 3 else 0.0
    else:
        pair = mie(1, xi * R / C_LIGHT, model, R)
        k0 = xi / C_LIGHT
        pa = float(pair.a) / k0 ** 3
        pb = float(pair.b) / k0 ** 3

    def refl(q):
        kappa = math.hypot(xi * calL / C_LIGHT, q) / calL
        rte, rtm = fresnel_arrays(np.array([kappa]), xi, model)
        return kappa, rte[0], rtm[0]

    k0sq = (xi / C_LIGHT) ** 2

    def integrand(q, which):
        k = q / calL
        kappa, rte, rtm = refl(q)
        e = math.exp(-2 * kappa * calL)
        if which == "E":
            m0 = -1.5 * pa * k ** 3 / kappa * rtm
            m1 = 0.75 * pa * (k * k0sq / kappa * rte - k * kappa * rtm)
        else:
            m0 = -1.5 * pb * k ** 3 / kappa * rte
            m1 = 0.75 * pb * (k * k0sq / kappa * rtm - k * kappa * rte)
        return (m0 + 2 * m1) * e / calL

    total = _quad(lambda q: integrand(q, "E"), 0.0)
    if pb != 0.0:
        total += _quad(lambda q: integrand(q, "M"), 0.0)
    return total


def dipole_free_energy(geometry: Geometry, model: MaterialModel, thermal: ThermalSpec,
                       params: SolverParams | None = None) -> float:
    r"""Large-distance free energy keeping only l = 1 and first order in the round trip.

    Evaluates :math:`-k_BT\sum'_n\sum_P[\mathcal M^{(0)}(P,P)_{11} + 2\mathcal M^{(1)}(P,P)_{11}]`.
    Warns when R/(L+R) >= 0.05, where higher multipoles are no longer negligible.
    """
    params = params or SolverParams()
    if geometry.R / geometry.center_distance >= 0.05:
        warnings.warn("dipole approximation used outside R/(L+R) < 0.05", RuntimeWarning, stacklevel=2)
    if thermal.T == 0:
        calL = geometry.center_distance
        inner = lambda x: _dipole_term(x * C_LIGHT / calL, geometry, model)
        return -HBAR * C_LIGHT / (2 * math.pi * calL) * _quad(inner, 0.0)
    kT = K_B * thermal.T
    return -kT * _sum_matsubara(lambda xi: _dipole_term(xi, geometry, model), kT, params)


def phi(nu: float) -> float:
    r"""Perfect-reflector thermal function :math:`\phi(\nu)`; tends to 1/2 as nu grows."""
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    if nu > 700.0:
        return 0.5
    if nu < 1e-3:
        return 1.5 / nu - nu ** 3 / 90 + 2 * nu ** 5 / 315
    # written with q = exp(-2 nu): every term positive, nothing overflows
    q = math.exp(-2 * nu)
    omq = -math.expm1(-2 * nu)
    return (1 + q) / (2 * omq) + 2 * nu * q / omq ** 2 + 2 * nu * nu * q * (1 + q) / omq ** 3


def phi_prime(nu: float) -> float:
    r"""Analytic derivative :math:`-\nu^2(\cosh 2\nu + 2)/(2\sinh^4\nu)`."""
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    if nu > 700.0:
        return 0.0
    q = math.exp(-2 * nu)
    omq = -math.expm1(-2 * nu)
    return -4 * nu * nu * q * (1 + 4 * q + q * q) / omq ** 4


def _entropy_shape(nu: float) -> float:
    """phi + nu phi' = d(nu phi)/dnu, with a series where the two terms cancel."""
    if nu < 0.1:
        return -2 * nu ** 3 / 45 + 4 * nu ** 5 / 105 - 4 * nu ** 7 / 315 + 8 * nu ** 9 / 2673
    return phi(nu) + nu * phi_prime(nu)


def perfect_asymptotics(geometry: Geometry, thermal: ThermalSpec) -> tuple[float, float]:
    """Large-distance perfect-reflector free energy (J) and entropy (J/K)."""
    if thermal.T <= 0:
        raise DomainError("perfect_asymptotics needs T > 0")
    calL, R = geometry.center_distance, geometry.R
    nu = thermal.nu(geometry)
    F = -3 * HBAR * C_LIGHT * R ** 3 / (4 * thermal.lambda_T * calL ** 3) * phi(nu)
    S = 3 * K_B * R ** 3 / (4 * calL ** 3) * _entropy_shape(nu)
    return F, S


def plasma_bracket(alpha: float) -> float:
    """1 + 1/alpha^2 - coth(alpha)/alpha, from 2/3 at alpha -> 0 to 1 at alpha -> inf."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if alpha < 0.05:
        a2 = alpha * alpha
        return 2 / 3 + a2 / 45 - 2 * a2 ** 2 / 945 + a2 ** 3 / 4725
    return 1 + 1 / alpha ** 2 - 1 / (alpha * math.tanh(alpha))


def high_T_limits(geometry: Geometry, model: MaterialModel, thermal: ThermalSpec) -> float:
    """High-temperature, large-distance free energy in joules for the given model."""
    if thermal.T <= 0:
        raise DomainError("high-temperature limit needs T > 0")
    calL, R = geometry.center_distance, geometry.R
    base = -3 * HBAR * C_LIGHT * R ** 3 / (8 * thermal.lambda_T * calL ** 3)
    if model.kind == "perfect":
        return base
    if model.kind == "plasma":
        return base * plasma_bracket(model.alpha(R))
    return base * 2 / 3


def plasma_drude_force_ratio(geometry: Geometry, lambda_p: float = GOLD_LAMBDA_P) -> float:
    """High-temperature plasma/Drude force ratio (3/2)(1 + 1/alpha^2 - coth(alpha)/alpha)."""
    if not lambda_p > 0:
        raise DomainError(f"lambda_p must be positive, got {lambda_p}")
    return 1.5 * plasma_bracket(2 * math.pi * geometry.R / lambda_p)
