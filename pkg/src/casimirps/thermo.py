"""Matsubara summation, zero-temperature integration and derived observables.

The free energy is

    F(L, T) = 2 k_B T  sum'_n  sum'_m  log det(1 - M^(m)(xi_n)),

with the n = 0 and m = 0 terms weighted by one half. The force is returned
with the convention positive = attractive.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, DomainError
from .geometry import C_LIGHT, HBAR, K_B, Geometry, SolverParams, ThermalSpec
from .materials import MaterialModel, mie_table
from .roundtrip import QuadratureRule, assemble_pair, logdet_and_derivative, logdet_one_minus

__all__ = [
    "Geometry",
    "ThermalSpec",
    "SolverParams",
    "CasimirResult",
    "FrequencyTerm",
    "frequency_term",
    "zero_frequency_nodes",
    "free_energy",
    "free_energy_zero_T",
    "force",
    "force_zero_T",
    "entropy",
    "theta",
    "rho_F",
    "compute",
    "exp_sinh_nodes",
]


class FrequencyTerm(NamedTuple):
    """sum'_m log det(1 - M^(m)(xi)) and its L-derivative at one frequency."""

    logdet: float
    dlogdet_dL: float
    m_max: int


@dataclass
class CasimirResult:
    """Observables at one (geometry, model, T) point.

    ``force`` is positive for attraction. Entries not requested are ``nan``.
    """

    free_energy: float = math.nan
    force: float = math.nan
    entropy: float = math.nan
    rho_F: float = math.nan
    theta: float = math.nan
    diagnostics: dict = field(default_factory=dict)


class _SumResult(NamedTuple):
    value: float        # 2 k_B T sum' (or zero-T integral) of log det
    derivative: float   # same for d log det / dL
    n_max: int
    converged: bool
    m_max: int


def frequency_term(xi: float, geometry: Geometry, model: MaterialModel, lmax: int,
                   rule: QuadratureRule, want_force: bool = True,
                   m_rel_tol: float = 1e-12) -> FrequencyTerm:
    """Sum over m >= 0 (m = 0 halved) at a single positive frequency.

    The m-sum stops once a block contributes less than ``m_rel_tol`` of the
    running total; contributions fall off monotonically with m.
    """
    mie = mie_table(lmax, xi * geometry.R / C_LIGHT, model, geometry.R)
    total = dtotal = 0.0
    m_last = 0
    for m in range(0, lmax + 1):
        blk, dblk = assemble_pair(m, xi, geometry, model, lmax, rule, mie, want_force)
        if want_force:
            ld, dld = logdet_and_derivative(blk, dblk)
        else:
            ld, dld = logdet_one_minus(blk), 0.0
        w = 0.5 if m == 0 else 1.0
        total += w * ld
        dtotal += w * dld
        m_last = m
        if m >= 2 and abs(ld) <= m_rel_tol * abs(total) and abs(dld) <= m_rel_tol * abs(dtotal):
            break
    return FrequencyTerm(total, dtotal, m_last)


def zero_frequency_nodes(geometry: Geometry, model: MaterialModel,
                         params: SolverParams) -> tuple[float, float]:
    """Dimensionless frequencies xi (L+R)/c used to extrapolate the n = 0 term.

    For a Drude plate the nodes are pushed below both 1e-3 gamma and the
    frequency at which (eps - 1) xi^2 (L+R)^2 / c^2 reaches 1e-3, so that the
    reflection coefficients sit in their linear low-frequency regime.
    """
    e1, e2 = params.xi0_epsilons
    if model.kind == "drude":
        calL = geometry.center_distance
        gamma_x = model.gamma * calL / C_LIGHT
        plasma_x = model.omega_p * calL / C_LIGHT
        cap = 1e-3 * gamma_x * min(1.0, 1.0 / plasma_x ** 2)
        if e1 > cap:
            e1, e2 = cap, cap * e2 / params.xi0_epsilons[0]
        if not e1 <= 1e-3 * gamma_x:
            raise AssertionError("Drude extrapolation nodes must lie below 1e-3 gamma")
    return e1, e2


def _zero_term(geometry, model, lmax, rule, params, want_force) -> FrequencyTerm:
    """Linear extrapolation of the frequency term to xi = 0."""
    x1, x2 = zero_frequency_nodes(geometry, model, params)
    calL = geometry.center_distance
    t1 = frequency_term(x1 * C_LIGHT / calL, geometry, model, lmax, rule, want_force, params.m_rel_tol)
    t2 = frequency_term(x2 * C_LIGHT / calL, geometry, model, lmax, rule, want_force, params.m_rel_tol)
    c1, c2 = -x2 / (x1 - x2), x1 / (x1 - x2)
    return FrequencyTerm(c1 * t1.logdet + c2 * t2.logdet,
                         c1 * t1.dlogdet_dL + c2 * t2.dlogdet_dL,
                         max(t1.m_max, t2.m_max))


def _term_worker(args):
    n, xi, geometry, model, lmax, order, want_force, m_tol = args
    return frequency_term(xi, geometry, model, lmax, QuadratureRule.laguerre(order), want_force, m_tol)


def _matsubara(geometry: Geometry, model: MaterialModel, thermal: ThermalSpec,
               params: SolverParams, want_force: bool) -> _SumResult:
    if thermal.T <= 0:
        raise DomainError("Matsubara summation needs T > 0")
    lmax = params.lmax_for(geometry)
    order = params.quad_order_for(lmax)
    rule = QuadratureRule.laguerre(order)
    kT = K_B * thermal.T

    t0 = _zero_term(geometry, model, lmax, rule, params, want_force)
    s, ds = 0.5 * t0.logdet, 0.5 * t0.dlogdet_dL
    m_max = t0.m_max
    quiet = 0
    n = 1
    pool = ProcessPoolExecutor(params.workers) if params.workers > 1 else None
    try:
        while True:
            batch = range(n, n + max(1, params.workers))
            if pool is None:
                terms = [frequency_term(thermal.matsubara(k), geometry, model, lmax, rule,
                                        want_force, params.m_rel_tol) for k in batch]
            else:
                jobs = [(k, thermal.matsubara(k), geometry, model, lmax, order, want_force,
                         params.m_rel_tol) for k in batch]
                terms = list(pool.map(_term_worker, jobs))
            # ordered reduction; terms past the stopping point are discarded
            for k, term in zip(batch, terms):
                s += term.logdet
                ds += term.dlogdet_dL
                m_max = max(m_max, term.m_max)
                small = abs(term.logdet) <= params.matsubara_rel_tol * abs(s)
                if want_force:
                    small = small and abs(term.dlogdet_dL) <= params.matsubara_rel_tol * abs(ds)
                quiet = quiet + 1 if small else 0
                if quiet >= params.mat_consecutive:
                    return _SumResult(2 * kT * s, 2 * kT * ds, k, True, m_max)
                if k >= params.n_max_cap:
                    raise ConvergenceError(
                        f"Matsubara sum not converged after {k} terms (T={thermal.T} K, "
                        f"L={geometry.L} m); raise n_max_cap or check the inputs")
            n = batch[-1] + 1
    finally:
        if pool is not None:
            pool.shutdown()


def exp_sinh_nodes(order: int, t_min: float = 1e-10, t_max: float = 50.0):
    """Nodes and weights of the exp-sinh trapezoid rule for int_0^inf g(t) dt.

    ``t = exp(pi/2 sinh u)`` with ``order`` equally spaced u covering
    [t_min, t_max]; the rule tolerates integrable structure near t = 0, and
    taking every other node gives the embedded coarse rule.
    """
    u_lo = math.asinh(2 * math.log(t_min) / math.pi)
    u_hi = math.asinh(2 * math.log(t_max) / math.pi)
    u = np.linspace(u_lo, u_hi, order)
    h = u[1] - u[0]
    t = np.exp(0.5 * math.pi * np.sinh(u))
    return t, h * 0.5 * math.pi * np.cosh(u) * t


def _zero_T(geometry: Geometry, model: MaterialModel, params: SolverParams,
            want_force: bool) -> _SumResult:
    # xi = c t / (2 L): the integrand then decays at least like e^{-t}
    lmax = params.lmax_for(geometry)
    rule = QuadratureRule.laguerre(params.quad_order_for(lmax))
    scale = C_LIGHT / (2 * geometry.L)
    pref = HBAR * scale / math.pi
    m_max = 0

    def evaluate(ts):
        nonlocal m_max
        out = np.empty((2, len(ts)))
        for j, tj in enumerate(ts):
            term = frequency_term(scale * tj, geometry, model, lmax, rule, want_force, params.m_rel_tol)
            out[:, j] = term.logdet, term.dlogdet_dL
            m_max = max(m_max, term.m_max)
        return out

    # halve the step until the rule and its embedded half rule agree;
    # old nodes are the even indices of the refined grid and are reused
    order = params.quad_order_xi | 1
    t, w = exp_sinh_nodes(order)
    vals = evaluate(t)
    while True:
        fine = pref * (vals @ w)
        coarse = pref * 2 * (vals[:, ::2] @ w[::2])
        rel = abs(fine[0] - coarse[0]) / abs(fine[0]) if fine[0] else 0.0
        if want_force and fine[1]:
            rel = max(rel, abs(fine[1] - coarse[1]) / abs(fine[1]))
        if rel <= params.xi_quad_tol:
            break
        if order >= 8 * params.quad_order_xi:
            raise ConvergenceError(
                f"zero-temperature frequency quadrature not converged: {order} and {order // 2 + 1} "
                f"nodes differ by {rel:.2e}")
        order = 2 * order - 1
        t, w = exp_sinh_nodes(order)
        refined = np.empty((2, order))
        refined[:, ::2] = vals
        refined[:, 1::2] = evaluate(t[1::2])
        vals = refined
    return _SumResult(float(fine[0]), float(fine[1]), order, True, m_max)


def free_energy(geometry: Geometry, model: MaterialModel, thermal: ThermalSpec,
                params: SolverParams | None = None) -> float:
    """Casimir free energy in joules (negative). ``T = 0`` uses the frequency integral."""
    params = params or SolverParams()
    if thermal.T == 0:
        return free_energy_zero_T(geometry, model, params)
    return _matsubara(geometry, model, thermal, params, False).value


def free_energy_zero_T(geometry: Geometry, model: MaterialModel,
                       params: SolverParams | None = None) -> float:
    """Zero-temperature Casimir energy hbar/pi int_0^inf dxi sum'_m log det(1 - M^(m)(xi))."""
    params = params or SolverParams()
    return _zero_T(geometry, model, params, False).value


def force(geometry: Geometry, model: MaterialModel, thermal: ThermalSpec,
          params: SolverParams | None = None) -> float:
    """Casimir force dF/dL in newtons; positive means attraction."""
    params = params or SolverParams()
    if thermal.T == 0:
        return force_zero_T(geometry, model, params)
    return _matsubara(geometry, model, thermal, params, True).derivative


def force_zero_T(geometry: Geometry, model: MaterialModel,
                 params: SolverParams | None = None) -> float:
    params = params or SolverParams()
    return _zero_T(geometry, model, params, True).derivative


def entropy(geometry: Geometry, model: MaterialModel, thermal: ThermalSpec,
            params: SolverParams | None = None, richardson: bool = True) -> float:
    """Casimir entropy -dF/dT in J/K by central differences in T.

    With ``richardson`` the half-step estimate is combined with the full step,
    and a :class:`ConvergenceError` is raised if the two differ by more than 5%.
    """
    params = params or SolverParams()
    if thermal.T <= 0:
        raise DomainError("entropy needs T > 0")
    T = thermal.T
    h = params.fd_rel_step_T * T

    def slope(step):
        hi = free_energy(geometry, model, ThermalSpec(T + step), params)
        lo = free_energy(geometry, model, ThermalSpec(T - step), params)
        return -(hi - lo) / (2 * step)

    s_full = slope(h)
    if not richardson:
        return s_full
    s_half = slope(h / 2)
    if abs(s_full - s_half) > 0.05 * abs(s_half):
        raise ConvergenceError(
            f"entropy finite differences unstable: {s_full:.6e} vs {s_half:.6e} J/K")
    return (4 * s_half - s_full) / 3


def theta(geometry: Geometry, model: MaterialModel, thermal: ThermalSpec,
          params: SolverParams | None = None) -> float:
    """Thermal correction factor F(L, T) / F(L, 0) built from forces."""
    params = params or SolverParams()
    return force(geometry, model, thermal, params) / force_zero_T(geometry, model, params)


def rho_F(geometry: Geometry, model: MaterialModel, thermal: ThermalSpec,
          params: SolverParams | None = None) -> float:
    """Ratio of the exact force to the proximity-force approximation."""
    from .reference import pfa_force

    params = params or SolverParams()
    return force(geometry, model, thermal, params) / pfa_force(geometry, model, thermal, params)


def compute(geometry: Geometry, model: MaterialModel, thermal: ThermalSpec,
            params: SolverParams | None = None,
            observables=("free_energy", "force", "entropy", "rho_F", "theta")) -> CasimirResult:
    """Evaluate several observables, sharing the expensive sums between them."""
    from .reference import pfa_force

    params = params or SolverParams()
    wanted = set(observables)
    unknown = wanted - {"free_energy", "force", "entropy", "rho_F", "theta"}
    if unknown:
        raise DomainError(f"unknown observables: {sorted(unknown)}")
    res = CasimirResult()
    res.diagnostics["ell_max"] = params.lmax_for(geometry)
    need_force = bool(wanted & {"force", "rho_F", "theta"})

    if thermal.T == 0:
        main = _zero_T(geometry, model, params, need_force)
        zero = main
        res.diagnostics["n_max"] = 0
    else:
        main = _matsubara(geometry, model, thermal, params, need_force)
        res.diagnostics["n_max"] = main.n_max
        zero = _zero_T(geometry, model, params, True) if "theta" in wanted else None
    res.diagnostics["converged"] = main.converged
    res.diagnostics["m_max"] = main.m_max

    if "free_energy" in wanted:
        res.free_energy = main.value
    if need_force:
        res.force = main.derivative
    if "entropy" in wanted:
        res.entropy = entropy(geometry, model, thermal, params) if thermal.T > 0 else math.nan
    if "rho_F" in wanted:
        res.rho_F = main.derivative / pfa_force(geometry, model, thermal, params)
    if "theta" in wanted:
        res.theta = main.derivative / zero.derivative
    return res
