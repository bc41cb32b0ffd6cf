import math
import warnings

import mpmath as mp
import pytest
from hypothesis import given, settings, strategies as st
from scipy.constants import Boltzmann as kB, c, hbar
from scipy.optimize import brentq

from casimirps.errors import DomainError
from casimirps.geometry import Geometry, SolverParams, ThermalSpec
from casimirps.materials import MaterialModel
from casimirps.reference import (
    AsymptoticRegime,
    _entropy_shape,
    dipole_free_energy,
    high_T_limits,
    parallel_plate_free_energy,
    perfect_asymptotics,
    pfa_force,
    phi,
    phi_prime,
    plasma_bracket,
    plasma_drude_force_ratio,
)
from casimirps.thermo import free_energy

PERFECT = MaterialModel.perfect()
DRUDE = MaterialModel.drude()
PLASMA = MaterialModel.plasma()
T300 = ThermalSpec(300.0)
T0 = ThermalSpec(0.0)
mp.mp.dps = 40


def phi_oracle(nu):
    nu = mp.mpf(nu)
    return (nu * mp.sinh(nu) + mp.cosh(nu) * (nu ** 2 + mp.sinh(nu) ** 2)) / (2 * mp.sinh(nu) ** 3)


def test_pfa_perfect_zero_temperature_closed_form():
    g = Geometry(1e-6, 0.3e-6)
    closed = 2 * math.pi * g.R * math.pi ** 2 * hbar * c / (720 * g.L ** 3)
    assert pfa_force(g, PERFECT, T0) == pytest.approx(closed, rel=1e-6, abs=0)


def test_pfa_scales_with_radius_and_is_attractive():
    for model in (PERFECT, PLASMA, DRUDE):
        a = pfa_force(Geometry(1e-6, 1e-6), model, T300)
        b = pfa_force(Geometry(1e-9, 1e-6), model, T300)
        assert a > 0 and b == pytest.approx(a * 1e-3, rel=1e-12, abs=0)


def test_pfa_high_temperature_factor_two():
    g = Geometry(2e-6, 100e-6)
    ratio = pfa_force(g, PERFECT, T300) / pfa_force(g, DRUDE, T300)
    assert ratio == pytest.approx(2.0, rel=1e-2, abs=0)
    assert pfa_force(g, PLASMA, T300) / pfa_force(g, DRUDE, T300) == pytest.approx(2.0, rel=2e-2, abs=0)


def test_parallel_plates_domain():
    with pytest.raises(DomainError):
        parallel_plate_free_energy(0.0, PERFECT, T300)


def test_phi_values():
    assert phi(1.0) == pytest.approx(float(phi_oracle(1)), rel=1e-13, abs=0)
    assert phi(1.0) == pytest.approx(1.4937, abs=3e-4)
    assert phi(800.0) == 0.5
    assert phi(30.0) == pytest.approx(0.5, rel=1e-10, abs=0)
    for nu in (1e-4, 5e-3, 0.2, 2.0, 10.0, 100.0):
        assert phi(nu) == pytest.approx(float(phi_oracle(nu)), rel=1e-12, abs=0)
    with pytest.raises(DomainError):
        phi(0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 300.0))
def test_phi_prime_is_the_derivative(nu):
    # phi' ~ e^{-2 nu} sits far below phi itself, hence the working precision
    with mp.workdps(int(nu) + 40):
        ref = float(mp.diff(phi_oracle, nu))
    assert phi_prime(nu) == pytest.approx(ref, rel=1e-10, abs=1e-300)
    # phi decreases monotonically towards 1/2
    assert phi_prime(nu) <= 0.0 and phi(nu) >= 0.5


def test_entropy_shape_series_joins_closed_form():
    for nu in (0.099, 0.1, 0.101):
        ref = float(phi_oracle(nu) + nu * mp.diff(phi_oracle, nu))
        assert _entropy_shape(nu) == pytest.approx(ref, rel=1e-9, abs=0)


def test_perfect_entropy_changes_sign_near_one_and_a_half():
    root = brentq(_entropy_shape, 0.5, 3.0, xtol=1e-12)
    assert root == pytest.approx(1.5, abs=0.05)
    assert _entropy_shape(1.0) < 0 < _entropy_shape(2.0)


def test_perfect_asymptotics_limits():
    g = Geometry(0.5e-6, 49.5e-6)
    hot = ThermalSpec(1e5)
    F, S = perfect_asymptotics(g, hot)
    lam = hbar * c / (kB * hot.T)
    assert F == pytest.approx(-3 * hbar * c * g.R ** 3 / (8 * lam * g.center_distance ** 3), rel=1e-10, abs=0)
    assert S == pytest.approx(3 * kB * g.R ** 3 / (8 * g.center_distance ** 3), rel=1e-10, abs=0)
    with pytest.raises(DomainError):
        perfect_asymptotics(g, T0)


@pytest.mark.parametrize("T", [1.0, 10.0, 20.0])
def test_low_temperature_expansion(T):
    g = Geometry(0.2e-6, 5e-6)
    th = ThermalSpec(T)
    nu = th.nu(g)
    assert nu < 0.3
    calL = g.center_distance
    series = -9 * hbar * c * g.R ** 3 / (16 * math.pi * calL ** 4) * (1 - nu ** 4 / 135 + 4 * nu ** 6 / 945)
    assert perfect_asymptotics(g, th)[0] == pytest.approx(series, rel=1e-3, abs=0)


def test_high_temperature_limits():
    g = Geometry(2e-6, 48e-6)
    perfect = high_T_limits(g, PERFECT, T300)
    assert high_T_limits(g, DRUDE, T300) / perfect == pytest.approx(2 / 3, rel=1e-14, abs=0)
    assert high_T_limits(g, MaterialModel.plasma(1e-15), T300) / perfect == pytest.approx(1.0, rel=1e-8, abs=0)
    assert high_T_limits(g, PLASMA, T300) / perfect == pytest.approx(0.98928, abs=2e-5)
    with pytest.raises(DomainError):
        high_T_limits(g, PERFECT, T0)


def test_plasma_bracket_and_force_ratio():
    assert plasma_bracket(1e4) == pytest.approx(1.0, abs=2e-4)
    assert plasma_bracket(1e-3) == pytest.approx(2 / 3, rel=1e-6, abs=0)
    # series and closed form meet at the switch-over
    assert plasma_bracket(0.0499999) == pytest.approx(plasma_bracket(0.0500001), rel=1e-9, abs=0)
    assert plasma_drude_force_ratio(Geometry(1.0, 1.0)) == pytest.approx(1.5, rel=1e-6, abs=0)
    assert plasma_drude_force_ratio(Geometry(1e-12, 1e-6)) == pytest.approx(1.0, rel=1e-6, abs=0)
    assert plasma_drude_force_ratio(Geometry(2e-6, 1e-4)) == pytest.approx(1.4839, abs=1e-4)
    with pytest.raises(DomainError):
        plasma_bracket(0.0)


@settings(max_examples=60)
@given(st.floats(1e-6, 1e6))
def test_force_ratio_stays_between_one_and_three_halves(alpha):
    r = 1.5 * plasma_bracket(alpha)
    assert 1.0 <= r <= 1.5


def test_asymptotic_regime():
    g = Geometry(2e-6, 48e-6)
    reg = AsymptoticRegime.of(g, T300, PLASMA)
    assert reg.nu == pytest.approx(2 * math.pi * 50e-6 / T300.lambda_T, abs=0)
    assert reg.alpha == pytest.approx(92.4, abs=0.01)
    assert math.isinf(AsymptoticRegime.of(g, T300).alpha)
    with pytest.raises(DomainError):
        AsymptoticRegime(0.0)


@pytest.mark.parametrize("model", [PERFECT, DRUDE, PLASMA], ids=["perfect", "drude", "plasma"])
@pytest.mark.parametrize("T", [0.0, 300.0])
def test_dipole_matches_lmax_one_solver(model, T):
    g = Geometry(1e-8, 1e-6 - 1e-8)  # R / (L + R) = 0.01
    th = ThermalSpec(T)
    p = SolverParams(ell_max=1, quad_order_k=40, xi_quad_tol=1e-6)
    exact = free_energy(g, model, th, p)
    assert dipole_free_energy(g, model, th, p) == pytest.approx(exact, rel=1e-6, abs=0)


def test_dipole_high_temperature_and_small_sphere():
    g = Geometry(0.5e-6, 49.5e-6)
    d = dipole_free_energy(g, PERFECT, T300)
    assert d == pytest.approx(high_T_limits(g, PERFECT, T300), rel=3e-3, abs=0)
    # vanishes like R^3 for a shrinking sphere
    tiny = dipole_free_energy(Geometry(1e-10, 1e-5), PERFECT, T300)
    tinier = dipole_free_energy(Geometry(0.5e-10, 1e-5), PERFECT, T300)
    assert tiny < 0 and tiny / tinier == pytest.approx(8.0, rel=1e-4, abs=0)


def test_dipole_warns_outside_regime():
    with pytest.warns(RuntimeWarning):
        dipole_free_energy(Geometry(1e-6, 1e-6), PERFECT, T300)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dipole_free_energy(Geometry(0.1e-6, 10e-6), PERFECT, T300)


@pytest.mark.parametrize("model", [PERFECT, DRUDE, PLASMA], ids=["perfect", "drude", "plasma"])
def test_oracle_chain_closure(model):
    g = Geometry(0.5e-6, 49.5e-6)
    exact = free_energy(g, model, T300)
    dip = dipole_free_energy(g, model, T300)
    assert exact == pytest.approx(dip, rel=3e-2, abs=0)
    assert dip == pytest.approx(high_T_limits(g, model, T300), rel=1e-2, abs=0)
