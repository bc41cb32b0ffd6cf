import math

import numpy as np
import pytest
from scipy.constants import Boltzmann as kB, c, hbar

from casimirps.errors import ConvergenceError, DomainError
from casimirps.geometry import Geometry, SolverParams, ThermalSpec, default_lmax
from casimirps.materials import MaterialModel
from casimirps.reference import perfect_asymptotics, pfa_force
from casimirps.roundtrip import QuadratureRule
from casimirps.thermo import (
    _zero_term,
    compute,
    entropy,
    exp_sinh_nodes,
    force,
    force_zero_T,
    free_energy,
    free_energy_zero_T,
    rho_F,
    theta,
    zero_frequency_nodes,
)

PERFECT = MaterialModel.perfect()
DRUDE = MaterialModel.drude()
PLASMA = MaterialModel.plasma()
MODELS = {"perfect": PERFECT, "plasma": PLASMA, "drude": DRUDE}
T300 = ThermalSpec(300.0)
T0 = ThermalSpec(0.0)
FAR = Geometry(0.5e-6, 49.5e-6)


def test_containers_validate():
    with pytest.raises(DomainError):
        Geometry(0.0, 1e-6)
    with pytest.raises(DomainError):
        Geometry(1e-6, math.inf)
    with pytest.raises(DomainError):
        ThermalSpec(-1.0)
    with pytest.raises(DomainError):
        SolverParams(xi0_epsilons=(1e-4, 1e-3))
    with pytest.raises(DomainError):
        SolverParams(matsubara_rel_tol=0.0)
    g = Geometry(2e-6, 0.5e-6)
    assert g.center_distance == pytest.approx(2.5e-6, rel=1e-15, abs=0)
    assert default_lmax(g) == 40 and default_lmax(Geometry(5e-6, 1e-6)) == 50
    assert default_lmax(Geometry(1e-7, 1e-6)) == 15
    assert T300.lambda_T == pytest.approx(7.63e-6, rel=1e-3, abs=0)
    assert T300.matsubara(2) == pytest.approx(4 * math.pi * kB * 300 / hbar, abs=0)


def test_exp_sinh_rule_integrates_known_functions():
    t, w = exp_sinh_nodes(81)
    assert float(np.sum(w * t ** 2 * np.exp(-t))) == pytest.approx(2.0, rel=1e-8, abs=0)
    # integrable square-root structure at the origin
    assert float(np.sum(w * np.sqrt(t) * np.exp(-t))) == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-8, abs=0)


@pytest.mark.parametrize("kind", sorted(MODELS))
def test_high_temperature_free_energy(kind):
    lam = T300.lambda_T
    calL, R = FAR.center_distance, FAR.R
    perfect = -3 * hbar * c * R ** 3 / (8 * lam * calL ** 3)
    expect = {"perfect": perfect, "drude": 2 / 3 * perfect,
              "plasma": perfect * (1 + 1 / PLASMA.alpha(R) ** 2 - 1 / (PLASMA.alpha(R) * math.tanh(PLASMA.alpha(R))))}
    res = compute(FAR, MODELS[kind], T300, observables=("free_energy", "force"))
    assert res.free_energy == pytest.approx(expect[kind], rel=3e-2, abs=0)
    assert res.force == pytest.approx(-3 * expect[kind] / calL, rel=3e-2, abs=0)
    assert res.diagnostics["converged"] and res.diagnostics["n_max"] >= 3


def test_free_energy_vanishes_for_small_sphere():
    big = free_energy(Geometry(1e-7, 1e-6), PERFECT, T300)
    small = free_energy(Geometry(1e-9, 1e-6), PERFECT, T300)
    assert big < small < 0 and abs(small) < 1e-5 * abs(big)
    assert abs(free_energy_zero_T(Geometry(1e-9, 1e-6), PERFECT)) < 1e-5 * abs(free_energy_zero_T(Geometry(1e-7, 1e-6), PERFECT))


def test_zero_temperature_dipole_limit():
    g = Geometry(0.02e-6, 0.98e-6)
    calL = g.center_distance
    assert free_energy_zero_T(g, PERFECT) == pytest.approx(-9 * hbar * c * g.R ** 3 / (16 * math.pi * calL ** 4), rel=2e-2, abs=0)
    assert free_energy(g, PERFECT, T0) == free_energy_zero_T(g, PERFECT)


@pytest.mark.slow
def test_low_temperature_matches_zero_temperature():
    g = Geometry(0.2e-6, 1e-6)
    cold = free_energy(g, PERFECT, ThermalSpec(1.0))
    assert cold == pytest.approx(free_energy_zero_T(g, PERFECT), rel=5e-3, abs=0)


@pytest.mark.parametrize("kind", sorted(MODELS))
@pytest.mark.parametrize("T", [0.0, 300.0])
def test_force_matches_finite_difference(kind, T):
    L = 1e-6
    g = Geometry(2e-6, L)
    th = ThermalSpec(T)
    p = SolverParams(ell_max=default_lmax(g), xi_quad_tol=1e-6)
    h = 1e-4 * L
    # positive force means attraction, i.e. dF/dL > 0
    fd = (free_energy(g.with_L(L + h), MODELS[kind], th, p) - free_energy(g.with_L(L - h), MODELS[kind], th, p)) / (2 * h)
    assert force(g, MODELS[kind], th, p) == pytest.approx(fd, rel=1e-4, abs=0)


@pytest.mark.parametrize("kind", sorted(MODELS))
def test_force_decreases_with_distance(kind):
    R = 1e-6
    for L in (0.5e-6, 2e-6):
        near = force(Geometry(R, L), MODELS[kind], T300)
        far = force(Geometry(R, 1.5 * L), MODELS[kind], T300)
        assert near > far > 0


def test_zero_frequency_nodes():
    g = Geometry(1e-6, 1e-6)
    p = SolverParams()
    assert zero_frequency_nodes(g, PERFECT, p) == p.xi0_epsilons
    e1, e2 = zero_frequency_nodes(g, DRUDE, p)
    gamma_x = DRUDE.gamma * g.center_distance / c
    assert e1 <= 1e-3 * gamma_x and e2 < e1
    assert e2 / e1 == pytest.approx(p.xi0_epsilons[1] / p.xi0_epsilons[0], abs=0)


def test_drude_and_plasma_zero_frequency_terms_do_not_connect():
    g = Geometry(1e-6, 2e-6)
    lmax = 20
    rule = QuadratureRule.laguerre(40)
    p = SolverParams()
    plasma = _zero_term(g, MaterialModel.plasma(), lmax, rule, p, False).logdet
    # relaxation wavelength pushed towards infinity
    drude = _zero_term(g, MaterialModel.drude(lambda_gamma=1e6 * 136e-9), lmax, rule, p, False).logdet
    assert abs(drude - plasma) > 0.1 * abs(plasma)


def test_entropy_perfect_is_negative_at_intermediate_distance():
    g = Geometry(0.1e-6, 1e-6)
    s = entropy(g, PERFECT, T300)
    assert s < 0
    assert s == pytest.approx(perfect_asymptotics(g, T300)[1], rel=5e-2, abs=0)


def test_entropy_matches_perfect_asymptotics():
    g = Geometry(0.02e-6, 0.98e-6)
    assert entropy(g, PERFECT, T300) == pytest.approx(perfect_asymptotics(g, T300)[1], rel=5e-2, abs=0)
    with pytest.raises(DomainError):
        entropy(g, PERFECT, T0)


def test_entropy_high_temperature_limit():
    s = entropy(FAR, PERFECT, ThermalSpec(600.0))
    assert s == pytest.approx(3 * kB * FAR.R ** 3 / (8 * FAR.center_distance ** 3), rel=1e-2, abs=0)


def test_entropy_richardson_consistent():
    g = Geometry(0.5e-6, 5e-6)
    plain = entropy(g, DRUDE, T300, richardson=False)
    assert entropy(g, DRUDE, T300) == pytest.approx(plain, rel=1e-3, abs=0)


def test_theta_limits():
    assert theta(Geometry(0.2e-6, 0.1e-6), PERFECT, T300) == pytest.approx(1.0, abs=1e-3)
    assert theta(Geometry(0.1e-6, 1e-6), PERFECT, T300) < 1.0
    hot, warm = theta(FAR, PERFECT, ThermalSpec(600.0)), theta(FAR, PERFECT, T300)
    assert hot / warm == pytest.approx(2.0, rel=1e-2, abs=0)


def test_rho_F_behaviour():
    p = SolverParams()
    # scale invariance of perfect mirrors at zero temperature
    a = rho_F(Geometry(1e-6, 1e-6), PERFECT, T0, p)
    b = rho_F(Geometry(2e-6, 2e-6), PERFECT, T0, p)
    assert a == pytest.approx(b, rel=1e-6, abs=0)
    assert a < 1.0
    vals = [rho_F(Geometry(r * 1e-6, 1e-6), PERFECT, T0, p) for r in (0.5, 1.0, 2.0, 4.0)]
    assert all(x < y for x, y in zip(vals, vals[1:])) and vals[-1] < 1.0


def test_compute_reports_everything():
    g = Geometry(1e-6, 1e-6)
    res = compute(g, DRUDE, T300)
    assert res.free_energy < 0 and res.force > 0
    assert res.rho_F == pytest.approx(res.force / pfa_force(g, DRUDE, T300), rel=1e-12, abs=0)
    assert res.theta == pytest.approx(res.force / force_zero_T(g, DRUDE), rel=1e-12, abs=0)
    assert res.entropy == pytest.approx(entropy(g, DRUDE, T300), rel=1e-12, abs=0)
    assert res.diagnostics["ell_max"] == 15
    zero = compute(g, DRUDE, T0)
    assert math.isnan(zero.entropy) and zero.theta == pytest.approx(1.0, rel=1e-12, abs=0)
    with pytest.raises(DomainError):
        compute(g, DRUDE, T300, observables=("pressure",))


def test_matsubara_cap_raises():
    with pytest.raises(ConvergenceError):
        free_energy(Geometry(1e-6, 1e-6), PERFECT, ThermalSpec(1.0), SolverParams(n_max_cap=5))


def test_workers_give_identical_results():
    g = Geometry(1e-6, 1e-6)
    one = compute(g, DRUDE, T300, SolverParams(workers=1), observables=("free_energy", "force"))
    two = compute(g, DRUDE, T300, SolverParams(workers=3), observables=("free_energy", "force"))
    assert one.free_energy == two.free_energy and one.force == two.force


@pytest.mark.slow
def test_lmax_doubling_changes_little():
    g = Geometry(5e-6, 1e-6)
    base = free_energy(g, DRUDE, T300)
    doubled = free_energy(g, DRUDE, T300, SolverParams(ell_max=2 * default_lmax(g)))
    assert doubled == pytest.approx(base, rel=1e-3, abs=0)
