import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.constants import c

from casimirps.errors import DomainError
from casimirps.materials import (
    GOLD_LAMBDA_P,
    MaterialModel,
    epsilon,
    fresnel,
    fresnel_arrays,
    mie,
    mie_table,
    mie_zero_freq_expansion,
)

mp.mp.dps = 50
GOLD_DRUDE = MaterialModel.drude()
GOLD_PLASMA = MaterialModel.plasma()


def bohren_oracle(ell, xt, n):
    """Textbook Mie coefficients at imaginary size parameter, in extended precision."""
    def psi(z):
        return z * mp.sqrt(mp.pi / (2 * z)) * mp.besselj(ell + mp.mpf(1) / 2, z)

    def zeta(z):
        h = mp.besselj(ell + mp.mpf(1) / 2, z) + 1j * mp.bessely(ell + mp.mpf(1) / 2, z)
        return z * mp.sqrt(mp.pi / (2 * z)) * h

    b = 1j * mp.mpf(xt)
    n = mp.mpf(n)
    dpsi = lambda z: mp.diff(psi, z)
    dzeta = lambda z: mp.diff(zeta, z)
    a = ((n * psi(n * b) * dpsi(b) - psi(b) * dpsi(n * b))
         / (n * psi(n * b) * dzeta(b) - zeta(b) * dpsi(n * b)))
    bb = ((psi(n * b) * dpsi(b) - n * psi(b) * dpsi(n * b))
          / (psi(n * b) * dzeta(b) - n * zeta(b) * dpsi(n * b)))
    return a, bb


def test_epsilon_closed_forms():
    assert epsilon(GOLD_DRUDE, GOLD_DRUDE.gamma) == pytest.approx(1 + GOLD_DRUDE.omega_p ** 2 / (2 * GOLD_DRUDE.gamma ** 2), abs=0)
    assert epsilon(GOLD_PLASMA, GOLD_PLASMA.omega_p) == pytest.approx(2.0, rel=1e-15, abs=0)
    wp = 2 * math.pi * c / 136e-9
    g = wp / 250
    assert epsilon(GOLD_DRUDE, 1e15) == pytest.approx(1 + wp ** 2 / (1e15 * (1e15 + g)), rel=1e-14, abs=0)
    assert math.isinf(epsilon(MaterialModel.perfect(), 1e14))
    with pytest.raises(DomainError):
        epsilon(GOLD_DRUDE, 0.0)


def test_model_validation():
    with pytest.raises(DomainError):
        MaterialModel("metal")
    with pytest.raises(DomainError):
        MaterialModel.plasma(-1.0)
    with pytest.raises(DomainError):
        MaterialModel("drude", 1e-7, None)
    m = MaterialModel.drude()
    assert m.lambda_gamma == pytest.approx(250 * GOLD_LAMBDA_P, abs=0)
    assert m.sigma0 == pytest.approx(m.omega_p ** 2 / m.gamma, abs=0)
    assert m.alpha(2e-6) == pytest.approx(92.39978, rel=1e-6, abs=0)


def test_fresnel_limits():
    for k in (0.0, 1e5, 1e8):
        assert fresnel("TE", k, 1e13, MaterialModel.perfect()) == -1.0
        assert fresnel("TM", k, 1e13, MaterialModel.perfect()) == 1.0
    # a vanishingly small plasma frequency is vacuum
    vac = MaterialModel.plasma(1e6)
    assert abs(fresnel("TE", 1e6, 1e14, vac)) < 1e-12
    assert abs(fresnel("TM", 1e6, 1e14, vac)) < 1e-12
    # Drude TE reflection vanishes at low frequency
    vals = [abs(fresnel("TE", 1e6, xi, GOLD_DRUDE)) for xi in (1e10, 1e8, 1e6)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-3
    with pytest.raises(DomainError):
        fresnel("TE", -1.0, 1e13, GOLD_DRUDE)
    with pytest.raises(DomainError):
        fresnel("TX", 1.0, 1e13, GOLD_DRUDE)


@pytest.mark.parametrize("model", [GOLD_DRUDE, GOLD_PLASMA])
def test_fresnel_against_direct_formula(model):
    for k in (1e4, 3e6, 1e9):
        for xi in (1e11, 1e14, 1e16):
            eps = mp.mpf(epsilon(model, xi))
            kap = mp.sqrt((mp.mpf(xi) / c) ** 2 + k * k)
            km = mp.sqrt(eps * (mp.mpf(xi) / c) ** 2 + k * k)
            te = (kap - km) / (kap + km)
            tm = (eps * kap - km) / (eps * kap + km)
            assert fresnel("TE", k, xi, model) == pytest.approx(float(te), rel=1e-12, abs=1e-300)
            assert fresnel("TM", k, xi, model) == pytest.approx(float(tm), rel=1e-12, abs=0)


def test_fresnel_bounds_on_grid():
    ks = np.geomspace(1e2, 1e10, 50)
    xis = np.geomspace(1e8, 1e17, 50)
    for model in (GOLD_DRUDE, GOLD_PLASMA, MaterialModel.perfect()):
        for xi in xis:
            kappa = np.hypot(xi / c, ks)
            te, tm = fresnel_arrays(kappa, xi, model)
            assert np.all(np.abs(te) <= 1.0) and np.all(np.abs(tm) <= 1.0)
            assert np.all(te <= 0.0) and np.all(tm >= 0.0)


CASES = [
    ("perfect", None, [1e-3, 0.3, 4.0]),
    ("plasma", 2e-6, [1e-3, 0.05, 1.0, 8.0]),
    ("drude", 2e-6, [1e-4, 0.05, 1.0, 8.0]),
    ("drude", 0.1e-6, [1e-5, 2e-2, 0.7]),
]


@pytest.mark.parametrize("kind,R,xts", CASES)
def test_mie_against_bohren_oracle(kind, R, xts):
    model = {"perfect": MaterialModel.perfect(), "plasma": GOLD_PLASMA, "drude": GOLD_DRUDE}[kind]
    for xt in xts:
        n = 1e30 if kind == "perfect" else math.sqrt(epsilon(model, xt * c / R))
        if kind == "perfect":
            mp.mp.dps = 80
        for ell in (1, 2, 5):
            a_ref, b_ref = bohren_oracle(ell, xt, n)
            pair = mie(ell, xt, model, R)
            assert abs(a_ref.imag) < 1e-20 * abs(a_ref.real)
            assert float(pair.a) == pytest.approx(float(a_ref.real), rel=1e-10, abs=0)
            assert float(pair.b) == pytest.approx(float(b_ref.real), rel=1e-10, abs=0)
        mp.mp.dps = 50


def test_perfect_small_size_expansion():
    xt = 1e-3
    p = mie(1, xt, MaterialModel.perfect())
    assert float(p.a) == pytest.approx(-2 / 3 * xt ** 3, rel=1e-3, abs=0)
    assert float(p.b) == pytest.approx(1 / 3 * xt ** 3, rel=1e-3, abs=0)


def test_plasma_magnetic_coefficient_at_small_size():
    R = 2e-6
    zf = mie_zero_freq_expansion(1, GOLD_PLASMA, R)
    alpha = GOLD_PLASMA.alpha(R)
    assert zf.coef_b == pytest.approx(1 / 3 + 1 / alpha ** 2 - 1 / (alpha * math.tanh(alpha)), rel=1e-14, abs=0)
    assert zf.coef_b == pytest.approx(0.322628, abs=1e-6)
    xt = 1e-5
    assert float(mie(1, xt, GOLD_PLASMA, R).b) / xt ** 3 == pytest.approx(zf.coef_b, rel=1e-6, abs=0)
    # large alpha recovers the perfect reflector
    big = mie_zero_freq_expansion(1, MaterialModel.plasma(1e-12), 1.0)
    assert (big.coef_a, big.coef_b) == pytest.approx((-2 / 3, 1 / 3), rel=1e-9, abs=0)
    assert mie_zero_freq_expansion(1, MaterialModel.perfect()) == (-2 / 3, 1 / 3, 3)


def test_drude_dipole_small_size():
    # Rayleigh regime (sphere much thinner than the skin depth)
    R, xt = 0.1e-6, 1e-6
    p = mie(1, xt, GOLD_DRUDE, R)
    correction = c * xt ** 4 / (GOLD_DRUDE.sigma0 * R)
    assert (float(p.a) + 2 / 3 * xt ** 3) / correction == pytest.approx(2.0, rel=1e-3, abs=0)
    zf = mie_zero_freq_expansion(1, GOLD_DRUDE, R)
    assert zf.power_b == 4
    assert float(p.b) / xt ** 4 == pytest.approx(zf.coef_b, rel=1e-3, abs=0)
    with pytest.raises(NotImplementedError):
        mie_zero_freq_expansion(2, GOLD_DRUDE, R)


def test_drude_magnetic_dipole_suppressed():
    # valid once R sqrt(sigma0 xi) / c << 1
    R = 0.1e-6
    for xt in (1e-5, 1e-6, 1e-7):
        ratio = float(mie(1, xt, GOLD_DRUDE, R).b) / float(mie(1, xt, GOLD_PLASMA, R).b)
        assert 0 < ratio < 1e-2


@pytest.mark.parametrize("model,R", [(MaterialModel.perfect(), None), (GOLD_PLASMA, 1e-6), (GOLD_DRUDE, 1e-6)])
def test_small_size_scaling_exponent(model, R):
    for ell in (1, 2, 3):
        lo = abs(float(mie(ell, 1e-4, model, R).a))
        hi = abs(float(mie(ell, 1e-3, model, R).a))
        assert math.log10(hi / lo) == pytest.approx(2 * ell + 1, rel=1e-2, abs=0)


def test_plasma_approaches_perfect():
    model = MaterialModel.plasma(1e-10)
    R = 1e-5  # lambda_P / R = 1e-5
    for xt in (0.01, 0.3, 10.0):
        t_p = mie_table(5, xt, model, R)
        t_perf = mie_table(5, xt, MaterialModel.perfect())
        assert np.all(t_p.sign_a == t_perf.sign_a) and np.all(t_p.sign_b == t_perf.sign_b)
        assert np.allclose(np.exp(t_p.log_a - t_perf.log_a), 1, rtol=1e-3)
        assert np.allclose(np.exp(t_p.log_b - t_perf.log_b), 1, rtol=1e-3)


def test_mie_extreme_arguments_stay_finite():
    for xt in (1e-8, 1e3):
        t = mie_table(100, xt, GOLD_DRUDE, 5e-6)
        assert np.all(np.isfinite(t.log_a)) and np.all(np.isfinite(t.log_b))
    with pytest.raises(DomainError):
        mie(1, 0.0, GOLD_DRUDE, 1e-6)
    with pytest.raises(DomainError):
        mie(1, 1.0, GOLD_DRUDE)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.floats(1e-3, 50.0), st.sampled_from(["perfect", "plasma", "drude"]))
def test_table_agrees_with_scalar_and_signs(lmax, xt, kind):
    model = {"perfect": MaterialModel.perfect(), "plasma": GOLD_PLASMA, "drude": GOLD_DRUDE}[kind]
    R = 1e-6
    t = mie_table(lmax, xt, model, R)
    p = mie(lmax, xt, model, R)
    assert p.a.log_mag == pytest.approx(t.log_a[-1], rel=1e-12, abs=1e-12)
    # a_l carries (-1)^{l+1}, b_l (-1)^l for these models
    ell = np.arange(1, lmax + 1)
    assert np.all(t.sign_a == np.where(ell % 2, 1, -1) * -1)
    assert np.all(t.sign_b == np.where(ell % 2, 1, -1))
