r"""Mirror models on the imaginary frequency axis: permittivity, Fresnel and Mie coefficients.

Three models are supported:

* ``perfect`` -- infinite permittivity at every frequency,
* ``plasma``  -- :math:`\epsilon(i\xi) = 1 + \omega_P^2/\xi^2`,
* ``drude``   -- :math:`\epsilon(i\xi) = 1 + \omega_P^2/(\xi(\xi+\gamma))`.

Mie coefficients are the standard (Bohren-Huffman) ones continued to
:math:`\omega = i\xi`. In terms of :math:`\bar I = I_{\ell+1/2}(\tilde\xi)`,
:math:`\bar K = K_{\ell+1/2}(\tilde\xi)` and the ratio
:math:`q_\ell(z) = I_{\ell+3/2}(z)/I_{\ell+1/2}(z)` they read

.. math::
    a_\ell = (-1)^\ell\frac{\pi}{2}\frac{\bar I}{\bar K}
        \frac{(n^2-1)(\ell+1) + n^2\tilde\xi q_\ell(\tilde\xi) - n\tilde\xi q_\ell(n\tilde\xi)}
             {n^2 g_\ell + \ell + 1 + n\tilde\xi q_\ell(n\tilde\xi)},\qquad
    b_\ell = (-1)^\ell\frac{\pi}{2}\frac{\bar I}{\bar K}
        \frac{\tilde\xi q_\ell(\tilde\xi) - n\tilde\xi q_\ell(n\tilde\xi)}
             {g_\ell + \ell + 1 + n\tilde\xi q_\ell(n\tilde\xi)},

with :math:`g_\ell = \ell + \tilde\xi K_{\ell-1/2}/K_{\ell+1/2}`. This form divides
out :math:`I_{\ell+1/2}(n\tilde\xi)` (which overflows for a Drude sphere at low
frequency) and has no cancellation of the constant terms in the numerators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.constants import c as C_LIGHT

from .errors import DomainError
from .specfun import ScaledReal, log_bessel_i_table, log_bessel_k_table

__all__ = [
    "MaterialModel",
    "MiePair",
    "MieTable",
    "ZeroFreqCoefficients",
    "GOLD_LAMBDA_P",
    "GOLD_LAMBDA_GAMMA",
    "epsilon",
    "fresnel",
    "fresnel_arrays",
    "mie",
    "mie_table",
    "mie_zero_freq_expansion",
]

GOLD_LAMBDA_P = 136e-9
GOLD_LAMBDA_GAMMA = 250 * GOLD_LAMBDA_P

KINDS = ("perfect", "plasma", "drude")


@dataclass(frozen=True)
class MaterialModel:
    """Immutable description of the mirror material (sphere and plate share it)."""

    kind: str
    lambda_p: float | None = None
    lambda_gamma: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("plasma", "drude"):
            if self.lambda_p is None or not (self.lambda_p > 0 and math.isfinite(self.lambda_p)):
                raise DomainError(f"{self.kind} model needs lambda_p > 0")
        if self.kind == "drude":
            if self.lambda_gamma is None or not (self.lambda_gamma > 0 and math.isfinite(self.lambda_gamma)):
                raise DomainError("drude model needs lambda_gamma > 0")
        if self.kind == "perfect":
            object.__setattr__(self, "lambda_p", None)
            object.__setattr__(self, "lambda_gamma", None)
        if self.kind == "plasma":
            object.__setattr__(self, "lambda_gamma", None)

    @classmethod
    def perfect(cls) -> "MaterialModel":
        return cls("perfect")

    @classmethod
    def plasma(cls, lambda_p: float = GOLD_LAMBDA_P) -> "MaterialModel":
        return cls("plasma", lambda_p)

    @classmethod
    def drude(cls, lambda_p: float = GOLD_LAMBDA_P, lambda_gamma: float | None = None) -> "MaterialModel":
        return cls("drude", lambda_p, 250 * lambda_p if lambda_gamma is None else lambda_gamma)

    @property
    def is_perfect(self) -> bool:
        return self.kind == "perfect"

    @property
    def omega_p(self) -> float:
        """Plasma frequency in rad/s."""
        return 2 * math.pi * C_LIGHT / self.lambda_p

    @property
    def gamma(self) -> float:
        """Relaxation frequency in rad/s (zero for the plasma model)."""
        if self.kind != "drude":
            return 0.0
        return 2 * math.pi * C_LIGHT / self.lambda_gamma

    @property
    def sigma0(self) -> float:
        """dc conductivity omega_P^2/gamma in 1/s (infinite unless Drude)."""
        if self.kind != "drude":
            return math.inf
        return self.omega_p ** 2 / self.gamma

    def alpha(self, radius: float) -> float:
        """Dimensionless sphere size 2 pi R / lambda_P."""
        if self.kind == "perfect":
            return math.inf
        return 2 * math.pi * radius / self.lambda_p

    def eps_minus_one(self, xi: float) -> float:
        """epsilon(i xi) - 1, computed without forming epsilon."""
        if self.kind == "perfect":
            return math.inf
        if self.kind == "plasma":
            return (self.omega_p / xi) ** 2
        return self.omega_p ** 2 / (xi * (xi + self.gamma))

    def chi(self, xi: float) -> float:
        """(epsilon - 1) xi^2 / c^2 in 1/m^2; finite as xi -> 0."""
        if self.kind == "perfect":
            return math.inf
        wp = self.omega_p / C_LIGHT
        if self.kind == "plasma":
            return wp * wp
        return wp * wp * xi / (xi + self.gamma)


def epsilon(model: MaterialModel, xi: float) -> float:
    r"""Permittivity :math:`\epsilon(i\xi)`; ``math.inf`` flags the perfect reflector."""
    xi = float(xi)
    if not math.isfinite(xi) or xi <= 0.0:
        raise DomainError(f"xi must be finite and positive, got {xi}")
    if model.is_perfect:
        return math.inf
    return 1.0 + model.eps_minus_one(xi)


def fresnel_arrays(kappa: np.ndarray, xi: float, model: MaterialModel) -> tuple[np.ndarray, np.ndarray]:
    """TE and TM reflection amplitudes for an array of kappa = sqrt(xi^2/c^2 + k^2) (1/m).

    ``xi = 0`` is allowed and gives the static limits.
    """
    kappa = np.asarray(kappa, dtype=float)
    if model.is_perfect:
        return -np.ones_like(kappa), np.ones_like(kappa)
    if xi == 0.0:
        if model.kind == "drude":
            return np.zeros_like(kappa), np.ones_like(kappa)
        kp = np.sqrt(kappa * kappa + (model.omega_p / C_LIGHT) ** 2)
        return -(kp - kappa) / (kp + kappa), np.ones_like(kappa)
    chi = model.chi(xi)
    em1 = model.eps_minus_one(xi)
    km = np.sqrt(kappa * kappa + chi)
    # kappa - kappa_m = -chi / (kappa + kappa_m)
    diff = -chi / (kappa + km)
    r_te = diff / (kappa + km)
    r_tm = (em1 * kappa + diff) / ((2.0 + em1) * kappa - diff)
    return r_te, r_tm


def fresnel(p: str, k: float, xi: float, model: MaterialModel) -> float:
    """Specular reflection amplitude of the plate; perfect mirror gives TE -1, TM +1."""
    if not (math.isfinite(k) and math.isfinite(xi)) or k < 0.0 or xi <= 0.0:
        raise DomainError(f"need finite k >= 0 and xi > 0, got k={k}, xi={xi}")
    kappa = math.hypot(xi / C_LIGHT, k)
    r_te, r_tm = fresnel_arrays(np.array([kappa]), xi, model)
    p = p.upper()
    if p == "TE":
        return float(r_te[0])
    if p == "TM":
        return float(r_tm[0])
    raise DomainError(f"polarization must be 'TE' or 'TM', got {p!r}")


class MiePair(NamedTuple):
    a: ScaledReal
    b: ScaledReal
    ell: int
    xi_tilde: float


class MieTable(NamedTuple):
    """Mie coefficients for l = 1..lmax as signs and log-magnitudes (index 0 is l = 1)."""

    sign_a: np.ndarray
    log_a: np.ndarray
    sign_b: np.ndarray
    log_b: np.ndarray


def _sphere_eps_minus_one(model: MaterialModel, xi_tilde: float, radius: float | None) -> float:
    if model.is_perfect:
        return math.inf
    if radius is None or not radius > 0:
        raise DomainError(f"{model.kind} sphere needs a positive radius to convert the size parameter")
    return model.eps_minus_one(xi_tilde * C_LIGHT / radius)


def mie_table(lmax: int, xi_tilde: float, model: MaterialModel, radius: float | None = None) -> MieTable:
    """Mie coefficients a_l, b_l for l = 1..lmax at size parameter xi R / c."""
    xi_tilde = float(xi_tilde)
    if not math.isfinite(xi_tilde) or xi_tilde <= 0.0:
        raise DomainError(f"xi_tilde must be finite and positive, got {xi_tilde}")
    if lmax < 1:
        raise DomainError(f"lmax must be >= 1, got {lmax}")
    ell = np.arange(1, lmax + 1)
    logI, q = log_bessel_i_table(lmax, xi_tilde)
    logK = log_bessel_k_table(lmax, xi_tilde)
    log_ratio = logI[1:] - logK[1:] + math.log(math.pi / 2)
    g = ell + xi_tilde * np.exp(logK[:-1] - logK[1:])
    fq = xi_tilde * q[1:]
    parity = np.where(ell % 2 == 0, 1.0, -1.0)  # (-1)^l

    em1 = _sphere_eps_minus_one(model, xi_tilde, radius)
    if math.isinf(em1):
        num_a = ell + 1 + fq
        den_a = g
        sign_a = parity
        log_a = log_ratio + np.log(num_a / den_a)
        sign_b = -parity
        log_b = log_ratio.copy()
        return MieTable(sign_a, log_a, sign_b, log_b)

    n2 = 1.0 + em1
    w = math.sqrt(n2) * xi_tilde
    _, qw = log_bessel_i_table(lmax, w)
    fw = w * qw[1:]
    num_a = em1 * (ell + 1) + n2 * fq - fw
    den_a = n2 * g + ell + 1 + fw
    num_b = fq - fw
    den_b = g + ell + 1 + fw
    with np.errstate(divide="ignore"):
        log_a = log_ratio + np.log(np.abs(num_a) / den_a)
        log_b = log_ratio + np.log(np.abs(num_b) / den_b)
    sign_a = parity * np.sign(num_a)
    sign_b = parity * np.sign(num_b)
    return MieTable(sign_a, log_a, sign_b, log_b)


def mie(ell: int, xi_tilde: float, model: MaterialModel, radius: float | None = None) -> MiePair:
    """Electric and magnetic Mie coefficients of order ``ell`` at size parameter ``xi_tilde``.

    ``radius`` (m) is needed for plasma and Drude spheres to evaluate
    the permittivity at xi = xi_tilde c / R.
    """
    if ell < 1:
        raise DomainError(f"ell must be >= 1, got {ell}")
    t = mie_table(ell, xi_tilde, model, radius)
    return MiePair(ScaledReal.from_log(int(t.sign_a[-1]), float(t.log_a[-1])),
                   ScaledReal.from_log(int(t.sign_b[-1]), float(t.log_b[-1])),
                   ell, float(xi_tilde))


class ZeroFreqCoefficients(NamedTuple):
    """Leading small-frequency behaviour a_1 ~ coef_a xi~^3, b_1 ~ coef_b xi~^power_b."""

    coef_a: float
    coef_b: float
    power_b: int


def mie_zero_freq_expansion(ell: int, model: MaterialModel, radius: float | None = None) -> ZeroFreqCoefficients:
    """Leading coefficients of the dipole Mie amplitudes as xi -> 0.

    For Drude spheres the magnetic term is of higher order; ``power_b = 4``
    marks it and the coefficient is sigma_0 R / (45 c). It is a leading-order
    estimate only and should not be used beyond xi~ ~ 1e-2.
    """
    if ell != 1:
        raise NotImplementedError(f"small-frequency expansion only implemented for ell = 1, got {ell}")
    if model.is_perfect:
        return ZeroFreqCoefficients(-2.0 / 3.0, 1.0 / 3.0, 3)
    if radius is None or not radius > 0:
        raise DomainError("plasma and Drude expansions need a positive radius")
    if model.kind == "plasma":
        alpha = model.alpha(radius)
        return ZeroFreqCoefficients(-2.0 / 3.0, 1.0 / 3.0 + 1.0 / alpha ** 2 - 1.0 / (alpha * math.tanh(alpha)), 3)
    return ZeroFreqCoefficients(-2.0 / 3.0, model.sigma0 * radius / (45.0 * C_LIGHT), 4)
