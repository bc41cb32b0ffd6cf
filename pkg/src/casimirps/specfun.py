r"""Overflow-safe special functions at imaginary frequency.

Everything here works with a sign/log-magnitude representation because the
quantities entering the round-trip operator span hundreds of decades: rotation
matrix elements at :math:`\cos\theta = c\kappa/\xi \gg 1` grow like
:math:`u^\ell` while the propagation factor :math:`e^{-2\kappa\mathcal{L}}` and
the Mie coefficients shrink just as fast.

The angles used by the scattering kernels are imaginary,

.. math::
    \cos\theta^\pm = \pm u,\qquad \sin\theta^\pm = -iv,\qquad u^2 - v^2 = 1,

so every spherical harmonic and rotation matrix element is a real number times
an integer power of :math:`i`. The power is returned separately as ``phase``
(an integer modulo 4) and the real factor as a :class:`ScaledReal`.

Two evaluation routes exist on purpose:

* scalar functions (:func:`bessel_i_half`, :func:`wigner_d_pm1`,
  :func:`ylm_and_dtheta`, ...) that return :class:`ScaledReal` values,
* vectorised table builders (:func:`log_bessel_i_table`,
  :func:`rotation_tables`, :func:`legendre_table`) used during block assembly.

They use different recurrences or closed forms, so the tests can check one
against the other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ive

from .errors import ConvergenceError, DomainError

__all__ = [
    "ScaledReal",
    "HyperbolicAngle",
    "WignerPair",
    "YlmPair",
    "bessel_i_half",
    "bessel_k_half",
    "wigner_d_pm1",
    "ylm_and_dtheta",
    "log_bessel_i_table",
    "log_bessel_k_table",
    "legendre_table",
    "rotation_tables",
]

# exp() overflows above ~709.78
_LOG_MAX = 709.0
_RESCALE = 1e150


@dataclass(frozen=True)
class ScaledReal:
    """Real number stored as ``sign * exp(log_mag)``."""

    sign: int
    log_mag: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign}")
        if self.sign == 0 and self.log_mag != -math.inf:
            object.__setattr__(self, "log_mag", -math.inf)

    @classmethod
    def from_float(cls, x: float) -> "ScaledReal":
        if not math.isfinite(x):
            raise DomainError(f"cannot scale non-finite value {x}")
        if x == 0.0:
            return cls(0, -math.inf)
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @classmethod
    def from_log(cls, sign: int, log_mag: float) -> "ScaledReal":
        if sign == 0 or log_mag == -math.inf:
            return cls(0, -math.inf)
        return cls(int(sign), float(log_mag))

    def to_float(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.log_mag > _LOG_MAX:
            raise OverflowError(f"log magnitude {self.log_mag:.6g} does not fit a double")
        return self.sign * math.exp(self.log_mag)

    __float__ = to_float

    def __neg__(self) -> "ScaledReal":
        return ScaledReal(-self.sign, self.log_mag)

    def __mul__(self, other) -> "ScaledReal":
        if not isinstance(other, ScaledReal):
            other = ScaledReal.from_float(float(other))
        if self.sign == 0 or other.sign == 0:
            return ScaledReal(0, -math.inf)
        return ScaledReal(self.sign * other.sign, self.log_mag + other.log_mag)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "ScaledReal":
        if not isinstance(other, ScaledReal):
            other = ScaledReal.from_float(float(other))
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero ScaledReal")
        if self.sign == 0:
            return self
        return ScaledReal(self.sign * other.sign, self.log_mag - other.log_mag)

    def __add__(self, other) -> "ScaledReal":
        if not isinstance(other, ScaledReal):
            other = ScaledReal.from_float(float(other))
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        hi, lo = (self, other) if self.log_mag >= other.log_mag else (other, self)
        ratio = math.exp(lo.log_mag - hi.log_mag)
        mant = 1.0 + hi.sign * lo.sign * ratio
        if mant == 0.0:
            return ScaledReal(0, -math.inf)
        return ScaledReal(hi.sign if mant > 0 else -hi.sign, hi.log_mag + math.log(abs(mant)))

    __radd__ = __add__

    def __sub__(self, other) -> "ScaledReal":
        if not isinstance(other, ScaledReal):
            other = ScaledReal.from_float(float(other))
        return self + (-other)


@dataclass(frozen=True)
class HyperbolicAngle:
    r"""Imaginary scattering angle with :math:`\cos\theta = \pm u`, :math:`\sin\theta = -iv`."""

    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise DomainError("hyperbolic angle components must be finite")
        if self.u < 1.0 or self.v < 0.0:
            raise DomainError(f"need u >= 1 and v >= 0, got u={self.u}, v={self.v}")
        # (u - v)(u + v) avoids cancellation when both are large
        if abs((self.u - self.v) * (self.u + self.v) - 1.0) > 1e-12 * max(1.0, self.u * self.u):
            raise DomainError(f"u^2 - v^2 must equal 1 (u={self.u}, v={self.v})")

    @classmethod
    def from_wavenumber(cls, k: float, xi: float, c: float = 299792458.0) -> "HyperbolicAngle":
        """Angle for transverse wavenumber ``k`` (1/m) at imaginary frequency ``xi`` (rad/s)."""
        if not (xi > 0.0) or not (k >= 0.0):
            raise DomainError(f"need xi > 0 and k >= 0, got xi={xi}, k={k}")
        q = xi / c
        return cls(math.hypot(q, k) / q, k / q)

    @classmethod
    def from_cos(cls, u: float) -> "HyperbolicAngle":
        if u < 1.0:
            raise DomainError(f"u must be >= 1, got {u}")
        return cls(u, math.sqrt((u - 1.0) * (u + 1.0)))


class WignerPair(NamedTuple):
    """``d^l_{m,+1}`` and ``d^l_{m,-1}``; the true values are ``i**phase`` times these."""

    d_plus: ScaledReal
    d_minus: ScaledReal
    phase: int


class YlmPair(NamedTuple):
    """``Y_lm(theta, 0)`` and its theta-derivative, each with its own i-power."""

    y: ScaledReal
    dy: ScaledReal
    phase_y: int
    phase_dy: int


def _check_positive(x: float, name: str = "x") -> float:
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"{name} must be finite and positive, got {x}")
    return x


def _log_sinh(x: float) -> float:
    if x < 20.0:
        return math.log(math.sinh(x))
    return x - math.log(2.0) + math.log1p(-math.exp(-2.0 * x))


# ----------------------------------------------------------------------------
# modified Bessel functions of half-integer order
# ----------------------------------------------------------------------------

def _i_ratio_cf(nu: float, x: float) -> float:
    """I_{nu+1}(x)/I_nu(x) by modified Lentz on the standard continued fraction."""
    tiny = 1e-300
    f = tiny
    C = f
    D = 0.0
    for j in range(1, 200000):
        b = 2.0 * (nu + j) / x
        a = 1.0
        D = b + a * D
        D = tiny if D == 0.0 else D
        C = b + a / C
        C = tiny if C == 0.0 else C
        D = 1.0 / D
        delta = C * D
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            return f
    raise ConvergenceError(f"continued fraction for I ratio did not converge (nu={nu}, x={x})")


def _i_ratio(nu: float, x: float) -> float:
    hi, lo = ive(nu + 1.0, x), ive(nu, x)
    if lo > 1e-290 and hi > 0.0 and math.isfinite(hi):
        return hi / lo
    return _i_ratio_cf(nu, x)


def log_bessel_i_table(lmax: int, x: float) -> tuple[np.ndarray, np.ndarray]:
    r"""Logs of :math:`I_{\ell+1/2}(x)` for :math:`\ell=0..l_{max}`, plus ratios.

    Returns ``(logI, q)`` with ``q[l] = I_{l+3/2}(x) / I_{l+1/2}(x)``.

    The top ratio is seeded from exponentially scaled Bessel functions (or a
    continued fraction when those underflow) and the rest follow by the
    downward recurrence, which is stable for every ``x``.
    """
    x = _check_positive(x)
    L = int(lmax)
    q = np.empty(L + 1)
    q[L] = _i_ratio(L + 0.5, x)
    for ell in range(L, 0, -1):
        q[ell - 1] = 1.0 / ((2 * ell + 1) / x + q[ell])
    logI = np.empty(L + 1)
    logI[0] = 0.5 * math.log(2.0 / (math.pi * x)) + _log_sinh(x)
    if L > 0:
        logI[1:] = logI[0] + np.cumsum(np.log(q[:-1]))
    return logI, q


def log_bessel_k_table(lmax: int, x: float) -> np.ndarray:
    r"""Logs of :math:`K_{\ell+1/2}(x)` for :math:`\ell=0..l_{max}` by upward recurrence."""
    x = _check_positive(x)
    L = int(lmax)
    logK = np.empty(L + 1)
    logK[0] = 0.5 * math.log(math.pi / (2.0 * x)) - x
    p = 1.0  # K_{l+1/2} / K_{l-1/2}
    for ell in range(1, L + 1):
        p = 1.0 + 1.0 / x if ell == 1 else 1.0 / p + (2 * ell - 1) / x
        logK[ell] = logK[ell - 1] + math.log(p)
    return logK


def _bessel_i_series(ell: int, x: float) -> ScaledReal:
    nu = ell + 0.5
    z = 0.25 * x * x
    term = 1.0
    total = 1.0
    for k in range(1, 500):
        term *= z / (k * (nu + k))
        total += term
        if term < 1e-17 * total:
            break
    return ScaledReal(1, nu * math.log(0.5 * x) - math.lgamma(nu + 1.0) + math.log(total))


def bessel_i_half(ell: int, x: float) -> ScaledReal:
    r"""Modified Bessel function :math:`I_{\ell+1/2}(x)` in scaled form."""
    x = _check_positive(x)
    if ell < 0:
        raise DomainError(f"order index must be >= 0, got {ell}")
    if ell == 0:
        return ScaledReal(1, 0.5 * math.log(2.0 / (math.pi * x)) + _log_sinh(x))
    if ell == 1 and x >= 0.1 * (ell + 1):
        # sqrt(2/(pi x)) (cosh x - sinh x / x)
        val = math.log(1.0 / math.tanh(x) - 1.0 / x) + _log_sinh(x)
        return ScaledReal(1, 0.5 * math.log(2.0 / (math.pi * x)) + val)
    if x < 0.1 * (ell + 1):
        return _bessel_i_series(ell, x)
    logI, _ = log_bessel_i_table(ell, x)
    return ScaledReal(1, float(logI[ell]))


def bessel_k_half(ell: int, x: float) -> ScaledReal:
    r"""Modified Bessel function :math:`K_{\ell+1/2}(x)` from its terminating closed form.

    .. math::
        K_{\ell+1/2}(x) = \sqrt{\frac{\pi}{2x}}\,e^{-x}
        \sum_{k=0}^{\ell}\frac{(\ell+k)!}{k!\,(\ell-k)!}\,(2x)^{-k}
    """
    x = _check_positive(x)
    if ell < 0:
        raise DomainError(f"order index must be >= 0, got {ell}")
    k = np.arange(ell + 1)
    logs = (np.array([math.lgamma(ell + kk + 1) - math.lgamma(kk + 1) - math.lgamma(ell - kk + 1)
                      for kk in k]) - k * math.log(2.0 * x))
    top = logs.max()
    log_sum = top + math.log(np.exp(logs - top).sum())
    return ScaledReal(1, 0.5 * math.log(math.pi / (2.0 * x)) - x + log_sum)


# ----------------------------------------------------------------------------
# rotation matrix elements and spherical harmonics (scalar route)
# ----------------------------------------------------------------------------

def _log_norm_wigner_seed(m: int) -> float:
    # sqrt((2m)! / ((m+1)! (m-1)!))
    return 0.5 * (math.lgamma(2 * m + 1) - math.lgamma(m + 2) - math.lgamma(m))


def _wigner_column(ell: int, m: int, mp: int, x: float, v: float) -> ScaledReal:
    """Real part of d^ell_{m,mp}(theta) for m >= 0, mp = +-1, cos(theta) = x, sin(theta) = -iv.

    The i-power is i**(m-1) for every ell.
    """
    if m == 0:
        lo = 1
        cur = mp * v / math.sqrt(2.0)
        log_s = 0.0
    else:
        lo = m
        cur = 0.5 * (1.0 + mp * x)
        log_s = _log_norm_wigner_seed(m)
        if m > 1:
            if v == 0.0:
                return ScaledReal(0, -math.inf)
            log_s += (m - 1) * math.log(0.5 * v)
    prev = 0.0
    for l in range(lo, ell):
        alpha = l * math.sqrt((l + 1) ** 2 - m * m) * math.sqrt((l + 1) ** 2 - 1)
        beta = (2 * l + 1) * (l * (l + 1) * x - m * mp)
        gamma = (l + 1) * math.sqrt(l * l - m * m) * math.sqrt(l * l - 1)
        nxt = (beta * cur - gamma * prev) / alpha
        prev, cur = cur, nxt
        s = max(abs(prev), abs(cur))
        if s > _RESCALE or (0.0 < s < 1.0 / _RESCALE):
            prev /= s
            cur /= s
            log_s += math.log(s)
    if cur == 0.0:
        return ScaledReal(0, -math.inf)
    return ScaledReal(1 if cur > 0 else -1, log_s + math.log(abs(cur)))


def wigner_d_pm1(ell: int, m: int, angle: HyperbolicAngle, branch: str = "+") -> WignerPair:
    r"""Rotation matrix elements :math:`d^\ell_{m,\pm1}(\theta^{\pm})`.

    ``branch`` selects :math:`\cos\theta = +u` or :math:`-u`. Returned reals must
    be multiplied by :math:`i^{\text{phase}}`, ``phase = (|m| - 1) mod 4``.
    """
    if abs(m) > ell:
        raise DomainError(f"|m| = {abs(m)} exceeds ell = {ell}")
    if ell < max(1, abs(m)):
        raise DomainError(f"ell must be >= max(1, |m|), got ell={ell}")
    x = _branch_cos(angle, branch)
    am = abs(m)
    dp = _wigner_column(ell, am, 1, x, angle.v)
    dm = _wigner_column(ell, am, -1, x, angle.v)
    if m < 0:
        # d_{-m,1} = (-1)^(m+1) d_{m,-1},  d_{-m,-1} = (-1)^(m-1) d_{m,1}
        s = -1 if am % 2 == 0 else 1
        dp, dm = (dm if s > 0 else -dm), (dp if s > 0 else -dp)
    return WignerPair(dp, dm, (am - 1) % 4)


def _branch_cos(angle: HyperbolicAngle, branch: str) -> float:
    if branch == "+":
        return angle.u
    if branch == "-":
        return -angle.u
    raise DomainError(f"branch must be '+' or '-', got {branch!r}")


def _legendre_scalar(ell: int, m: int, x: float) -> tuple[float, float]:
    """N_lm P_l^{(m)}(x) as (mantissa, log scale); zero when m > ell."""
    if m > ell:
        return 0.0, 0.0
    log_s = (0.5 * math.log((2 * m + 1) / (4.0 * math.pi)) + 0.5 * math.lgamma(2 * m + 1)
             - m * math.log(2.0) - math.lgamma(m + 1))
    prev, cur = 0.0, 1.0
    for l in range(m, ell):
        a = math.sqrt((4.0 * (l + 1) ** 2 - 1.0) / ((l + 1) ** 2 - m * m))
        b = math.sqrt((l * l - m * m) / (4.0 * l * l - 1.0)) if l > m else 0.0
        prev, cur = cur, a * (x * cur - b * prev)
        s = max(abs(prev), abs(cur))
        if s > _RESCALE or (0.0 < s < 1.0 / _RESCALE):
            prev /= s
            cur /= s
            log_s += math.log(s)
    return cur, log_s


def ylm_and_dtheta(ell: int, m: int, angle: HyperbolicAngle, branch: str = "+") -> YlmPair:
    r"""Orthonormal :math:`Y_{\ell m}(\theta, 0)` and :math:`\partial_\theta Y_{\ell m}` (Condon-Shortley phase).

    With :math:`P^{(m)}_\ell` the m-th derivative of the Legendre polynomial,

    .. math::
        Y_{\ell m} = i^{-m}\,(-1)^m N_{\ell m} v^m P^{(m)}_\ell(x),\qquad
        \partial_\theta Y_{\ell m} = i^{1-m}\,(-1)^m N_{\ell m} v^{m-1}
        \left[m x P^{(m)}_\ell(x) + v^2 P^{(m+1)}_\ell(x)\right].
    """
    if m < 0 or m > ell or ell < 1:
        raise DomainError(f"need 0 <= m <= ell and ell >= 1, got ell={ell}, m={m}")
    x = _branch_cos(angle, branch)
    v = angle.v
    sgn_m = -1 if m % 2 else 1
    w0, lw0 = _legendre_scalar(ell, m, x)
    w1, lw1 = _legendre_scalar(ell, m + 1, x)
    # N_lm P^{(m+1)}_l = sqrt((l+m+1)(l-m)) N_{l,m+1} P^{(m+1)}_l
    c1 = math.sqrt((ell + m + 1) * (ell - m))
    if m > 0 and v == 0.0:
        y = ScaledReal(0, -math.inf)
    else:
        y = ScaledReal.from_float(sgn_m * w0) * ScaledReal(1, lw0 + m * math.log(v) if m else lw0)
    if m == 0:
        if v == 0.0 or w1 == 0.0:
            dy = ScaledReal(0, -math.inf)
        else:
            dy = ScaledReal.from_float(w1) * ScaledReal(1, lw1 + math.log(v) + math.log(c1))
    else:
        first = ScaledReal.from_float(m * x * w0) * ScaledReal(1, lw0)
        second = (ScaledReal.from_float(w1) * ScaledReal(1, lw1 + math.log(c1) + 2 * math.log(v))
                  if (w1 != 0.0 and v > 0.0) else ScaledReal(0, -math.inf))
        bracket = first + second
        if m > 1:
            bracket = bracket * ScaledReal(1, (m - 1) * math.log(v)) if v > 0 else ScaledReal(0, -math.inf)
        dy = bracket * sgn_m
    return YlmPair(y, dy, (-m) % 4, (1 - m) % 4)


# ----------------------------------------------------------------------------
# vectorised tables used by block assembly
# ----------------------------------------------------------------------------

def legendre_table(m: int, lmax: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r"""Normalised derivative polynomials :math:`N_{\ell m}P^{(m)}_\ell(x)`, rows :math:`\ell=m..l_{max}`.

    ``x`` is an array of nodes with ``x >= 1``. Returns ``(mant, log)`` of shape
    ``(lmax - m + 1, len(x))``; the value is ``mant * exp(log)``.
    """
    x = np.asarray(x, dtype=float)
    n = lmax - m + 1
    mant = np.zeros((max(n, 0), x.size))
    logs = np.zeros_like(mant)
    if n <= 0:
        return mant, logs
    log0 = (0.5 * math.log((2 * m + 1) / (4.0 * math.pi)) + 0.5 * math.lgamma(2 * m + 1)
            - m * math.log(2.0) - math.lgamma(m + 1))
    prev = np.zeros(x.size)
    cur = np.ones(x.size)
    lg = np.full(x.size, log0)
    mant[0] = cur
    logs[0] = lg
    for i, l in enumerate(range(m, lmax), start=1):
        a = math.sqrt((4.0 * (l + 1) ** 2 - 1.0) / ((l + 1) ** 2 - m * m))
        b = math.sqrt((l * l - m * m) / (4.0 * l * l - 1.0)) if l > m else 0.0
        nxt = a * (x * cur - b * prev)
        s = np.maximum(np.abs(nxt), np.abs(cur))
        s[s == 0.0] = 1.0
        prev = cur / s
        cur = nxt / s
        lg = lg + np.log(s)
        mant[i] = cur
        logs[i] = lg
    return mant, logs


def rotation_tables(m: int, lmax: int, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r"""Sum and difference :math:`d^\ell_{m,1} \pm d^\ell_{m,-1}` at :math:`\cos\theta = u`.

    Rows run over :math:`\ell = \max(1,m)..l_{max}`, ``m >= 0``. Returns
    ``(S, D, log)`` mantissas with a shared log scale; both carry the phase
    :math:`i^{m-1}`.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    lo = max(1, m)
    n = lmax - lo + 1
    S = np.zeros((max(n, 0), u.size))
    D = np.zeros_like(S)
    logs = np.zeros_like(S)
    if n <= 0:
        return S, D, logs
    with np.errstate(divide="ignore"):
        if m == 0:
            s_cur = np.zeros(u.size)
            d_cur = np.ones(u.size)
            lg = np.log(math.sqrt(2.0) * v)
        else:
            s_cur = np.ones(u.size)
            d_cur = u.copy()
            lg = np.full(u.size, _log_norm_wigner_seed(m)) + (m - 1) * np.log(0.5 * v) if m > 1 \
                else np.full(u.size, _log_norm_wigner_seed(m))
    s_prev = np.zeros(u.size)
    d_prev = np.zeros(u.size)
    S[0], D[0], logs[0] = s_cur, d_cur, lg
    for i, l in enumerate(range(lo, lmax), start=1):
        alpha = l * math.sqrt((l + 1) ** 2 - m * m) * math.sqrt((l + 1) ** 2 - 1)
        gamma = (l + 1) * math.sqrt(l * l - m * m) * math.sqrt(l * l - 1)
        c0 = (2 * l + 1) * l * (l + 1)
        c1 = (2 * l + 1) * m
        s_nxt = (c0 * u * s_cur - c1 * d_cur - gamma * s_prev) / alpha
        d_nxt = (c0 * u * d_cur - c1 * s_cur - gamma * d_prev) / alpha
        sc = np.maximum.reduce([np.abs(s_nxt), np.abs(d_nxt), np.abs(s_cur), np.abs(d_cur)])
        sc[sc == 0.0] = 1.0
        s_prev, d_prev = s_cur / sc, d_cur / sc
        s_cur, d_cur = s_nxt / sc, d_nxt / sc
        lg = lg + np.log(sc)
        S[i], D[i], logs[i] = s_cur, d_cur, lg
    return S, D, logs
