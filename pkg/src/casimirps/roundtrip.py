r"""Round-trip matrices :math:`\mathcal M^{(m)}(\xi)` for the sphere-plate cavity.

For each azimuthal number ``m`` and imaginary frequency ``xi`` the round-trip
operator is a dense matrix indexed by (polarization P in {E, M}, multipole l),
with l running from ``max(1, |m|)`` to ``ell_max``. The E-M coupling blocks carry
a factor :math:`\pm i`; conjugating by ``diag(1 on E, i on M)`` makes every entry
real without changing :math:`\det(1-\mathcal M)`.

The k-integrals are evaluated with the substitution
:math:`\kappa = \xi/c + t/(2\mathcal L)`, which turns :math:`e^{-2\kappa\mathcal L}`
into :math:`e^{-2\xi\mathcal L/c}e^{-t}` and lets Gauss-Laguerre nodes carry the
weight. Angular functions at the imaginary angles are kept as log-magnitudes and
the assembled matrix is balanced by a diagonal similarity so that it fits in
double precision even when the raw entries would overflow.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.linalg import LinAlgWarning, eigh_tridiagonal, lu_factor, lu_solve
from scipy.special import roots_laguerre

from .errors import ConvergenceError, DomainError, SingularityError
from .geometry import C_LIGHT, Geometry, SolverParams
from .materials import MaterialModel, MieTable, fresnel_arrays, mie_table
from .specfun import ScaledReal, legendre_table, rotation_tables

__all__ = [
    "QuadratureRule",
    "SpectralBlock",
    "KernelSet",
    "kernel_ABCD",
    "assemble_block",
    "assemble_block_dL",
    "assemble_pair",
    "logdet_one_minus",
    "logdet_and_derivative",
    "spectral_radius",
    "check_quadrature",
]

# floor for log|prefactor| when a Mie coefficient vanishes exactly
_LOG_FLOOR = -1.0e4


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Laguerre rule for integrals of the form int_0^inf e^{-t} f(t) dt.

    Nodes whose weight underflows are dropped; ``log_weights`` keeps the rest.
    """

    order: int
    nodes: np.ndarray
    log_weights: np.ndarray

    @classmethod
    def laguerre(cls, order: int) -> "QuadratureRule":
        if order < 2:
            raise DomainError(f"quadrature order must be >= 2, got {order}")
        return _laguerre_rule(int(order))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def doubled(self) -> "QuadratureRule":
        return QuadratureRule.laguerre(2 * self.order)


def _laguerre_pair(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """L_n(x) and L_{n-1}(x) as mantissas sharing the log scale ``lg``."""
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    lg = np.zeros_like(x)
    for k in range(n):
        nxt = ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
        sc = np.maximum(np.abs(nxt), np.abs(cur))
        sc[sc == 0.0] = 1.0
        prev, cur = cur / sc, nxt / sc
        lg += np.log(sc)
    return cur, prev, lg


def _golub_welsch(order: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(1, order, dtype=float)
    t = eigh_tridiagonal(2 * np.arange(order) + 1.0, -i, eigvals_only=True)
    for _ in range(3):
        ln, lm1, _ = _laguerre_pair(order, t)
        # x L_n' = n (L_n - L_{n-1})
        t = t - t * ln / (order * (ln - lm1))
    _, lm1, lg = _laguerre_pair(order, t)
    lw = np.log(t) - 2 * (math.log(order) + np.log(np.abs(lm1)) + lg)
    return t, lw


@lru_cache(maxsize=32)
def _laguerre_rule(order: int) -> QuadratureRule:
    if order <= 200:
        t, w = roots_laguerre(order)
        with np.errstate(divide="ignore"):
            lw = np.log(w)
    else:
        # the scipy routine overflows beyond a few hundred nodes
        t, lw = _golub_welsch(order)
    keep = np.isfinite(lw) & (lw > -700.0)
    t, lw = t[keep], lw[keep]
    t.flags.writeable = False
    lw.flags.writeable = False
    return QuadratureRule(order, t, lw)


@dataclass(frozen=True, eq=False)
class SpectralBlock:
    """Balanced, phase-normalized round-trip matrix for one (m, xi).

    ``entries = diag(exp(log_scale)) @ M_real @ diag(exp(-log_scale))`` where
    ``M_real`` is the round-trip matrix after the E/M phase similarity. Both
    similarities leave ``det(1 - M)`` and ``tr[(1 - M)^{-1} dM]`` unchanged.
    Row/column order: E block with l ascending, then M block with l ascending.
    """

    m: int
    xi: float
    ell_min: int
    ell_max: int
    entries: np.ndarray
    log_scale: np.ndarray

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def unbalanced(self) -> np.ndarray:
        """Real matrix without the balancing scale (may overflow for extreme inputs)."""
        s = self.log_scale
        return self.entries * np.exp(s[None, :] - s[:, None])

    def element(self, p1: str, l1: int, p2: str, l2: int) -> float:
        """Entry of the phase-normalized (unbalanced) matrix for multipoles (p1, l1), (p2, l2)."""
        i, j = self._index(p1, l1), self._index(p2, l2)
        return float(self.entries[i, j] * math.exp(self.log_scale[j] - self.log_scale[i]))

    def _index(self, p: str, ell: int) -> int:
        if not self.ell_min <= ell <= self.ell_max:
            raise DomainError(f"l={ell} outside [{self.ell_min}, {self.ell_max}]")
        n = self.ell_max - self.ell_min + 1
        p = p.upper()
        if p not in ("E", "M"):
            raise DomainError(f"polarization must be 'E' or 'M', got {p!r}")
        return (ell - self.ell_min) + (n if p == "M" else 0)


class KernelSet(NamedTuple):
    A: ScaledReal
    B: ScaledReal
    C: ScaledReal
    D: ScaledReal


def _real_phase(*quarter_turns: int) -> float:
    """Collapse a product of powers of i to +-1, asserting it is real."""
    total = sum(quarter_turns) % 4
    if total % 2:
        raise AssertionError(f"phase i^{total} does not cancel to a real factor")
    return 1.0 if total == 0 else -1.0


# quarter turns carried by each factor: d^l_{m,+-1} ~ i^{|m|-1}, Y_lm ~ i^{-|m|},
# dY_lm/dtheta ~ i^{1-|m|}; kernel prefactors -i m, -c/xi, +c/xi, +i m
def _phase_signs(am: int) -> dict:
    d, y, dy = am - 1, -am, 1 - am
    pre_a, pre_b, pre_c, pre_d = 3, 2, 0, 1
    # E-M block carries +i and the similarity -i; M-E carries -i and +i
    em, me = (1, 3), (3, 1)
    return {
        "A": _real_phase(pre_a, d, y),
        "B": _real_phase(pre_b, d, dy),
        "C": _real_phase(pre_c, d, dy),
        "D": _real_phase(pre_d, d, y),
        "EM": _real_phase(*em),
        "ME": _real_phase(*me),
    }


class _NodeTables(NamedTuple):
    """Angular factors on the quadrature nodes, as (sign, log|.|) arrays of shape (n_l, n_t)."""

    ell: np.ndarray
    s_sign: np.ndarray
    s_log: np.ndarray
    d_sign: np.ndarray
    d_log: np.ndarray
    y_sign: np.ndarray
    y_log: np.ndarray
    dy_sign: np.ndarray
    dy_log: np.ndarray
    kbar: np.ndarray     # k * calL
    kap: np.ndarray      # kappa * calL
    log_w: np.ndarray


def _split(mant: np.ndarray, logs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    with np.errstate(divide="ignore"):
        return np.sign(mant), np.log(np.abs(mant)) + logs


def _node_tables(m: int, lmax: int, X: float, rule: QuadratureRule) -> _NodeTables:
    am = abs(m)
    lo = max(1, am)
    t = rule.nodes
    kap = X + 0.5 * t
    kbar = np.sqrt(t * (X + 0.25 * t))
    u = kap / X
    logv = np.log(kbar) - math.log(X)
    v = np.exp(logv)

    S, D, lrot = rotation_tables(am, lmax, u, v)
    s_sign, s_log = _split(S, lrot)
    d_sign, d_log = _split(D, lrot)

    w0, lw0 = legendre_table(am, lmax, u)
    w1, lw1 = legendre_table(am + 1, lmax, u)
    if am == 0:
        w0, lw0 = w0[1:], lw0[1:]
    else:
        w1 = np.vstack([np.zeros((1, u.size)), w1])
        lw1 = np.vstack([np.zeros((1, u.size)), lw1])
    ell = np.arange(lo, lmax + 1)
    parity_m = -1.0 if am % 2 else 1.0

    # Y on the upper branch: (-1)^m v^m W_m
    y_sign, y_log = _split(w0, lw0 + am * logv)
    y_sign = parity_m * y_sign
    # dY/dtheta: (-1)^m v^(m-1) [m u W_m + sqrt((l+m+1)(l-m)) v^2 W_{m+1}]
    c1 = np.sqrt((ell + am + 1.0) * (ell - am))[:, None]
    with np.errstate(divide="ignore"):
        l1 = np.where(w0 != 0, np.log(am * np.abs(w0)) + lw0 + np.log(u), -np.inf) if am else \
            np.full_like(lw0, -np.inf)
        l2 = np.where(w1 != 0, np.log(c1 * np.abs(w1)) + lw1 + 2 * logv, -np.inf)
    top = np.maximum(l1, l2)
    top = np.where(np.isfinite(top), top, 0.0)
    mix = np.sign(w0) * np.exp(l1 - top) * (am > 0) + np.sign(w1) * np.exp(l2 - top)
    dy_sign, dy_log = _split(mix, top + (am - 1) * logv)
    dy_sign = parity_m * dy_sign

    # lower branch cos(theta) = -u: parity (-1)^(l-m) for Y and (-1)^(l-m-1) for dY
    par = np.where((ell - am) % 2 == 0, 1.0, -1.0)[:, None]
    y_sign = y_sign * par
    dy_sign = -dy_sign * par

    if m < 0:
        # d_{-m,+-1} from d_{m,-+1}; Y_{l,-m} = (-1)^m Y_lm on the azimuth-0 plane
        s_sign = s_sign * (-1.0) ** (am + 1)
        d_sign = d_sign * (-1.0) ** am
        y_sign = y_sign * parity_m
        dy_sign = dy_sign * parity_m
    return _NodeTables(ell, s_sign, s_log, d_sign, d_log, y_sign, y_log, dy_sign, dy_log,
                       kbar, kap, rule.log_weights)


def _check_m(m: int, lmax: int) -> int:
    lo = max(1, abs(int(m)))
    if lmax < lo:
        raise DomainError(f"ell_max={lmax} is below the smallest multipole max(1, |m|)={lo}")
    return lo


def _scaled(sign: np.ndarray, logs: np.ndarray, log_w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Attach half the log weight and normalize rows by their largest magnitude."""
    full = logs + 0.5 * log_w[None, :]
    top = np.max(full, axis=1)
    top = np.where(np.isfinite(top), top, 0.0)
    return sign * np.exp(full - top[:, None]), top


def _assemble(m: int, xi: float, geometry: Geometry, model: MaterialModel, lmax: int,
              rule: QuadratureRule, mie: MieTable | None, derivative: bool):
    if not (math.isfinite(xi) and xi > 0):
        raise DomainError(f"xi must be finite and positive, got {xi}")
    lo = _check_m(m, lmax)
    calL = geometry.center_distance
    X = xi * calL / C_LIGHT
    if mie is None:
        mie = mie_table(lmax, xi * geometry.R / C_LIGHT, model, geometry.R)
    tab = _node_tables(m, lmax, X, rule)
    ph = _phase_signs(abs(m))

    # rows (d-side): S and D share one scale; columns (Y-side): Y and dY share one scale
    both = np.maximum(tab.s_log, tab.d_log)
    _, row_top = _scaled(np.ones_like(both), both, tab.log_w)
    fs = tab.s_sign * np.exp(tab.s_log + 0.5 * tab.log_w - row_top[:, None])
    fd = tab.d_sign * np.exp(tab.d_log + 0.5 * tab.log_w - row_top[:, None])
    both = np.maximum(tab.y_log, tab.dy_log)
    _, col_top = _scaled(np.ones_like(both), both, tab.log_w)
    gy = tab.y_sign * np.exp(tab.y_log + 0.5 * tab.log_w - col_top[:, None])
    gdy = tab.dy_sign * np.exp(tab.dy_log + 0.5 * tab.log_w - col_top[:, None])

    r_te, r_tm = fresnel_arrays(tab.kap / calL, xi, model)
    h_a = m / tab.kbar
    h_b = np.full_like(h_a, 1.0 / X)

    def blocks(weight):
        out = {}
        for p, r in (("TE", r_te), ("TM", r_tm)):
            rw = r * weight
            out["A", p] = (fs * (h_a * rw)) @ gy.T
            out["B", p] = (fd * (h_b * rw)) @ gdy.T
            out["C", p] = (fs * (h_b * rw)) @ gdy.T
            out["D", p] = (fd * (h_a * rw)) @ gy.T
        ee = ph["A"] * out["A", "TE"] + ph["B"] * out["B", "TM"]
        mm = ph["A"] * out["A", "TM"] + ph["B"] * out["B", "TE"]
        em = ph["EM"] * (ph["C"] * out["C", "TE"] + ph["D"] * out["D", "TM"])
        me = ph["ME"] * (ph["C"] * out["C", "TM"] + ph["D"] * out["D", "TE"])
        return np.block([[ee, em], [me, mm]])

    idx = tab.ell - 1
    ell = tab.ell.astype(float)
    norm_row = 0.5 * np.log((2 * ell + 1) * math.pi)
    log_row = np.concatenate([mie.log_a[idx] + norm_row + row_top, mie.log_b[idx] + norm_row + row_top])
    log_row = np.maximum(log_row, _LOG_FLOOR)
    sign_row = np.concatenate([mie.sign_a[idx], mie.sign_b[idx]])
    log_col = col_top - 0.5 * np.log(ell * (ell + 1)) - 2 * X - math.log(2.0)
    log_col = np.concatenate([log_col, log_col])

    half = 0.5 * (log_row + log_col)
    log_scale = 0.5 * (log_col - log_row)
    outer = sign_row[:, None] * np.exp(half[:, None] + half[None, :])

    mat = blocks(1.0) * outer
    block = SpectralBlock(int(m), float(xi), lo, int(lmax), mat, log_scale)
    if not derivative:
        return block, None
    dmat = blocks(-2.0 * tab.kap / calL) * outer
    return block, SpectralBlock(int(m), float(xi), lo, int(lmax), dmat, log_scale)


def _resolve(geometry: Geometry, params: SolverParams | None) -> tuple[int, QuadratureRule]:
    params = params or SolverParams()
    lmax = params.lmax_for(geometry)
    return lmax, QuadratureRule.laguerre(params.quad_order_for(lmax))


def assemble_block(m: int, xi: float, geometry: Geometry, model: MaterialModel,
                   params: SolverParams | None = None) -> SpectralBlock:
    """Phase-normalized round-trip matrix for azimuthal number ``m`` at frequency ``xi`` (rad/s).

    Negative ``m`` is built from the explicit symmetry relations of the
    rotation matrices and spherical harmonics; its determinant equals that of ``|m|``.
    """
    lmax, rule = _resolve(geometry, params)
    return _assemble(m, xi, geometry, model, lmax, rule, None, False)[0]


def assemble_block_dL(m: int, xi: float, geometry: Geometry, model: MaterialModel,
                      params: SolverParams | None = None) -> SpectralBlock:
    """Derivative of the round-trip matrix with respect to the surface distance L.

    Shares the balancing scale with :func:`assemble_block` for the same inputs.
    """
    lmax, rule = _resolve(geometry, params)
    return _assemble(m, xi, geometry, model, lmax, rule, None, True)[1]


def assemble_pair(m: int, xi: float, geometry: Geometry, model: MaterialModel, lmax: int,
                  rule: QuadratureRule, mie: MieTable | None = None,
                  derivative: bool = True) -> tuple[SpectralBlock, SpectralBlock | None]:
    """Matrix and (optionally) its L-derivative in one pass, reusing a Mie table."""
    return _assemble(m, xi, geometry, model, lmax, rule, mie, derivative)


def _lu(entries: np.ndarray):
    n = entries.shape[0]
    a = np.eye(n) - entries
    if not np.all(np.isfinite(a)):
        raise SingularityError("round-trip matrix has non-finite entries")
    with warnings.catch_warnings():
        # singularity is reported below as SingularityError
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(a, check_finite=False)
    diag = np.diag(lu)
    if np.any(diag == 0.0) or np.min(np.abs(diag)) < 1e-14 * max(1.0, np.max(np.abs(diag))):
        raise SingularityError("1 - M is numerically singular")
    swaps = np.count_nonzero(piv != np.arange(n))
    negative = (swaps + np.count_nonzero(diag < 0)) % 2
    if negative:
        raise SingularityError("det(1 - M) <= 0; spectral radius of M is not below 1")
    return lu, piv, float(np.sum(np.log(np.abs(diag))))


def logdet_one_minus(block: SpectralBlock | np.ndarray) -> float:
    """log det(1 - M) from a pivoted LU factorization."""
    entries = block.entries if isinstance(block, SpectralBlock) else np.asarray(block, dtype=float)
    if entries.size == 0:
        return 0.0
    return _lu(entries)[2]


def logdet_and_derivative(block: SpectralBlock, dblock: SpectralBlock) -> tuple[float, float]:
    """Return log det(1 - M) and d/dL of it, i.e. -tr[(1 - M)^{-1} dM/dL]."""
    if not np.array_equal(block.log_scale, dblock.log_scale):
        raise DomainError("matrix and derivative must share the balancing scale")
    lu, piv, logdet = _lu(block.entries)
    sol = lu_solve((lu, piv), dblock.entries, check_finite=False)
    return logdet, -float(np.trace(sol))


def spectral_radius(block: SpectralBlock | np.ndarray, iterations: int = 200, seed: int = 0) -> float:
    """Largest |eigenvalue| by power iteration on M^2 (robust to a +-lambda pair)."""
    a = block.entries if isinstance(block, SpectralBlock) else np.asarray(block, dtype=float)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(a.shape[0])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iterations):
        y = a @ (a @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        new = math.sqrt(nrm)
        x = y / nrm
        if abs(new - est) <= 1e-12 * new:
            est = new
            break
        est = new
    return est


def _kernel_sum(sign: np.ndarray, logs: np.ndarray) -> ScaledReal:
    finite = np.isfinite(logs)
    if not np.any(finite):
        return ScaledReal(0, -math.inf)
    top = np.max(logs[finite])
    total = float(np.sum(sign[finite] * np.exp(logs[finite] - top)))
    return ScaledReal.from_float(total) * ScaledReal.from_log(1, top) if total else ScaledReal(0, -math.inf)


def _kernels_once(m, l1, l2, p, xi, geometry, model, rule) -> KernelSet:
    lmax = max(l1, l2)
    calL = geometry.center_distance
    X = xi * calL / C_LIGHT
    tab = _node_tables(m, lmax, X, rule)
    ph = _phase_signs(abs(m))
    i1, i2 = l1 - tab.ell[0], l2 - tab.ell[0]
    r_te, r_tm = fresnel_arrays(tab.kap / calL, xi, model)
    r = r_te if p == "TE" else r_tm
    base = tab.log_w - 2 * X - math.log(2.0) + np.log(np.abs(r))
    rs = np.sign(r)
    with np.errstate(divide="ignore"):
        log_ma = math.log(abs(m)) - np.log(tab.kbar) if m else np.full_like(base, -np.inf)
    log_b = -math.log(X)
    msign = 1.0 if m >= 0 else -1.0

    def term(s1, g1, s2, g2, lpre, pre_sign):
        return _kernel_sum(pre_sign * s1 * s2 * rs, g1 + g2 + base + lpre)

    A = term(tab.s_sign[i1], tab.s_log[i1], tab.y_sign[i2], tab.y_log[i2], log_ma, ph["A"] * msign)
    B = term(tab.d_sign[i1], tab.d_log[i1], tab.dy_sign[i2], tab.dy_log[i2], log_b, ph["B"])
    C = term(tab.s_sign[i1], tab.s_log[i1], tab.dy_sign[i2], tab.dy_log[i2], log_b, ph["C"])
    D = term(tab.d_sign[i1], tab.d_log[i1], tab.y_sign[i2], tab.y_log[i2], log_ma, ph["D"] * msign)
    return KernelSet(A, B, C, D)


def kernel_ABCD(m: int, l1: int, l2: int, p: str, xi: float, geometry: Geometry,
                model: MaterialModel, rule: QuadratureRule | None = None,
                tol: float = 1e-8) -> KernelSet:
    """The four real k-integrals coupling multipoles ``l1`` (sphere side) and ``l2``.

    The returned values already include the weight ``exp(-2 kappa calL)`` and
    the explicit prefactors (``-m``, ``-c/xi``, ``c/xi``, ``m``) after the phase
    factors of the rotation matrices and spherical harmonics have cancelled.

    Raises
    ------
    ConvergenceError
        If doubling the quadrature order moves any kernel by more than ``10 * tol``
        relative to the largest of the four.
    """
    if not (math.isfinite(xi) and xi > 0):
        raise DomainError(f"xi must be finite and positive, got {xi}")
    p = p.upper()
    if p not in ("TE", "TM"):
        raise DomainError(f"polarization must be 'TE' or 'TM', got {p!r}")
    lo = max(1, abs(m))
    if l1 < lo or l2 < lo:
        raise DomainError(f"l1, l2 must be >= max(1, |m|) = {lo}")
    if rule is None:
        rule = QuadratureRule.laguerre(max(25, 2 * max(l1, l2)))
    k1 = _kernels_once(m, l1, l2, p, xi, geometry, model, rule)
    k2 = _kernels_once(m, l1, l2, p, xi, geometry, model, rule.doubled())
    scale = max(x.log_mag for x in k2)
    if math.isfinite(scale):
        for a, b in zip(k1, k2):
            diff = a - b
            if diff.sign and diff.log_mag - scale > math.log(10 * tol):
                raise ConvergenceError(
                    f"k-quadrature of order {rule.order} not converged for m={m}, l1={l1}, l2={l2}")
    return k2


def check_quadrature(m: int, xi: float, geometry: Geometry, model: MaterialModel,
                     params: SolverParams | None = None) -> float:
    """Relative change of log det(1 - M) when the k-quadrature order is doubled.

    Raises :class:`ConvergenceError` when the change exceeds ``params.quad_tol``.
    """
    params = params or SolverParams()
    lmax, rule = _resolve(geometry, params)
    mie = mie_table(lmax, xi * geometry.R / C_LIGHT, model, geometry.R)
    a = logdet_one_minus(_assemble(m, xi, geometry, model, lmax, rule, mie, False)[0])
    b = logdet_one_minus(_assemble(m, xi, geometry, model, lmax, rule.doubled(), mie, False)[0])
    rel = abs(a - b) / max(abs(b), 1e-300)
    if rel > params.quad_tol:
        raise ConvergenceError(f"log det changed by {rel:.2e} relative on doubling the k-quadrature")
    return rel
