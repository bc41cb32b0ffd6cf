"""Command-line interface: ``compute``, ``sweep``, ``asympt`` and ``plot``.

Exit codes: 0 success, 1 invalid input, 2 non-convergence or partial sweep.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .errors import CasimirError, ConvergenceError, DomainError
from .geometry import Geometry, SolverParams, ThermalSpec
from .materials import GOLD_LAMBDA_GAMMA, GOLD_LAMBDA_P, MaterialModel
from .thermo import compute

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2

COLUMNS = ("model", "lambda_P_m", "lambda_gamma_m", "R_m", "L_m", "T_K", "ell_max",
           "free_energy_J", "force_N", "entropy_J_per_K", "rho_F", "theta", "n_max", "converged")

SWEEP_FIELDS = {"L": "distance", "R": "radius", "T": "temperature"}


class InputError(Exception):
    """Invalid command-line or config-file input; the message names the flag."""


@dataclass(frozen=True)
class RunConfig:
    model: str = "perfect"
    lambda_p: float = GOLD_LAMBDA_P
    lambda_gamma: float = GOLD_LAMBDA_GAMMA
    radius: float = 1e-6
    distance: float = 1e-6
    temperature: float = 300.0
    lmax: int | None = None
    quad_order: int | None = None
    tol: float = 1e-9
    sweep: str | None = None
    min: float | None = None
    max: float | None = None
    points: int | None = None
    log: bool = False
    workers: int = 1

    def material(self) -> MaterialModel:
        if self.model == "perfect":
            return MaterialModel.perfect()
        if self.model == "plasma":
            return MaterialModel.plasma(self.lambda_p)
        return MaterialModel.drude(self.lambda_p, self.lambda_gamma)

    def params(self) -> SolverParams:
        return SolverParams(ell_max=self.lmax, quad_order_k=self.quad_order, matsubara_rel_tol=self.tol)

    def point_key(self) -> str:
        """Content hash of everything that determines a computed row."""
        d = asdict(self)
        for k in ("sweep", "min", "max", "points", "log", "workers"):
            d.pop(k)
        d["version"] = __version__
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# parsing and validation

_FLOAT_FLAGS = ("lambda_p", "lambda_gamma", "radius", "distance", "temperature", "tol", "min", "max")
_INT_FLAGS = ("lmax", "quad_order", "points", "workers")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _common(parser: argparse.ArgumentParser) -> None:
    # defaults are None so that values from --config can fill the gaps
    parser.add_argument("--model", choices=("perfect", "plasma", "drude"), default=None)
    parser.add_argument("--lambda-p", dest="lambda_p", default=None, help="plasma wavelength (m)")
    parser.add_argument("--lambda-gamma", dest="lambda_gamma", default=None, help="relaxation wavelength (m)")
    parser.add_argument("--radius", default=None, help="sphere radius R (m)")
    parser.add_argument("--distance", default=None, help="closest sphere-plate distance L (m)")
    parser.add_argument("--temperature", default=None, help="temperature (K); 0 for the zero-T integral")
    parser.add_argument("--lmax", default=None, help="multipole cutoff (default max(15, ceil(10 R/L)))")
    parser.add_argument("--quad-order", dest="quad_order", default=None, help="k-quadrature order")
    parser.add_argument("--tol", default=None, help="Matsubara relative truncation tolerance")
    parser.add_argument("--workers", default=None, help="worker processes (default 1)")
    parser.add_argument("--output", default=None, help="CSV file to append rows to")
    parser.add_argument("--cache", default=None, help="JSON results cache")
    parser.add_argument("--config", default=None, help="key = value file; flags override it")
    parser.add_argument("--verbose", action="store_true", help="diagnostics on stderr")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="casimirps", description="Sphere-plate Casimir free energy, force and entropy.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compute", help="single point")
    _common(c)

    s = sub.add_parser("sweep", help="scan L, R or T")
    _common(s)
    s.add_argument("--sweep", choices=tuple(SWEEP_FIELDS), default=None)
    s.add_argument("--min", default=None)
    s.add_argument("--max", default=None)
    s.add_argument("--points", default=None)
    s.add_argument("--log", action="store_true", default=None, help="logarithmic spacing")

    a = sub.add_parser("asympt", help="exact result against the asymptotic formulas")
    _common(a)

    g = sub.add_parser("plot", help="emit a gnuplot script for a results CSV")
    g.add_argument("csv_path")
    g.add_argument("--x", default="L_m", help="column name or ratio 'a/b' of two columns")
    g.add_argument("--y", default="theta", help="column name or ratio 'a/b' of two columns")
    g.add_argument("--linear", action="store_true", help="linear x axis (default logscale)")
    g.add_argument("--output", default=None, help="script path (default: CSV path with .gp)")
    return p


def _read_config(path: str) -> dict:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"--config: cannot read {path}: {exc.strerror}") from exc
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise InputError(f"--config: malformed file {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        for key, val in parser.items(section):
            out[key.strip().lstrip("-").replace("-", "_")] = val.strip()
    return out


def _convert(name: str, raw) -> object:
    if raw is None:
        return None
    if name in _FLOAT_FLAGS:
        try:
            val = float(raw)
        except (TypeError, ValueError):
            raise InputError(f"{_flag(name)}: expected a number, got {raw!r}") from None
        if not math.isfinite(val):
            raise InputError(f"{_flag(name)}: must be finite, got {raw!r}")
        return val
    if name in _INT_FLAGS:
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise InputError(f"{_flag(name)}: expected an integer, got {raw!r}") from None
    if name == "log":
        if isinstance(raw, bool):
            return raw
        return str(raw).lower() in ("1", "true", "yes", "on")
    return raw


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_vals = _read_config(args.config) if getattr(args, "config", None) else {}
    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = set(file_vals) - known - {"output", "cache", "verbose"}
    if unknown:
        raise InputError(f"--config: unknown keys {sorted(unknown)}")
    values = {}
    for name in known:
        raw = getattr(args, name, None)
        if raw is None:
            raw = file_vals.get(name)
        val = _convert(name, raw)
        if val is not None:
            values[name] = val
    if values.get("model", "perfect") not in ("perfect", "plasma", "drude"):
        raise InputError(f"--model: must be perfect, plasma or drude, got {values['model']!r}")
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    for name in ("lambda_p", "lambda_gamma", "radius", "distance", "tol"):
        if not getattr(cfg, name) > 0:
            raise InputError(f"{_flag(name)}: must be positive, got {getattr(cfg, name)}")
    if cfg.temperature < 0:
        raise InputError(f"--temperature: must be >= 0, got {cfg.temperature}")
    if cfg.lmax is not None and cfg.lmax < 1:
        raise InputError(f"--lmax: must be >= 1, got {cfg.lmax}")
    if cfg.quad_order is not None and cfg.quad_order < 2:
        raise InputError(f"--quad-order: must be >= 2, got {cfg.quad_order}")
    if cfg.workers < 1:
        raise InputError(f"--workers: must be >= 1, got {cfg.workers}")
    if cfg.sweep is not None:
        for name in ("min", "max", "points"):
            if getattr(cfg, name) is None:
                raise InputError(f"{_flag(name)}: required with --sweep")
        if not cfg.min < cfg.max:
            raise InputError(f"--min/--max: need min < max, got {cfg.min} >= {cfg.max}")
        if cfg.points < 2:
            raise InputError(f"--points: need at least 2, got {cfg.points}")
        if cfg.log and cfg.min <= 0:
            raise InputError(f"--min: must be positive for --log, got {cfg.min}")
        if cfg.sweep in ("L", "R") and cfg.min <= 0:
            raise InputError(f"--min: lengths must be positive, got {cfg.min}")
        if cfg.sweep == "T" and cfg.min < 0:
            raise InputError(f"--min: temperature must be >= 0, got {cfg.min}")


# ---------------------------------------------------------------------------
# rows

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return "%.11e" % x


def format_row(row: dict) -> list[str]:
    return [_fmt(row[c]) for c in COLUMNS]


def compute_row(cfg: RunConfig) -> tuple[list[str], bool]:
    """Evaluate one point; returns the formatted row and a convergence flag."""
    geometry = Geometry(cfg.radius, cfg.distance)
    model = cfg.material()
    params = cfg.params()
    row = {
        "model": cfg.model,
        "lambda_P_m": math.nan if cfg.model == "perfect" else cfg.lambda_p,
        "lambda_gamma_m": cfg.lambda_gamma if cfg.model == "drude" else math.nan,
        "R_m": cfg.radius,
        "L_m": cfg.distance,
        "T_K": cfg.temperature,
        "ell_max": params.lmax_for(geometry),
    }
    try:
        res = compute(geometry, model, ThermalSpec(cfg.temperature), params)
    except ConvergenceError:
        row.update(free_energy_J=math.nan, force_N=math.nan, entropy_J_per_K=math.nan,
                   rho_F=math.nan, theta=math.nan, n_max=0, converged=0)
        return format_row(row), False
    row.update(free_energy_J=res.free_energy, force_N=res.force, entropy_J_per_K=res.entropy,
               rho_F=res.rho_F, theta=res.theta, n_max=res.diagnostics["n_max"],
               converged=int(res.diagnostics["converged"]))
    return format_row(row), bool(res.diagnostics["converged"])


class ResultCache:
    """JSON file mapping config hashes to formatted rows."""

    def __init__(self, path: str | None):
        self.path = path
        self.data = {}
        if path and os.path.exists(path):
            try:
                with open(path, encoding="utf-8") as fh:
                    self.data = json.load(fh)
            except (OSError, ValueError) as exc:
                raise InputError(f"--cache: unreadable cache file {path}: {exc}") from exc

    def get(self, key: str):
        row = self.data.get(key)
        return list(row) if row is not None else None

    def put(self, key: str, row: list[str]) -> None:
        if self.path is None:
            return
        self.data[key] = row
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.data, fh, sort_keys=True, indent=0)
        os.replace(tmp, self.path)


def _row_worker(cfg: RunConfig):
    try:
        return compute_row(cfg)
    except (CasimirError, ValueError) as exc:
        return None, str(exc)


def _csv_text(rows, header: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(COLUMNS)
    w.writerows(rows)
    return buf.getvalue()


def _emit(rows, output: str | None) -> None:
    sys.stdout.write(_csv_text(rows, header=True))
    if output:
        fresh = not os.path.exists(output) or os.path.getsize(output) == 0
        with open(output, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(_csv_text(rows, header=fresh))


def _verbose(cfg: RunConfig) -> None:
    g = Geometry(cfg.radius, cfg.distance)
    th = ThermalSpec(cfg.temperature)
    nu = th.nu(g) if cfg.temperature > 0 else 0.0
    alpha = cfg.material().alpha(cfg.radius) if cfg.model != "perfect" else math.inf
    print(f"# R/L = {cfg.radius / cfg.distance:.6g}  nu = {nu:.6g}  alpha = {alpha:.6g}  "
          f"ell_max = {cfg.params().lmax_for(g)}", file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands

def cmd_compute(cfg: RunConfig, output=None, cache_path=None, verbose=False) -> int:
    cache = ResultCache(cache_path)
    key = cfg.point_key()
    if verbose:
        _verbose(cfg)
    row = cache.get(key)
    if row is None:
        row, ok = compute_row(cfg)
        if ok:
            cache.put(key, row)
    else:
        ok = row[COLUMNS.index("converged")] == "1"
        if verbose:
            print("# cache hit", file=sys.stderr)
    _emit([row], output)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def sweep_grid(cfg: RunConfig) -> np.ndarray:
    if cfg.log:
        return np.geomspace(cfg.min, cfg.max, cfg.points)
    return np.linspace(cfg.min, cfg.max, cfg.points)


def cmd_sweep(cfg: RunConfig, output=None, cache_path=None, verbose=False) -> int:
    if cfg.sweep is None:
        raise InputError("--sweep: required for the sweep command (L, R or T)")
    field_name = SWEEP_FIELDS[cfg.sweep]
    points = [RunConfig(**{**asdict(cfg), field_name: float(v)}) for v in sweep_grid(cfg)]
    cache = ResultCache(cache_path)
    results = [cache.get(p.point_key()) for p in points]
    todo = [i for i, r in enumerate(results) if r is None]
    if verbose:
        print(f"# sweep {cfg.sweep}: {len(points)} points, {len(points) - len(todo)} cached", file=sys.stderr)
    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            fresh = list(pool.map(_row_worker, [points[i] for i in todo]))
    else:
        fresh = [_row_worker(points[i]) for i in todo]

    failed = 0
    for i, (row, status) in zip(todo, fresh):
        if row is None:
            print(f"error at {cfg.sweep} = {getattr(points[i], field_name):.6g}: {status}", file=sys.stderr)
            failed += 1
            continue
        if not status:
            failed += 1
            continue
        results[i] = row
        cache.put(points[i].point_key(), row)
    # rows in grid order; failed points are left out
    _emit([r for r in results if r is not None], output)
    return EXIT_OK if failed == 0 else EXIT_NONCONVERGED


def asympt_rows(cfg: RunConfig) -> list[tuple[str, float, float]]:
    """(label, exact, asymptotic) pairs for the formulas valid at this point.

    Large-distance formulas need R/(L+R) < 0.05 (the high-temperature ones
    also nu > 1); the proximity-force comparison needs L/R < 0.2.
    """
    from .reference import dipole_free_energy, high_T_limits, perfect_asymptotics, pfa_force

    g = Geometry(cfg.radius, cfg.distance)
    model = cfg.material()
    th = ThermalSpec(cfg.temperature)
    far = g.R / g.center_distance < 0.05
    near = g.L / g.R < 0.2
    res = compute(g, model, th, cfg.params(), observables=("free_energy", "force"))
    rows = []
    if far and cfg.temperature > 0:
        if th.nu(g) > 1:
            rows.append(("free_energy_high_T", res.free_energy, high_T_limits(g, model, th)))
        if model.is_perfect:
            rows.append(("free_energy_perfect_phi", res.free_energy, perfect_asymptotics(g, th)[0]))
    if far:
        rows.append(("free_energy_dipole", res.free_energy, dipole_free_energy(g, model, th, cfg.params())))
    if near:
        rows.append(("force_pfa", res.force, pfa_force(g, model, th, cfg.params())))
    return rows


def cmd_asympt(cfg: RunConfig, output=None, cache_path=None, verbose=False) -> int:
    import warnings

    if verbose:
        _verbose(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore" if not verbose else "default")
        rows = asympt_rows(cfg)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("quantity", "exact", "asymptotic", "rel_deviation"))
    if not rows:
        print("# no asymptotic formula applies at this point", file=sys.stderr)
    for label, exact, approx in rows:
        w.writerow((label, _fmt(exact), _fmt(approx), _fmt(exact / approx - 1)))
    return EXIT_OK


def _column_expr(expr: str, header: list[str]) -> tuple[str, str]:
    """gnuplot ``using`` expression and axis label for a column or a ratio of two."""
    parts = expr.split("/")
    if len(parts) > 2 or not all(parts):
        raise InputError(f"bad column expr {expr!r}; use NAME or NAME/NAME")
    idx = []
    for name in parts:
        if name not in header:
            raise InputError(f"unknown column {name!r}; available columns: {', '.join(header)}")
        idx.append(header.index(name) + 1)
    if len(idx) == 1:
        return f"{idx[0]}", expr
    return f"(${idx[0]}/${idx[1]})", expr


def cmd_plot(args) -> int:
    try:
        with open(args.csv_path, encoding="utf-8", newline="") as fh:
            header = next(csv.reader(fh))
    except (OSError, StopIteration) as exc:
        raise InputError(f"csv_path: cannot read header of {args.csv_path}: {exc}") from exc
    xexpr, xlabel = _column_expr(args.x, header)
    yexpr, ylabel = _column_expr(args.y, header)
    out = args.output or os.path.splitext(args.csv_path)[0] + ".gp"
    rel = os.path.relpath(os.path.abspath(args.csv_path), os.path.dirname(os.path.abspath(out)))
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    if not args.linear:
        lines.append("set logscale x")
    lines.append(f"plot '{rel}' using {xexpr}:{yexpr} with linespoints title '{ylabel}'")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(out)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad flags; map that onto the invalid-input code
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        if args.command == "plot":
            return cmd_plot(args)
        cfg = config_from_args(args)
        handler = {"compute": cmd_compute, "sweep": cmd_sweep, "asympt": cmd_asympt}[args.command]
        return handler(cfg, args.output, args.cache, args.verbose)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
