"""Command line front end: verify, eval and metric.

Exit codes: 0 success, 1 a check or computation failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, replace

import numpy as np

from .ernst import (
    ErnstOptions,
    PathTooCoarse,
    SolutionSpec,
    StencilDegenerate,
    ThetaDivisorHit,
    WorldPoint,
    build_characteristics,
    ernst_potential,
    evaluate_grid,
    metric_quadratures,
    pde_residual,
    real_part_via_fay,
)
from .riemann_surface import (
    RHO_MIN,
    BranchPair,
    CurveError,
    SpectralData,
    abel_point,
    abel_to_infinity,
    real_pattern,
    riemann_matrix,
)
from .theta import (
    Characteristics,
    ThetaContext,
    conjugation_constant,
    fay_residual,
    find_odd_characteristic,
    lattice_shift_check,
    probe_points,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    rho_min: float
    rho_max: float
    rho_count: int
    zeta_min: float
    zeta_max: float
    zeta_count: int

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        def axis(lo, hi, n):
            return np.array([lo]) if n == 1 else np.linspace(lo, hi, n)
        return axis(self.rho_min, self.rho_max, self.rho_count), axis(self.zeta_min, self.zeta_max, self.zeta_count)


@dataclass(frozen=True)
class Tolerances:
    series_eps: float = 1e-14
    identity_tol: float = 1e-8
    pde_tol: float = 1e-4
    fd_step: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    spec: SolutionSpec
    grid: GridSpec
    tolerances: Tolerances
    quad_order: int = 64
    output_format: str = "csv"
    path: tuple[WorldPoint, ...] = ()

    @property
    def options(self) -> ErnstOptions:
        return ErnstOptions(order=self.quad_order, eps=self.tolerances.series_eps)


def _complex(value, what: str) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        return complex(value[0], value[1])
    raise ConfigError(f"{what}: expected [re, im] or a real number, got {value!r}")


def _pair(obj, k: int) -> BranchPair:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"pairs[{k}] needs a 'kind' tag")
    kind = obj["kind"]
    try:
        if kind == "conjugate":
            e = _complex(obj["e"], f"pairs[{k}].e")
            return BranchPair(e, e.conjugate(), "conjugate")
        if kind == "real_pair":
            e = _complex(obj["e"], f"pairs[{k}].e")
            f = _complex(obj["f"], f"pairs[{k}].f")
            return BranchPair(e, f, "real_pair")
    except KeyError as exc:
        raise ConfigError(f"pairs[{k}] is missing {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"pairs[{k}]: {exc}") from None
    raise ConfigError(f"pairs[{k}]: unknown kind {kind!r}")


def _vector(obj, key, g, default=None):
    val = obj.get(key, default)
    if val is None:
        return None
    if not isinstance(val, list) or len(val) != g or not all(isinstance(v, (int, float)) for v in val):
        raise ConfigError(f"solution.{key} must be a list of {g} numbers")
    return [float(v) for v in val]


def _positive(obj, key, default, kind=float):
    val = obj.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val) or val <= 0:
        raise ConfigError(f"{key} must be a positive number, got {val!r}")
    if kind is int and int(val) != val:
        raise ConfigError(f"{key} must be an integer, got {val!r}")
    return kind(val)


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    sol = raw.get("solution")
    if not isinstance(sol, dict):
        raise ConfigError("missing 'solution' object")
    pairs_raw = sol.get("pairs")
    if not isinstance(pairs_raw, list) or not pairs_raw:
        raise ConfigError("solution.pairs must be a non-empty list")
    pairs = [_pair(obj, k) for k, obj in enumerate(pairs_raw)]
    g = len(pairs)
    try:
        spec = SolutionSpec(
            pairs,
            _vector(sol, "p", g, [0.0] * g),
            _vector(sol, "q_im", g, [0.0] * g),
            enforce_reality=bool(sol.get("enforce_reality", True)),
            include_phase=bool(sol.get("include_phase", True)),
            variant=sol.get("variant", "standard"),
            q_re=_vector(sol, "q_re", g),
        )
    except ValueError as exc:
        raise ConfigError(f"solution: {exc}") from None

    gr = raw.get("grid", {})
    if not isinstance(gr, dict):
        raise ConfigError("grid must be an object")
    try:
        grid = GridSpec(
            rho_min=float(gr.get("rho_min", 1.0)),
            rho_max=float(gr.get("rho_max", gr.get("rho_min", 1.0))),
            rho_count=int(gr.get("rho_count", 1)),
            zeta_min=float(gr.get("zeta_min", 0.0)),
            zeta_max=float(gr.get("zeta_max", gr.get("zeta_min", 0.0))),
            zeta_count=int(gr.get("zeta_count", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from None
    if grid.rho_count < 1 or grid.zeta_count < 1:
        raise ConfigError("grid counts must be >= 1")
    if grid.rho_min < RHO_MIN:
        raise ConfigError(f"grid.rho_min must be >= {RHO_MIN}")
    if grid.rho_max < grid.rho_min or grid.zeta_max < grid.zeta_min:
        raise ConfigError("grid maxima must not be below the minima")

    tol_raw = raw.get("tolerances", {})
    if not isinstance(tol_raw, dict):
        raise ConfigError("tolerances must be an object")
    base = Tolerances()
    tol = Tolerances(
        series_eps=_positive(tol_raw, "series_eps", base.series_eps),
        identity_tol=_positive(tol_raw, "identity_tol", base.identity_tol),
        pde_tol=_positive(tol_raw, "pde_tol", base.pde_tol),
        fd_step=_positive(tol_raw, "fd_step", base.fd_step),
    )
    order = _positive(raw, "quad_order", 64, int)
    if order < 16:
        raise ConfigError("quad_order must be >= 16")
    fmt = raw.get("output", {}).get("format", "csv") if isinstance(raw.get("output", {}), dict) else None
    if fmt not in ("csv", "json"):
        raise ConfigError("output.format must be 'csv' or 'json'")
    path = []
    for k, item in enumerate(raw.get("path", [])):
        if not isinstance(item, list) or len(item) != 2:
            raise ConfigError(f"path[{k}] must be [rho, zeta]")
        try:
            path.append(WorldPoint(float(item[0]), float(item[1])))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"path[{k}]: {exc}") from None
    return RunConfig(spec, grid, tol, order, fmt, tuple(path))


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return parse_config(raw)


# ---------------------------------------------------------------------------
# output


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_table(columns: list[str], rows: list[list], fmt: str, out) -> None:
    if fmt == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([v if isinstance(v, (int, str)) and not isinstance(v, bool) else _fmt(v) for v in row])
        return
    records = []
    for row in rows:
        rec = {}
        for c, v in zip(columns, row):
            if isinstance(v, float) and not math.isfinite(v):
                v = None
            rec[c] = v
        records.append(rec)
    json.dump({"columns": columns, "rows": records}, out, indent=1)
    out.write("\n")


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_eval(cfg: RunConfig, with_residuals: bool, threads: int, output: str | None) -> int:
    rhos, zetas = cfg.grid.axes()
    records = evaluate_grid(cfg.spec, rhos, zetas, cfg.options, with_residuals,
                            cfg.tolerances.fd_step, threads)
    columns = ["rho", "zeta", "re_E", "im_E", "f"]
    if with_residuals:
        columns += ["conj_res", "pde_res"]
    columns.append("mask")
    rows = []
    for r in records:
        row = [r.rho, r.zeta, r.value.real, r.value.imag, r.f]
        if with_residuals:
            row += [r.conj_res, r.pde_res]
        row.append(int(r.masked))
        rows.append(row)
    buf = io.StringIO()
    _write_table(columns, rows, cfg.output_format, buf)
    _emit(buf.getvalue(), output)
    return 0


def cmd_metric(cfg: RunConfig, output: str | None) -> int:
    if len(cfg.path) < 1:
        raise ConfigError("metric needs a non-empty 'path' of [rho, zeta] vertices")
    try:
        fields = metric_quadratures(cfg.spec, cfg.path, cfg.tolerances.fd_step, cfg.options)
    except (PathTooCoarse, StencilDegenerate, ThetaDivisorHit, CurveError) as exc:
        sys.stderr.write(f"metric failed: {type(exc).__name__}: {exc}\n")
        return 1
    rows = [[m.point.rho, m.point.zeta, m.a_field, m.k_field, m.f] for m in fields]
    buf = io.StringIO()
    _write_table(["rho", "zeta", "A", "k", "f"], rows, cfg.output_format, buf)
    _emit(buf.getvalue(), output)
    return 0


@dataclass
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    note: str = ""


def _upper(measured: float, tol: float) -> tuple[float, float, bool]:
    return measured, tol, bool(measured <= tol)


def run_checks(cfg: RunConfig) -> list[Check]:
    spec, opts, tol = cfg.spec, cfg.options, cfg.tolerances
    rhos, zetas = cfg.grid.axes()
    points = [WorldPoint(float(r), float(z)) for r in rhos for z in zetas]
    g = spec.genus
    worst = {k: 0.0 for k in ("pattern", "sym", "abel", "shift", "conj_const", "fay", "conj", "real", "pde")}
    trivial = not np.any(spec.p) and not np.any(build_characteristics(spec).q)
    e_dev = 0.0
    for pt in points:
        sd = SpectralData(pt.zeta, pt.rho, spec.pairs)
        basis, rm = riemann_matrix(sd, opts.order)
        worst["pattern"] = max(worst["pattern"], float(np.max(np.abs(rm.r - real_pattern(spec.pairs)))))
        worst["sym"] = max(worst["sym"], float(np.max(np.abs(rm.b - rm.b.T))))
        abel = abel_to_infinity(sd, basis, opts.order)
        worst["abel"] = max(worst["abel"], float(np.max(np.abs(2 * abel.to_inf_plus.real - 0.5))))
        ctx = ThetaContext(rm.b, build_characteristics(spec), opts.eps)
        rng = np.random.default_rng(0)
        for z in probe_points(g, 10):
            m = rng.integers(-2, 3, size=g)
            worst["shift"] = max(worst["shift"], lattice_shift_check(ctx, z, m))
        worst["conj_const"] = max(worst["conj_const"], conjugation_constant(ctx)[1])
        zero_ctx = ThetaContext(rm.b, Characteristics.zero(g), opts.eps)
        odd = find_odd_characteristic(rm.b)
        h = 1.25 * max(abs(p.imag) for p in sd.branch_points) + 1.0
        xs = [complex(pt.zeta + d, h + 0.3 * k) for k, d in enumerate((-0.7, 0.4, 1.1, -1.6))]
        vecs = [abel_point(sd, basis, x, sheet=s, order=opts.order) for x, s in zip(xs, (1, -1, 1, -1))]
        for z in probe_points(g, 3, seed=7):
            worst["fay"] = max(worst["fay"], fay_residual(zero_ctx, odd, *vecs, z))
        ev = ernst_potential(spec, pt, opts)
        worst["conj"] = max(worst["conj"], ev.conj_residual)
        worst["real"] = max(worst["real"], ev.realpart_residual)
        worst["pde"] = max(worst["pde"], pde_residual(spec, pt, tol.fd_step, opts).relative)
        e_dev = max(e_dev, abs(ev.value - 1))

    checks = [
        Check("real part of B matches the half-integer pattern", *_upper(worst["pattern"], 1e-8)),
        Check("B symmetric", *_upper(worst["sym"], 1e-8)),
        Check("Abel real parts 2 Re int_xi^inf+ = 1/2", *_upper(worst["abel"], 2e-8)),
        Check("theta quasi-periodicity", *_upper(worst["shift"], 1e-10)),
        Check("theta conjugation constancy", *_upper(worst["conj_const"], 1e-8)),
        Check("Fay trisecant residual", *_upper(worst["fay"], 1e-8)),
        Check("conjugate formula", *_upper(worst["conj"], tol.identity_tol)),
        Check("real-part reduction", *_upper(worst["real"], tol.identity_tol)),
        Check("PDE relative residual", *_upper(worst["pde"], tol.pde_tol)),
    ]
    if trivial:
        checks.append(Check("trivial solution E = 1", *_upper(e_dev, 1e-9)))

    # phase necessity: same pairs with sum(p) = 1/2 and the phase dropped must break the reduction
    p_half = np.array(spec.p, dtype=float)
    p_half[0] += 0.5 - (np.sum(p_half) % 1.0)
    control = replace(spec, p=p_half, include_phase=False, enforce_reality=True, q_re=None)
    pt0 = points[0]
    val = ernst_potential(control, pt0, opts).value
    gap = abs(real_part_via_fay(control, pt0, opts) - val.real) / abs(val)
    checks.append(Check("phase necessity control (reduction must fail)", gap, 1e-3, bool(gap >= 1e-3),
                        "passes when the measured gap is at least the tolerance"))
    return checks


def cmd_verify(cfg: RunConfig, output: str | None) -> int:
    try:
        checks = run_checks(cfg)
    except (CurveError, ThetaDivisorHit, StencilDegenerate) as exc:
        sys.stderr.write(f"verification aborted: {type(exc).__name__}: {exc}\n")
        return 1
    lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}: measured {c.measured:.3e}, tolerance {c.tolerance:.1e}"
             for c in checks]
    sys.stdout.write("\n".join(lines) + "\n")
    if output:
        report = [{"name": c.name, "measured": c.measured, "tolerance": c.tolerance, "passed": c.passed}
                  for c in checks]
        _emit(json.dumps({"checks": report, "all_passed": all(c.passed for c in checks)}, indent=1) + "\n", output)
    return 0 if all(c.passed for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ernst-theta", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("verify", "run the identity and PDE checks"),
                       ("eval", "evaluate E on the configured grid"),
                       ("metric", "integrate A and k along the configured path")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--output", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), help="override output.format")
        p.add_argument("--with-residuals", action="store_true", help="add conj_res and pde_res columns")
        p.add_argument("--fd-step", type=float, help="finite-difference step")
        p.add_argument("--quad-order", type=int, help="Gauss-Legendre order")
        p.add_argument("--threads", type=int, default=1, help="worker threads for grid evaluation")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = load_config(args.config)
        if args.format:
            cfg = replace(cfg, output_format=args.format)
        if args.fd_step is not None:
            if not 0 < args.fd_step <= 1e-2:
                raise ConfigError("--fd-step must lie in (0, 1e-2]")
            cfg = replace(cfg, tolerances=replace(cfg.tolerances, fd_step=args.fd_step))
        if args.quad_order is not None:
            if args.quad_order < 16:
                raise ConfigError("--quad-order must be >= 16")
            cfg = replace(cfg, quad_order=args.quad_order)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if cfg.tolerances.fd_step > 1e-2:
            raise ConfigError("tolerances.fd_step must be <= 1e-2")
        if args.command == "eval":
            return cmd_eval(cfg, args.with_residuals, args.threads, args.output)
        if args.command == "metric":
            return cmd_metric(cfg, args.output)
        return cmd_verify(cfg, args.output)
    except ConfigError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
