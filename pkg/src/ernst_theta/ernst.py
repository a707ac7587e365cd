"""Theta-functional Ernst potentials and their verification.

    E(xi) = exp(-pi i sum p) * Theta_pq(z) / Theta_pq(-z),   z = int_xi^{inf+} omega

All xi-derivatives come from central finite differences through the whole
pipeline (curve, periods, theta).  Every world point builds its own curve
and theta context, so evaluations are pure and can run concurrently.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .riemann_surface import (
    DEFAULT_ORDER,
    RHO_MIN,
    SEP_MIN,
    BranchPair,
    CurveError,
    SpectralData,
    abel_to_infinity,
    real_pattern,
    riemann_matrix,
)
from .theta import Characteristics, ThetaContext, theta, theta_and_scale


class ThetaDivisorHit(ArithmeticError):
    def __init__(self, message: str, point: "WorldPoint | None" = None):
        super().__init__(message)
        self.point = point


class StencilDegenerate(ValueError):
    pass


class PathTooCoarse(ValueError):
    pass


@dataclass(frozen=True)
class SolutionSpec:
    pairs: tuple[BranchPair, ...]
    p: np.ndarray
    q_im: np.ndarray
    enforce_reality: bool = True
    include_phase: bool = True
    variant: str = "standard"
    q_re: np.ndarray | None = None  # used only when enforce_reality is off

    def __post_init__(self):
        pairs = tuple(self.pairs)
        g = len(pairs)
        if g < 1:
            raise ValueError("at least one branch pair is required")
        p = np.array(self.p, dtype=float).reshape(-1)
        q_im = np.array(self.q_im, dtype=float).reshape(-1)
        if p.shape != (g,) or q_im.shape != (g,):
            raise ValueError(f"p and q_im must have length {g}")
        if self.variant not in ("standard", "shifted"):
            raise ValueError(f"unknown variant {self.variant!r}")
        q_re = None
        if self.q_re is not None:
            q_re = np.array(self.q_re, dtype=float).reshape(-1)
            if q_re.shape != (g,):
                raise ValueError(f"q_re must have length {g}")
            q_re.setflags(write=False)
        for arr in (p, q_im):
            if not np.all(np.isfinite(arr)):
                raise ValueError("characteristics must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q_im", q_im)
        object.__setattr__(self, "q_re", q_re)

    @property
    def genus(self) -> int:
        return len(self.pairs)

    @property
    def phase(self) -> complex:
        if not self.include_phase:
            return 1.0 + 0.0j
        return complex(np.exp(-1j * np.pi * np.sum(self.p)))

    @property
    def arg_shift(self) -> np.ndarray:
        """Delta/2 added to every theta argument in the shifted variant."""
        if self.variant == "shifted":
            return 0.5 * np.diag(real_pattern(self.pairs))
        return np.zeros(self.genus)


@dataclass(frozen=True)
class WorldPoint:
    rho: float
    zeta: float

    def __post_init__(self):
        if not (np.isfinite(self.rho) and np.isfinite(self.zeta)):
            raise ValueError("world point must be finite")
        if self.rho < RHO_MIN:
            raise ValueError(f"rho = {self.rho} is below {RHO_MIN}")

    @property
    def xi(self) -> complex:
        return complex(self.zeta, self.rho)


@dataclass(frozen=True)
class ErnstOptions:
    order: int = DEFAULT_ORDER
    eps: float = 1e-14
    eps_div: float = 1e-10
    rho_min: float = RHO_MIN
    sep_min: float = SEP_MIN


@dataclass(frozen=True)
class ErnstEvaluation:
    value: complex
    f: float
    phase: complex
    conj_residual: float
    realpart_residual: float
    theta_args: tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class MetricFields:
    a_field: float
    k_field: float
    anchor: WorldPoint
    point: WorldPoint
    f: float


@dataclass(frozen=True)
class PdeResidual:
    absolute: complex
    relative: float
    absolute_laplace: complex  # (E+conj E) Lap E - 8 E_xi E_xibar, four times the other form
    form_gap: float


def build_characteristics(spec: SolutionSpec) -> Characteristics:
    p = spec.p
    if not spec.enforce_reality:
        q_re = spec.q_re if spec.q_re is not None else np.zeros(spec.genus)
    elif spec.variant == "shifted":
        q_re = -real_pattern(spec.pairs) @ p
    else:
        total = np.sum(p)
        q_re = np.array([
            0.5 * (total - p[j]) if pair.kind == "conjugate" else -0.25 + 0.5 * total
            for j, pair in enumerate(spec.pairs)
        ])
    return Characteristics(p, q_re + 1j * spec.q_im)


@dataclass(frozen=True)
class _Local:
    """Everything needed at one world point."""

    z: np.ndarray
    ctx: ThetaContext
    zero_ctx: ThetaContext
    shift: np.ndarray
    phase: complex
    pt: WorldPoint
    eps_div: float

    def th(self, w) -> complex:
        return theta(self.ctx, np.asarray(w) + self.shift)

    def th_checked(self, w) -> complex:
        val, scale = theta_and_scale(self.ctx, np.asarray(w) + self.shift)
        if abs(val) < self.eps_div * scale:
            raise ThetaDivisorHit(f"theta denominator {abs(val):.3e} vanishes at {self.pt}", self.pt)
        return val


def _local(spec: SolutionSpec, pt: WorldPoint, opts: ErnstOptions) -> _Local:
    sd = SpectralData(pt.zeta, pt.rho, spec.pairs, rho_min=opts.rho_min, sep_min=opts.sep_min)
    basis, rm = riemann_matrix(sd, opts.order)
    abel = abel_to_infinity(sd, basis, opts.order)
    ctx = ThetaContext(rm.b, build_characteristics(spec), opts.eps)
    zero_ctx = ThetaContext(rm.b, Characteristics.zero(spec.genus), opts.eps)
    return _Local(abel.to_inf_plus, ctx, zero_ctx, spec.arg_shift, spec.phase, pt, opts.eps_div)


def _value(loc: _Local) -> complex:
    return loc.phase * loc.th(loc.z) / loc.th_checked(-loc.z)


def _conj_formula(loc: _Local) -> complex:
    # conj moves xi to conj(xi); int_{conj xi}^{inf+} = h1 - int_xi^{inf+} after the lattice shift
    h1 = np.full(loc.z.shape, 0.5)
    return loc.phase * loc.th(loc.z + h1) / loc.th_checked(h1 - loc.z)


def _real_part_formula(loc: _Local) -> complex:
    g = loc.z.shape[0]
    h1 = np.full(g, 0.5)
    zero = np.zeros(g)
    q_num = theta(loc.zero_ctx, -loc.z) * theta(loc.zero_ctx, h1 - loc.z)
    q_den = theta(loc.zero_ctx, zero) * theta(loc.zero_ctx, -h1)
    if abs(q_den) == 0.0:
        raise ThetaDivisorHit(f"zero-characteristic normaliser vanishes at {loc.pt}", loc.pt)
    num = loc.th(zero) * loc.th(h1)
    den = loc.th_checked(-loc.z) * loc.th_checked(h1 - loc.z)
    return (q_num / q_den) * loc.phase * num / den


def ernst_potential(spec: SolutionSpec, pt: WorldPoint, opts: ErnstOptions | None = None) -> ErnstEvaluation:
    loc = _local(spec, pt, opts or ErnstOptions())
    value = _value(loc)
    scale = max(abs(value), 1e-300)
    conj_res = abs(_conj_formula(loc) - np.conj(value)) / scale
    real_res = abs(_real_part_formula(loc) - value.real) / scale
    return ErnstEvaluation(
        value=complex(value),
        f=float(value.real),
        phase=loc.phase,
        conj_residual=float(conj_res),
        realpart_residual=float(real_res),
        theta_args=(loc.z + loc.shift, -loc.z + loc.shift),
    )


def conjugate_via_formula(spec: SolutionSpec, pt: WorldPoint, opts: ErnstOptions | None = None) -> complex:
    return complex(_conj_formula(_local(spec, pt, opts or ErnstOptions())))


def real_part_via_fay(spec: SolutionSpec, pt: WorldPoint, opts: ErnstOptions | None = None) -> complex:
    """Fay-reduced real part.  Complex in general: the imaginary part only vanishes
    when the identity holds, which needs the phase factor for half-integer sum(p)."""
    val = _real_part_formula(_local(spec, pt, opts or ErnstOptions()))
    return complex(val)


def default_step(pt: WorldPoint) -> float:
    return 1e-3 * max(1.0, abs(pt.xi))


def _stencil_value(spec: SolutionSpec, rho: float, zeta: float, opts: ErnstOptions) -> complex:
    try:
        pt = WorldPoint(rho, zeta)
        return _value(_local(spec, pt, opts))
    except ValueError as exc:
        raise StencilDegenerate(f"stencil point rho={rho}, zeta={zeta}: {exc}") from exc


def _derivatives(spec: SolutionSpec, pt: WorldPoint, h: float, opts: ErnstOptions):
    """E, E_zeta, E_rho, E_zetazeta, E_rhorho by second-order central differences."""
    e0 = _stencil_value(spec, pt.rho, pt.zeta, opts)
    ezp = _stencil_value(spec, pt.rho, pt.zeta + h, opts)
    ezm = _stencil_value(spec, pt.rho, pt.zeta - h, opts)
    erp = _stencil_value(spec, pt.rho + h, pt.zeta, opts)
    erm = _stencil_value(spec, pt.rho - h, pt.zeta, opts)
    return (
        e0,
        (ezp - ezm) / (2 * h),
        (erp - erm) / (2 * h),
        (ezp - 2 * e0 + ezm) / h**2,
        (erp - 2 * e0 + erm) / h**2,
    )


def field_derivatives(spec: SolutionSpec, pt: WorldPoint, h: float | None = None,
                      opts: ErnstOptions | None = None, richardson: bool = False):
    """(E, E_zeta, E_rho, E_zetazeta, E_rhorho); Richardson combines steps h and h/2."""
    opts = opts or ErnstOptions()
    h = default_step(pt) if h is None else float(h)
    if not 0.0 < h <= 1e-2:
        raise ValueError("finite-difference step must lie in (0, 1e-2]")
    if pt.rho - h < opts.rho_min + h:
        raise StencilDegenerate(f"rho = {pt.rho} is within 2h of the axis exclusion zone")
    coarse = _derivatives(spec, pt, h, opts)
    if not richardson:
        return coarse
    fine = _derivatives(spec, pt, h / 2, opts)
    return tuple(f + (f - c) / 3.0 for c, f in zip(coarse, fine))


def pde_residual(spec: SolutionSpec, pt: WorldPoint, h: float | None = None,
                 opts: ErnstOptions | None = None, richardson: bool = False) -> PdeResidual:
    e, ez, er, ezz, err = field_derivatives(spec, pt, h, opts, richardson)
    e_xi = 0.5 * (ez - 1j * er)
    e_xib = 0.5 * (ez + 1j * er)
    e_xixib = 0.25 * (ezz + err)
    xi = pt.xi
    lhs = (e + np.conj(e)) * (e_xixib - (e_xib - e_xi) / (2 * (np.conj(xi) - xi)))
    rhs = 2 * e_xi * e_xib
    lap = err + ezz + er / pt.rho
    alt = (e + np.conj(e)) * lap - 8 * e_xi * e_xib
    absolute = lhs - rhs
    rel = abs(absolute) / max(abs(lhs), abs(rhs), 1e-300)
    gap = abs(alt - 4 * absolute) / max(4 * abs(lhs), 4 * abs(rhs), 1e-300)
    return PdeResidual(complex(absolute), float(rel), complex(alt), float(gap))


def _metric_integrands(spec, pt, h, opts, richardson):
    e, ez, er, _, _ = field_derivatives(spec, pt, h, opts, richardson)
    e_xi = 0.5 * (ez - 1j * er)
    e_xib = 0.5 * (ez + 1j * er)
    s = (e + np.conj(e)) ** 2
    e_bar_xi = np.conj(e_xib)  # d/dxi of conj(E)
    a_xi = 2 * pt.rho * (e_xi - e_bar_xi) / s
    # E_xi times d/dxi conj(E): the product with E_xibar itself is not a closed form
    k_xi = 2j * pt.rho * e_xi * e_bar_xi / s
    return e, a_xi, k_xi


def metric_quadratures(spec: SolutionSpec, path, h: float | None = None,
                       opts: ErnstOptions | None = None, richardson: bool = False,
                       jump_tol: float = 0.5) -> list[MetricFields]:
    """A and k along a polyline of world points, both gauged to zero at the first vertex.

    dA = 2 Re(A_xi dxi) and dk = 2 Re(k_xi dxi) are integrated with the trapezoid
    rule.  PathTooCoarse is raised when vertices are more than 10h apart or when
    the integrand rate changes by more than jump_tol between consecutive collinear
    segments.
    """
    opts = opts or ErnstOptions()
    path = [pt if isinstance(pt, WorldPoint) else WorldPoint(*pt) for pt in path]
    if not path:
        raise ValueError("path is empty")
    steps = [default_step(pt) if h is None else float(h) for pt in path]
    for i in range(1, len(path)):
        if abs(path[i].xi - path[i - 1].xi) > 10 * min(steps[i], steps[i - 1]) * (1 + 1e-9):
            raise PathTooCoarse(f"vertices {i - 1} and {i} are more than 10h apart")
    samples = [_metric_integrands(spec, pt, s, opts, richardson) for pt, s in zip(path, steps)]

    out = [MetricFields(0.0, 0.0, path[0], path[0], float(samples[0][0].real))]
    a_val = k_val = 0.0
    prev = None
    for i in range(1, len(path)):
        dxi = path[i].xi - path[i - 1].xi
        da = np.real(samples[i - 1][1] * dxi) + np.real(samples[i][1] * dxi)
        dk = np.real(samples[i - 1][2] * dxi) + np.real(samples[i][2] * dxi)
        length = abs(dxi)
        if length > 0:
            rate = np.array([da, dk]) / length
            direction = dxi / length
            if prev is not None and abs(prev[1] - direction) < 1e-9:
                for r_new, r_old in zip(rate, prev[0]):
                    big = max(abs(r_new), abs(r_old))
                    if big > 1e-9 and abs(r_new - r_old) > jump_tol * big:
                        raise PathTooCoarse(f"integrand rate jumps by more than {jump_tol:.0%} at vertex {i}")
            prev = (rate, direction)
        a_val += da
        k_val += dk
        out.append(MetricFields(float(a_val), float(k_val), path[0], path[i], float(samples[i][0].real)))
    return out


@dataclass(frozen=True)
class GridRecord:
    rho: float
    zeta: float
    value: complex = complex("nan")
    conj_res: float = float("nan")
    pde_res: float = float("nan")
    masked: bool = False
    reason: str = field(default="", compare=False)

    @property
    def f(self) -> float:
        return self.value.real


def evaluate_point(spec: SolutionSpec, rho: float, zeta: float, opts: ErnstOptions | None = None,
                   with_residuals: bool = False, fd_step: float | None = None) -> GridRecord:
    """One grid cell; theta-divisor hits and curve failures become masked records."""
    opts = opts or ErnstOptions()
    try:
        pt = WorldPoint(rho, zeta)
        ev = ernst_potential(spec, pt, opts)
        if not with_residuals:
            return GridRecord(rho, zeta, ev.value)
        pde = pde_residual(spec, pt, fd_step, opts)
        return GridRecord(rho, zeta, ev.value, ev.conj_residual, pde.relative)
    except (ThetaDivisorHit, CurveError, StencilDegenerate, ValueError) as exc:
        return GridRecord(rho, zeta, masked=True, reason=f"{type(exc).__name__}: {exc}")


def evaluate_grid(spec: SolutionSpec, rhos, zetas, opts: ErnstOptions | None = None,
                  with_residuals: bool = False, fd_step: float | None = None,
                  threads: int = 1) -> list[GridRecord]:
    """Records in grid-index order (rho outer, zeta inner) for any thread count."""
    cells = [(float(r), float(z)) for r in rhos for z in zetas]

    def work(cell):
        return evaluate_point(spec, cell[0], cell[1], opts, with_residuals, fd_step)

    if threads <= 1:
        return [work(c) for c in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, cells))
