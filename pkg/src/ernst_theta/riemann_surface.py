"""Hyperelliptic curves y^2 = (x-xi)(x-conj(xi)) prod_j (x-E_j)(x-F_j).

The + sheet is realised as a single-valued function on the plane minus the
straight cuts [conj(xi), xi] and [E_j, F_j]:

    y(x) = prod_c (x - m_c) * sqrt((x - u_c)(x - v_c) / (x - m_c)^2)

with the principal square root.  Each factor has its branch cut exactly on
the segment [u_c, v_c] and behaves like x at infinity, so y ~ x^(g+1) on the
whole positive real axis far out.  Because the cut system is symmetric under
complex conjugation, y(conj(x)) == conj(y(x)), i.e. the involution
tau(x, y) = (conj(x), conj(y)) preserves the + sheet.

Cycles (s_j = +1 for cuts left of Re(xi), -1 for cuts right of it):

* a_j is the counter-clockwise loop around cut j, taken on the + sheet when
  s_j = +1 and on the - sheet when s_j = -1.  Either way tau(a_j) = -a_j.
* b_j = s_j * (lift of an arc to the near tip of cut j) - sum of the a_k of
  the cuts passed on the way and of all cuts on the other side.  Arcs to left
  cuts start at xi and stay in the upper half plane, arcs to right cuts start
  at conj(xi) and stay in the lower half plane.

With these choices Re(B) is the constant pattern R_ij = 0 (i == j, conjugate
pair), -1/2 otherwise, and the upward ray from xi to infinity on the + sheet
has Re(int_xi^inf+ omega) = (1/4, ..., 1/4).  `riemann_matrix` and
`abel_to_infinity` check both and raise instead of repairing.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .numeric_kernel import (
    SingularMatrix,
    cholesky_spd,
    quadrature_nodes,
    solve_linear,
)

RHO_MIN = 1e-3
SEP_MIN = 1e-6
TOL_PERIOD = 1e-9
TOL_SYM = 1e-8
TOL_REAL = 1e-8
TOL_ABEL = 1e-8
DEFAULT_ORDER = 64


class CurveError(ValueError):
    pass


class ContourCollision(CurveError):
    pass


class BranchJumpDetected(CurveError):
    pass


class RealPartMismatch(CurveError):
    pass


class AbelRealPartUnresolvable(CurveError):
    pass


@dataclass(frozen=True)
class BranchPair:
    """Branch points E, F of one cut; sigma = 1 for a conjugate pair, 0 for a real pair."""

    e: complex
    f: complex
    kind: str

    def __post_init__(self):
        e, f = complex(self.e), complex(self.f)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "f", f)
        if self.kind == "conjugate":
            if abs(f - e.conjugate()) > 1e-14 * max(1.0, abs(e)):
                raise ValueError("conjugate pair needs f == conj(e)")
            if not e.imag > 0:
                raise ValueError("conjugate pair needs Im(e) > 0")
        elif self.kind == "real_pair":
            if e.imag != 0.0 or f.imag != 0.0:
                raise ValueError("real pair needs real branch points")
            if not e.real < f.real:
                raise ValueError("real pair needs e < f")
        else:
            raise ValueError(f"unknown pair kind {self.kind!r}")

    @classmethod
    def conjugate(cls, e: complex) -> "BranchPair":
        e = complex(e)
        if e.imag < 0:
            e = e.conjugate()
        return cls(e, e.conjugate(), "conjugate")

    @classmethod
    def real(cls, a: float, b: float) -> "BranchPair":
        a, b = sorted((float(a), float(b)))
        return cls(complex(a), complex(b), "real_pair")

    @property
    def sigma(self) -> int:
        return 1 if self.kind == "conjugate" else 0

    @property
    def footprint(self) -> tuple[float, float]:
        """Interval where the straight cut meets the real axis."""
        if self.kind == "conjugate":
            return (self.e.real, self.e.real)
        return (self.e.real, self.f.real)


@dataclass(frozen=True)
class Cut:
    u: complex
    v: complex

    @property
    def mid(self) -> complex:
        return 0.5 * (self.u + self.v)

    @property
    def half(self) -> complex:
        return 0.5 * (self.v - self.u)


def _segment_distance(p: complex, a: complex, b: complex) -> float:
    d = b - a
    if d == 0:
        return abs(p - a)
    t = ((p - a) * d.conjugate()).real / abs(d) ** 2
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * d))


@dataclass(frozen=True)
class SpectralData:
    """A point xi = zeta + i*rho together with the g branch pairs; defines the curve."""

    zeta: float
    rho: float
    pairs: tuple[BranchPair, ...]
    rho_min: float = RHO_MIN
    sep_min: float = SEP_MIN

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        object.__setattr__(self, "zeta", float(self.zeta))
        object.__setattr__(self, "rho", float(self.rho))
        if len(self.pairs) < 1:
            raise CurveError("need at least one branch pair (g >= 1)")
        if not self.rho >= self.rho_min:
            raise CurveError(f"rho={self.rho} below rho_min={self.rho_min}")
        pts = self.branch_points
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if abs(pts[i] - pts[j]) < self.sep_min:
                    raise CurveError(f"branch points {pts[i]} and {pts[j]} closer than sep_min")
        cuts = self.cuts
        for i in range(len(cuts)):
            for j in range(i + 1, len(cuts)):
                lo_i, hi_i = self._footprint(i)
                lo_j, hi_j = self._footprint(j)
                gap = max(lo_j - hi_i, lo_i - hi_j)
                if gap < self.sep_min:
                    raise ContourCollision(f"cuts {i} and {j} overlap on the real axis")

    def _footprint(self, idx: int) -> tuple[float, float]:
        if idx == 0:
            return (self.zeta, self.zeta)
        return self.pairs[idx - 1].footprint

    @property
    def genus(self) -> int:
        return len(self.pairs)

    @property
    def xi(self) -> complex:
        return complex(self.zeta, self.rho)

    @property
    def branch_points(self) -> list[complex]:
        pts = [self.xi, self.xi.conjugate()]
        for pr in self.pairs:
            pts.extend([pr.e, pr.f])
        return pts

    @cached_property
    def cuts(self) -> tuple[Cut, ...]:
        """Cut 0 is [conj(xi), xi]; cut j is [F_j, E_j] (conjugate) or [E_j, F_j] (real)."""
        out = [Cut(self.xi.conjugate(), self.xi)]
        for pr in self.pairs:
            if pr.kind == "conjugate":
                out.append(Cut(pr.f, pr.e))
            else:
                out.append(Cut(pr.e, pr.f))
        return tuple(out)

    @cached_property
    def _cut_arrays(self):
        mids = np.array([c.mid for c in self.cuts])
        us = np.array([c.u for c in self.cuts])
        vs = np.array([c.v for c in self.cuts])
        return mids, us, vs

    def y(self, x, exclude: int | None = None, anchor: complex | None = None, offset=None) -> np.ndarray:
        """+ sheet value of y at points x off the cuts; `exclude` drops one cut factor.

        If `offset` holds x - anchor for a branch point `anchor`, it replaces the
        cancelling difference in that factor (accuracy next to the branch point).
        """
        x = np.asarray(x, dtype=complex)
        mids, us, vs = self._cut_arrays
        out = np.ones_like(x)
        for c in range(len(mids)):
            if c == exclude:
                continue
            d = x - mids[c]
            du = offset if anchor is not None and us[c] == anchor else x - us[c]
            dv = offset if anchor is not None and vs[c] == anchor else x - vs[c]
            out = out * d * np.sqrt(du * dv / (d * d))
        return out

    @property
    def scale(self) -> float:
        return max(abs(p) for p in self.branch_points)

    def side(self, j: int) -> str:
        """'left' or 'right' position of pair j (0-based) relative to the xi-cut."""
        lo, hi = self.pairs[j].footprint
        return "left" if hi < self.zeta else "right"



def track_sqrt(poly_roots, path_samples, sep_min: float = SEP_MIN, y0: complex | None = None):
    """Continue y = sqrt(prod(x - root)) along sampled points of a path.

    The first value is the principal root unless `y0` picks a sign; each later
    value is whichever root is nearer the previous one.  If the two candidates
    are nearly equidistant the samples are too coarse and BranchJumpDetected
    is raised.
    """
    roots = np.asarray(poly_roots, dtype=complex)
    xs = np.asarray(path_samples, dtype=complex)
    if xs.size == 0:
        return np.zeros(0, dtype=complex)
    vals = np.prod(xs[:, None] - roots[None, :], axis=1) if roots.size else np.ones_like(xs)
    for k, x in enumerate(xs):
        if roots.size and np.min(np.abs(x - roots)) < sep_min:
            raise BranchJumpDetected(f"sample {k} at {x} sits on a root")
    out = np.empty_like(xs)
    first = cmath.sqrt(vals[0])
    if y0 is not None and abs(-first - y0) < abs(first - y0):
        first = -first
    out[0] = first
    for k in range(1, len(xs)):
        w = cmath.sqrt(vals[k])
        prev = out[k - 1]
        d_plus, d_minus = abs(w - prev), abs(w + prev)
        near, near_d, far = (w, d_plus, d_minus) if d_plus <= d_minus else (-w, d_minus, d_plus)
        # both roots about equally far: the path jumped over a branch point
        if near_d > 0.7 * far:
            raise BranchJumpDetected(f"ambiguous continuation between samples {k-1} and {k}")
        out[k] = near
    return out


# ---------------------------------------------------------------------------
# integration of the raw differentials x^(m-1) dx / y on the + sheet
# ---------------------------------------------------------------------------

def _monomials(x: np.ndarray, g: int) -> np.ndarray:
    return x[None, :] ** np.arange(g)[:, None]


def _panels(pts, x0, x1, sing_start, sing_end, max_depth=48):
    """Split [0, 1] so each panel is short compared with its distance to singular points."""
    d = x1 - x0
    length = abs(d)
    out = []
    stack = [(0.0, 1.0, 0)]
    while stack:
        sa, sb, depth = stack.pop()
        a, b = x0 + sa * d, x0 + sb * d
        touch_start = sing_start and sa == 0.0
        touch_end = sing_end and sb == 1.0
        dist = np.inf
        for p in pts:
            if (touch_start and p == x0) or (touch_end and p == x1):
                continue
            dist = min(dist, _segment_distance(p, a, b))
        plen = (sb - sa) * length
        limit = dist if (touch_start or touch_end) else 2.0 * dist
        if depth < max_depth and (plen > limit or (touch_start and touch_end)):
            mid = 0.5 * (sa + sb)
            stack.append((mid, sb, depth + 1))
            stack.append((sa, mid, depth + 1))
            continue
        if dist == 0.0:
            raise ContourCollision(f"path segment {x0}->{x1} passes through a branch point")
        out.append((sa, sb, touch_start, touch_end))
    out.sort()
    return out


def integrate_segment(sd: SpectralData, x0: complex, x1: complex, order: int = DEFAULT_ORDER,
                      sing_start: bool = False, sing_end: bool = False) -> np.ndarray:
    """Raw integrals of x^(m-1) dx / y, m = 1..g, along the straight segment x0 -> x1.

    Endpoints flagged singular are branch points; near them s = u^2 removes
    the inverse square-root behaviour.
    """
    rule = quadrature_nodes("gauss_legendre", order)
    t, w = rule.nodes, rule.weights
    d = x1 - x0
    total = np.zeros(sd.genus, dtype=complex)
    for sa, sb, ts, te in _panels(sd.branch_points, x0, x1, sing_start, sing_end):
        span = sb - sa
        anchor = offset = None
        if ts or te:
            u = 0.5 * (t + 1.0)
            s = sa + span * u * u if ts else sb - span * u * u
            jac = span * 2.0 * u * 0.5 * w
            # exact distance to the singular endpoint, free of cancellation
            anchor, offset = (x0, span * u * u * d) if ts else (x1, -span * u * u * d)
        else:
            s = sa + span * 0.5 * (t + 1.0)
            jac = span * 0.5 * w
        x = x0 + s * d
        vals = _monomials(x, sd.genus) / sd.y(x, anchor=anchor, offset=offset)[None, :]
        total += vals @ jac * d
    return total


def integrate_polyline(sd: SpectralData, vertices, order: int = DEFAULT_ORDER,
                       sing_start: bool = False, sing_end: bool = False) -> np.ndarray:
    total = np.zeros(sd.genus, dtype=complex)
    n = len(vertices) - 1
    for k in range(n):
        total += integrate_segment(sd, vertices[k], vertices[k + 1], order,
                                   sing_start=sing_start and k == 0,
                                   sing_end=sing_end and k == n - 1)
    return total


def integrate_ray(sd: SpectralData, x0: complex, direction: complex, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Raw integrals from x0 to infinity along x0 + direction * s, s >= 0.

    Uses s = L v / (1 - v) with L = |x0|; the integrand in v is smooth up to
    v = 1 because every x^(m-1)/y decays at least like x^-2.
    """
    rule = quadrature_nodes("gauss_legendre", order)
    direction = direction / abs(direction)
    big = max(abs(x0), 1.0)
    pts = sd.branch_points
    # singularities of the v-integrand, used to grade the panels
    v_sing = []
    for p in pts:
        wv = (p - x0) / (direction * big)
        v_sing.append(wv / (1.0 + wv))
    edges = [0.0, 1.0]
    done = False
    while not done:
        done = True
        new = [edges[0]]
        for a, b in zip(edges[:-1], edges[1:]):
            dist = min(_segment_distance(v, complex(a), complex(b)) for v in v_sing)
            if (b - a) > 2.0 * dist and len(edges) < 4096:
                new.append(0.5 * (a + b))
                done = False
            new.append(b)
        edges = new
    total = np.zeros(sd.genus, dtype=complex)
    for a, b in zip(edges[:-1], edges[1:]):
        v = a + (b - a) * 0.5 * (rule.nodes + 1.0)
        jac = (b - a) * 0.5 * rule.weights
        x = x0 + direction * big * v / (1.0 - v)
        dx = direction * big / (1.0 - v) ** 2
        vals = _monomials(x, sd.genus) / sd.y(x)[None, :]
        total += vals @ (jac * dx)
    return total


def a_period(sd: SpectralData, cut_index: int, order: int = DEFAULT_ORDER, max_order: int = 4096) -> np.ndarray:
    """Counter-clockwise loop around one cut, collapsed onto the segment.

    On the right-hand edge of the cut (seen from u towards v) the cut's own
    factor equals -i*h*sqrt(1-t^2) at x = m + h*t, so the loop integral is
    2i * int_{-1}^{1} x^(m-1) / R(x) dt / sqrt(1-t^2), R being the product of
    the remaining factors.  Gauss-Chebyshev absorbs the weight; the order is
    doubled until two successive estimates agree to roundoff.
    """
    cut = sd.cuts[cut_index]
    prev = None
    n = order
    while True:
        rule = quadrature_nodes("gauss_chebyshev", n)
        x = cut.mid + cut.half * rule.nodes
        vals = _monomials(x, sd.genus) / sd.y(x, exclude=cut_index)[None, :]
        cur = 2j * (vals @ rule.weights)
        if prev is not None:
            err = np.max(np.abs(cur - prev))
            if err <= 1e-15 * max(np.max(np.abs(cur)), 1e-300) or n >= max_order:
                return cur
        prev = cur
        n *= 2


# ---------------------------------------------------------------------------
# cycles, period matrix, Abel vectors
# ---------------------------------------------------------------------------

def _sides(sd: SpectralData) -> tuple[list[int], list[int]]:
    """Pair indices left and right of the xi-cut, each ordered outwards from it."""
    left = [j for j in range(sd.genus) if sd.side(j) == "left"]
    right = [j for j in range(sd.genus) if sd.side(j) == "right"]
    left.sort(key=lambda j: -sd.pairs[j].footprint[1])
    right.sort(key=lambda j: sd.pairs[j].footprint[0])
    return left, right


def _tip(pair: BranchPair, side: str) -> complex:
    if pair.kind == "conjugate":
        return pair.e if side == "left" else pair.f
    return pair.f if side == "left" else pair.e


def _arc_vertices(sd: SpectralData, j: int, side: str, between: list[int]) -> list[complex]:
    """Start at xi (left) or conj(xi) (right), climb above every tip in the way, drop onto cut j."""
    sgn = 1.0 if side == "left" else -1.0
    start = sd.xi if side == "left" else sd.xi.conjugate()
    tip = _tip(sd.pairs[j], side)
    heights = [sd.rho, abs(tip.imag)] + [abs(_tip(sd.pairs[k], side).imag) for k in between]
    h = 1.25 * max(heights) + 0.1 * abs(tip.real - sd.zeta) + 0.1
    return [start, complex(sd.zeta, sgn * h), complex(tip.real, sgn * h), tip]


def raw_periods(sd: SpectralData, order: int = DEFAULT_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """A_raw[j, m] and B_raw[j, m]: periods of x^m dx / y (m = 0..g-1) over a_j and b_j."""
    if order < 16:
        raise ValueError("quadrature order must be >= 16")
    g = sd.genus
    ccw_plus = np.array([a_period(sd, j + 1, order) for j in range(g)])
    sign = np.array([1.0 if sd.side(j) == "left" else -1.0 for j in range(g)])
    a_raw = sign[:, None] * ccw_plus
    b_raw = np.zeros((g, g), dtype=complex)
    left, right = _sides(sd)
    for side, chain, other in (("left", left, right), ("right", right, left)):
        for pos, j in enumerate(chain):
            between = chain[:pos]
            verts = _arc_vertices(sd, j, side, between)
            arc = 2.0 * integrate_polyline(sd, verts, order, sing_start=True, sing_end=True)
            row = sign[j] * arc
            for k in between + other:
                row = row - a_raw[k]
            b_raw[j] = row
    return a_raw, b_raw


def real_pattern(pairs) -> np.ndarray:
    """Constant real part of the period matrix: 0 on the diagonal of conjugate pairs, -1/2 elsewhere."""
    g = len(pairs)
    r = np.full((g, g), -0.5)
    for j, pr in enumerate(pairs):
        if pr.kind == "conjugate":
            r[j, j] = 0.0
    return r


@dataclass(frozen=True)
class DifferentialBasis:
    """omega_k = sum_m coeffs[k, m] x^m dx / y, normalised on the a-cycles."""

    coeffs: np.ndarray

    def normalise(self, raw: np.ndarray) -> np.ndarray:
        return self.coeffs @ raw


@dataclass(frozen=True)
class RiemannMatrix:
    b: np.ndarray
    r: np.ndarray
    chol_im: np.ndarray
    delta: np.ndarray

    @classmethod
    def from_matrix(cls, b) -> "RiemannMatrix":
        b = np.asarray(b, dtype=complex)
        im = 0.5 * (b.imag + b.imag.T)
        return cls(b, b.real.copy(), cholesky_spd(im), np.diag(b.real).copy())

    @property
    def genus(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class AbelData:
    to_inf_plus: np.ndarray
    to_inf_minus: np.ndarray
    half_lattice: np.ndarray
    shift: np.ndarray


def riemann_matrix(sd: SpectralData, order: int = DEFAULT_ORDER, tol_real: float = TOL_REAL,
                   tol_sym: float = TOL_SYM, tol_period: float = TOL_PERIOD):
    a_raw, b_raw = raw_periods(sd, order)
    g = sd.genus
    ct = solve_linear(a_raw, np.eye(g))  # C^T = A_raw^-1
    coeffs = ct.T
    resid = np.max(np.abs(coeffs @ a_raw.T - np.eye(g)))
    if resid > tol_period:
        raise SingularMatrix(f"a-period normalisation off by {resid:.2e}")
    b = b_raw @ ct
    asym = np.max(np.abs(b - b.T))
    if asym > tol_sym:
        raise RealPartMismatch(f"period matrix not symmetric: defect {asym:.2e}\nB = {b}")
    b = 0.5 * (b + b.T)
    pattern = real_pattern(sd.pairs)
    dev = np.max(np.abs(b.real - pattern))
    if dev > tol_real:
        raise RealPartMismatch(
            f"Re(B) deviates from the half-integer pattern by {dev:.2e}\n"
            f"xi = {sd.xi}, pairs = {sd.pairs}\nRe(B) =\n{b.real}\nexpected =\n{pattern}")
    return DifferentialBasis(coeffs), RiemannMatrix.from_matrix(b)


def _clear_of_cuts(sd: SpectralData, a: complex, b: complex) -> bool:
    """True if the open segment a-b does not meet any cut."""
    return not any(_segments_intersect(a, b, cut.u, cut.v) for cut in sd.cuts)


def _segments_intersect(p1: complex, p2: complex, q1: complex, q2: complex) -> bool:
    def cross(o, a, b):
        return ((a - o).conjugate() * (b - o)).imag

    d1, d2 = cross(q1, q2, p1), cross(q1, q2, p2)
    d3, d4 = cross(p1, p2, q1), cross(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def abel_to_infinity(sd: SpectralData, basis: DifferentialBasis, order: int = DEFAULT_ORDER,
                     tol_abel: float = TOL_ABEL) -> AbelData:
    """int_xi^{inf+} omega along the upward ray from xi on the + sheet."""
    g = sd.genus
    top = complex(sd.zeta, max(2.0 * sd.scale, 1.0) + 1.0)
    raw = integrate_polyline(sd, [sd.xi, top], order, sing_start=True)
    raw = raw + integrate_ray(sd, top, 1j, order)
    vec = basis.normalise(raw)
    target = 0.25
    shift = np.round(target - vec.real)
    dev = np.max(np.abs(vec.real + shift - target))
    if dev > tol_abel:
        raise AbelRealPartUnresolvable(
            f"Re(int_xi^inf+) = {vec.real} cannot be moved to 1/4 by an integer vector")
    plus = vec + shift
    return AbelData(plus, -plus, np.full(g, 0.5), shift)


def abel_point(sd: SpectralData, basis: DifferentialBasis, x: complex, sheet: int = 1,
               order: int = DEFAULT_ORDER) -> np.ndarray:
    """int_xi^P omega for P = (x, sheet*y(x)) along xi -> xi + iH -> Re(x) + iH -> x.

    The route stays on one sheet; ContourCollision is raised if it would
    have to cross a cut.
    """
    x = complex(x)
    h = 1.25 * max(abs(p.imag) for p in sd.branch_points) + abs(x.imag) + 0.5
    verts = [sd.xi, complex(sd.zeta, h), complex(x.real, h), x]
    for a, b in zip(verts[:-1], verts[1:]):
        if not _clear_of_cuts(sd, a, b):
            raise ContourCollision(f"route to {x} crosses a cut")
    if min(abs(x - p) for p in sd.branch_points) < sd.sep_min:
        raise ContourCollision(f"{x} sits on a branch point")
    raw = integrate_polyline(sd, verts, order, sing_start=True)
    return sheet * basis.normalise(raw)
