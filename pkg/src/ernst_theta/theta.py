"""Multi-dimensional theta functions with characteristics.

    Theta_pq(z, B) = sum_n exp(pi i <n+p, B(n+p)> + 2 pi i <n+p, z+q>)

The lattice sum is truncated to the ellipsoid |L^T (n + p + c)| <= radius
where L L^T = Im B and c = (Im B)^-1 Im(z + q) is the point where the summand
modulus peaks.  Outside that ellipsoid every term is below
exp(-pi radius^2) times the peak modulus, and the radius is chosen so the
whole neglected tail is below eps times that peak.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .numeric_kernel import cholesky_spd

MAX_POINTS = 10**8


class RadiusOverflow(RuntimeError):
    pass


class PreconditionRealPart(ValueError):
    pass


class DegenerateProbe(RuntimeError):
    pass


class DegenerateConfiguration(RuntimeError):
    pass


class NoneFound(RuntimeError):
    pass


@dataclass(frozen=True)
class Characteristics:
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(-1)
        q = np.array(self.q, dtype=complex).reshape(-1)
        if p.shape != q.shape:
            raise ValueError("p and q must have the same length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("characteristics must be finite")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def zero(cls, g: int) -> "Characteristics":
        return cls(np.zeros(g), np.zeros(g))

    def shifted(self, dq) -> "Characteristics":
        return Characteristics(self.p, self.q + np.asarray(dq))


@dataclass(frozen=True)
class HalfIntegerCharacteristic:
    p_star: np.ndarray
    q_star: np.ndarray

    @property
    def parity(self) -> int:
        return int(round(4 * float(np.dot(self.p_star, self.q_star)))) % 2

    def as_characteristics(self) -> Characteristics:
        return Characteristics(self.p_star, self.q_star)


def _radius(eps: float, g: int, lam_min: float, pnorm: float) -> float:
    # closed form from the build contract, kept as a floor
    r_contract = np.sqrt((np.log(1.0 / eps) + g * np.log(10.0)) / (np.pi * lam_min)) + pnorm + 2.0
    # tail <= exp(-pi r^2 / 2) * (1 + sqrt(2/lam))^g  (see tail_bound)
    r_tail = np.sqrt(2.0 / np.pi * (np.log(1.0 / eps) + g * np.log1p(np.sqrt(2.0 / lam_min))))
    return float(max(r_contract, r_tail, 1.0))


@dataclass(frozen=True)
class ThetaContext:
    """Period matrix plus characteristics, with the Cholesky factor of Im B cached."""

    b: np.ndarray
    chars: Characteristics
    eps: float = 1e-12
    radius: float = field(default=0.0)
    chol_im: np.ndarray = field(default=None, repr=False)
    lam_min: float = field(default=0.0, repr=False)

    def __post_init__(self):
        b = np.array(self.b, dtype=complex)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("period matrix must be square")
        if b.shape[0] != self.chars.p.shape[0]:
            raise ValueError("characteristics do not match the genus")
        im = 0.5 * (b.imag + b.imag.T)
        chol = cholesky_spd(im)
        lam = float(np.min(np.linalg.eigvalsh(im)))
        b.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "chol_im", chol)
        object.__setattr__(self, "lam_min", lam)
        if not self.radius:
            r = _radius(self.eps, b.shape[0], lam, float(np.linalg.norm(self.chars.p)))
            object.__setattr__(self, "radius", r)

    @property
    def genus(self) -> int:
        return self.b.shape[0]

    def with_chars(self, chars: Characteristics) -> "ThetaContext":
        return ThetaContext(self.b, chars, self.eps)

    def with_radius(self, radius: float) -> "ThetaContext":
        return ThetaContext(self.b, self.chars, self.eps, radius=radius)

    def tail_bound(self) -> float:
        """Bound on the neglected tail relative to the peak term modulus."""
        g = self.genus
        return float(np.exp(-np.pi * self.radius**2 / 2.0) * (1.0 + np.sqrt(2.0 / self.lam_min)) ** g)

    def lattice(self, z) -> np.ndarray:
        """Integer vectors n with |L^T (n + p + c)| <= radius, c the peak location."""
        z = np.asarray(z, dtype=complex)
        y = self.b.imag
        shift = np.linalg.solve(y, (z + self.chars.q).imag)
        return _ellipsoid_points(self.chol_im.T, self.chars.p + shift, self.radius)


def _ellipsoid_points(upper: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """All integer n with |upper @ (n + center)| <= radius, upper being upper triangular."""
    g = upper.shape[0]
    pts = np.zeros((1, 0), dtype=np.int64)
    budget = np.array([radius * radius])
    # partial offsets s_i = sum_{j>i} (U_ij/U_ii) v_j for the still-open rows
    for i in range(g - 1, -1, -1):
        uii = upper[i, i]
        if pts.shape[1]:
            v_tail = pts + center[i + 1:][None, :]
            s = v_tail @ (upper[i, i + 1:] / uii)
        else:
            s = np.zeros(pts.shape[0])
        half = np.sqrt(np.maximum(budget, 0.0)) / uii
        mid = -(center[i] + s)
        lo = np.ceil(mid - half).astype(np.int64)
        hi = np.floor(mid + half).astype(np.int64)
        counts = np.maximum(hi - lo + 1, 0)
        total = int(counts.sum())
        if total > MAX_POINTS:
            raise RadiusOverflow(f"ellipsoid holds more than {MAX_POINTS} lattice points")
        rep = np.repeat(np.arange(pts.shape[0]), counts)
        offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        ni = lo[rep] + offs
        newcol = ni[:, None]
        pts = np.hstack([newcol, pts[rep]])
        vi = ni + center[i] + s[rep]
        budget = budget[rep] - (uii * vi) ** 2
    return pts


def _exponents(ctx: ThetaContext, z: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v = pts + ctx.chars.p[None, :]
    quad = np.einsum("ni,ij,nj->n", v, ctx.b, v)
    lin = v @ (z + ctx.chars.q)
    return np.pi * 1j * quad + 2j * np.pi * lin, v


def theta(ctx: ThetaContext, z) -> complex:
    """Theta_pq(z, B) for one complex g-vector z."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    pts = ctx.lattice(z)
    expo, _ = _exponents(ctx, z, pts)
    peak = np.max(expo.real)
    return complex(np.exp(peak) * np.sum(np.exp(expo - peak)))


def theta_and_scale(ctx: ThetaContext, z) -> tuple[complex, float]:
    """Theta value and the modulus of its largest term (its natural size)."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    pts = ctx.lattice(z)
    expo, _ = _exponents(ctx, z, pts)
    peak = np.max(expo.real)
    return complex(np.exp(peak) * np.sum(np.exp(expo - peak))), float(np.exp(peak))


def theta_with_bound(ctx: ThetaContext, z) -> tuple[complex, float]:
    """Theta value together with an absolute bound on the truncation error."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    pts = ctx.lattice(z)
    expo, _ = _exponents(ctx, z, pts)
    peak = np.max(expo.real)
    val = complex(np.exp(peak) * np.sum(np.exp(expo - peak)))
    return val, float(np.exp(peak) * ctx.tail_bound())


def theta_gradient(ctx: ThetaContext, z) -> np.ndarray:
    """Term-wise derivative of the series with respect to z."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    big = ctx.with_radius(ctx.radius + 1.0)
    pts = big.lattice(z)
    expo, v = _exponents(big, z, pts)
    peak = np.max(expo.real)
    w = np.exp(expo - peak)
    return np.exp(peak) * (2j * np.pi) * (v.T @ w)


def lattice_shift_check(ctx: ThetaContext, z, m) -> float:
    """Relative defect of Theta(z + m) = exp(2 pi i <p, m>) Theta(z) for integer m."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    m = np.asarray(m, dtype=float).reshape(-1)
    lhs = theta(ctx, z + m)
    rhs = np.exp(2j * np.pi * np.dot(ctx.chars.p, m)) * theta(ctx, z)
    return float(abs(lhs - rhs) / (abs(theta(ctx, z)) + ctx.eps))


def probe_points(g: int, count: int, seed: int = 20240611) -> np.ndarray:
    """Deterministic scrambled-Halton points in the unit polydisc of C^g."""
    sampler = qmc.Halton(d=2 * g, scramble=True, seed=seed)
    u = sampler.random(count)
    r = np.sqrt(u[:, :g])
    ang = 2.0 * np.pi * u[:, g:]
    return r * np.exp(1j * ang)


def conjugation_target(ctx: ThetaContext, z) -> np.ndarray:
    """Argument w with conj(Theta(z)) = alpha * Theta(w) when 2 Re B is integral."""
    b, p, q = ctx.b, ctx.chars.p, ctx.chars.q
    shift = -2.0 * (q + b @ p).real + np.diag(b.real)
    return -np.conj(np.asarray(z, dtype=complex)) + shift


def conjugation_constant(ctx: ThetaContext, probes: int = 12) -> tuple[complex, float]:
    """(alpha, max relative deviation) for conj(Theta(z)) = alpha Theta(-conj z - 2Re(q+Bp) + diag Re B)."""
    twice = 2.0 * ctx.b.real
    if np.max(np.abs(twice - np.round(twice))) > 1e-8:
        raise PreconditionRealPart("2 Re(B) is not an integer matrix")
    g = ctx.genus
    pts = np.vstack([np.zeros((1, g)), probe_points(g, max(probes, 10))])
    alpha = None
    for z in pts:
        den = theta(ctx, conjugation_target(ctx, z))
        if abs(den) > ctx.eps:
            alpha = np.conj(theta(ctx, z)) / den
            break
    if alpha is None:
        raise DegenerateProbe("every probe point sits on a theta zero")
    worst = 0.0
    for z in pts:
        lhs = np.conj(theta(ctx, z))
        rhs = alpha * theta(ctx, conjugation_target(ctx, z))
        scale = max(abs(lhs), abs(rhs))
        if scale <= ctx.eps:
            continue
        worst = max(worst, abs(lhs - rhs) / scale)
    return complex(alpha), float(worst)


def half_integer_characteristics(g: int):
    """All 4^g half-integer characteristics in lexicographic (p*, q*) order."""
    for bits in itertools.product((0.0, 0.5), repeat=2 * g):
        yield HalfIntegerCharacteristic(np.array(bits[:g]), np.array(bits[g:]))


def find_odd_characteristic(b, eps: float = 1e-12) -> HalfIntegerCharacteristic:
    """First odd half-integer characteristic that is non-singular for B."""
    b = np.asarray(b, dtype=complex)
    g = b.shape[0]
    for hc in half_integer_characteristics(g):
        if hc.parity != 1:
            continue
        ctx = ThetaContext(b, hc.as_characteristics(), eps)
        zero = np.zeros(g)
        # at z = 0 the peak term has modulus <= 1, which fixes the scale
        if abs(theta(ctx, zero)) <= 1e-10 and np.linalg.norm(theta_gradient(ctx, zero)) >= 1e-6:
            return hc
    raise NoneFound(f"no non-singular odd characteristic for genus {g}")


def fay_residual(ctx: ThetaContext, odd: HalfIntegerCharacteristic, a_a, a_b, a_c, a_d, z) -> float:
    """Relative residual of the trisecant identity with prime forms replaced by odd thetas.

    Every prime form E(x, y) carries 1/(h(x) h(y)); each of the three terms
    contains each of a, b, c, d exactly once, so those spinor factors cancel
    and e(x, y) = Theta_odd(A_x - A_y) may be used instead.
    """
    a_a, a_b, a_c, a_d, z = (np.asarray(v, dtype=complex) for v in (a_a, a_b, a_c, a_d, z))
    octx = ctx.with_chars(odd.as_characteristics())

    def e(x, y):
        return theta(octx, x - y)

    def th(w):
        return theta(ctx, z + w)

    t1 = e(a_c, a_a) * e(a_d, a_b) * th(a_c - a_b) * th(a_d - a_a)
    t2 = e(a_c, a_b) * e(a_a, a_d) * th(a_c - a_a) * th(a_d - a_b)
    t3 = e(a_c, a_d) * e(a_a, a_b) * th(np.zeros_like(z)) * th(a_d - a_a + a_c - a_b)
    big = max(abs(t1), abs(t2), abs(t3))
    if big < ctx.eps:
        raise DegenerateConfiguration("all Fay terms vanish")
    return float(abs(t1 + t2 - t3) / max(big, ctx.eps))
