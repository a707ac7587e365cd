import numpy as np
import pytest

from ernst_theta.riemann_surface import BranchPair, SpectralData, abel_point, riemann_matrix
from ernst_theta.theta import (
    Characteristics,
    PreconditionRealPart,
    ThetaContext,
    DegenerateConfiguration,
    conjugation_constant,
    fay_residual,
    find_odd_characteristic,
    half_integer_characteristics,
    lattice_shift_check,
    probe_points,
    theta,
    theta_gradient,
)


def box_theta(z, tau, p=0.0, q=0.0, n=20):
    k = np.arange(-n, n + 1) + p
    return np.sum(np.exp(1j * np.pi * k * k * tau + 2j * np.pi * k * (z + q)))


def ctx1(tau, p=0.0, q=0.0, eps=1e-12):
    return ThetaContext(np.array([[tau]]), Characteristics([p], [q]), eps)


def test_genus1_value_against_box_sum():
    val = theta(ctx1(1j), [0.0])
    assert abs(val - 1.0864348112133) < 1e-12
    assert abs(val - box_theta(0.0, 1j)) < 1e-14


def test_odd_characteristic_vanishes_at_zero():
    for tau in (1j, 0.3 + 0.8j, -0.5 + 2j):
        assert abs(theta(ctx1(tau, 0.5, 0.5), [0.0])) < 1e-12


def test_block_diagonal_factorises():
    ctx = ThetaContext(np.diag([1j, 2j]), Characteristics.zero(2))
    expected = box_theta(0.0, 1j) * box_theta(0.0, 2j)
    assert abs(theta(ctx, [0.0, 0.0]) - expected) < 1e-12


def test_generic_genus2_against_box_sum():
    b = np.array([[0.3 + 1.1j, -0.5 + 0.4j], [-0.5 + 0.4j, 0.2 + 0.9j]])
    p, q = np.array([0.2, -0.3]), np.array([0.1 + 0.2j, 0.4])
    z = np.array([0.3 - 0.2j, -0.1 + 0.5j])
    ctx = ThetaContext(b, Characteristics(p, q))
    n = np.arange(-15, 16)
    total = 0
    for n1 in n:
        for n2 in n:
            v = np.array([n1, n2]) + p
            total += np.exp(1j * np.pi * v @ b @ v + 2j * np.pi * v @ (z + q))
    assert abs(theta(ctx, z) - total) < 1e-12 * abs(total)


def test_radius_and_certificate():
    rng = np.random.default_rng(3)
    for g in (1, 2, 3):
        x = rng.normal(size=(g, g))
        b = 0.5 * np.round(2 * rng.normal(size=(g, g)))
        b = 0.5 * (b + b.T) + 1j * (x @ x.T + 0.5 * np.eye(g))
        ctx = ThetaContext(b, Characteristics(rng.uniform(-0.5, 0.5, g), rng.normal(size=g) * (1 + 0.3j)))
        assert ctx.radius >= 1.0
        assert ctx.tail_bound() <= ctx.eps
        wide = ctx.with_radius(2 * ctx.radius)
        for z in probe_points(g, 5):
            a, w = theta(ctx, z), theta(wide, z)
            assert abs(a - w) <= ctx.eps * (abs(w) + 1)


def test_gradient_zero_for_even_theta():
    assert abs(theta_gradient(ctx1(1j), [0.0])[0]) < 1e-14


def fd_gradient(ctx, z, h=1e-6):
    g = len(z)
    out = np.zeros(g, dtype=complex)
    for k in range(g):
        e = np.zeros(g)
        e[k] = h
        out[k] = (theta(ctx, z + e) - theta(ctx, z - e)) / (2 * h)
    return out


def test_gradient_odd_characteristic_nonzero():
    ctx = ctx1(1j, 0.5, 0.5)
    grad = theta_gradient(ctx, [0.0])
    assert abs(grad[0]) > 1e-3
    assert abs(grad[0] - fd_gradient(ctx, np.zeros(1))[0]) <= 1e-6 * abs(grad[0])


def test_gradient_matches_fd_random():
    b = np.array([[-0.5 + 1.3j, -0.5 + 0.2j], [-0.5 + 0.2j, 0.8j]])
    ctx = ThetaContext(b, Characteristics([0.3, -0.1], [0.2 + 0.1j, -0.25]))
    for z in probe_points(2, 6, seed=4):
        grad = theta_gradient(ctx, z)
        assert np.max(np.abs(grad - fd_gradient(ctx, z))) <= 1e-6 * np.max(np.abs(grad))


def test_lattice_shift():
    assert lattice_shift_check(ctx1(0.2 + 1j, 0.3, 0.1), [0.4 - 0.2j], [0]) == 0.0
    ctx = ctx1(0.2 + 1j, 0.5, 0.0)
    z = np.array([0.3 + 0.1j])
    assert abs(theta(ctx, z + 1) + theta(ctx, z)) < 1e-12
    assert lattice_shift_check(ctx, z, [1]) <= 1e-10
    b = np.array([[0.1 + 1.2j, 0.3 + 0.1j], [0.3 + 0.1j, -0.4 + 0.7j]])
    ctx2 = ThetaContext(b, Characteristics([0.2, 0.7], [0.1j, 0.3]))
    assert lattice_shift_check(ctx2, np.array([0.2 + 0.3j, -0.4j]), [1, -2]) <= 1e-10


def test_conjugation_constant_trivial_case():
    ctx = ThetaContext(np.array([[1.3j, 0.2j], [0.2j, 0.9j]]), Characteristics.zero(2))
    alpha, dev = conjugation_constant(ctx)
    assert abs(alpha - 1) < 1e-12 and dev <= 1e-12


def test_conjugation_constant_real_pair_genus1():
    ctx = ctx1(-0.5 + 1j, 0.5, 0.0 + 0.3j)
    _, dev = conjugation_constant(ctx)
    assert dev <= 1e-10


def test_conjugation_precondition():
    with pytest.raises(PreconditionRealPart):
        conjugation_constant(ctx1(0.3 + 1j))


def test_odd_characteristics():
    g1 = find_odd_characteristic(np.array([[1j]]))
    assert list(g1.p_star) == [0.5] and list(g1.q_star) == [0.5]
    odd2 = [hc for hc in half_integer_characteristics(2) if hc.parity == 1]
    assert len(odd2) == 6
    hc = find_odd_characteristic(1j * np.eye(2))
    assert any(np.array_equal(hc.p_star, o.p_star) and np.array_equal(hc.q_star, o.q_star) for o in odd2)
    ctx = ThetaContext(1j * np.eye(2), hc.as_characteristics())
    assert abs(theta(ctx, np.zeros(2))) <= 1e-10
    assert np.linalg.norm(theta_gradient(ctx, np.zeros(2))) >= 1e-6


def genus2_surface():
    sd = SpectralData(0.5, 1.0, [BranchPair.real(-3.0, -1.5), BranchPair.conjugate(2.5 + 1.5j)])
    basis, rm = riemann_matrix(sd)
    return sd, basis, rm


def test_fay_degenerate_collapses():
    _, _, rm = genus2_surface()
    ctx = ThetaContext(rm.b, Characteristics.zero(2))
    odd = find_odd_characteristic(rm.b)
    a, c, d = (np.array(v) for v in ([0.1 + 0.2j, -0.3j], [0.4, 0.2 + 0.1j], [-0.2 + 0.1j, 0.3]))
    z = np.array([0.15 - 0.1j, 0.05 + 0.2j])
    assert fay_residual(ctx, odd, a, a, c, d, z) <= 1e-10
    assert fay_residual(ctx, odd, a, d, a, c, z) <= 1e-10


def test_fay_on_surface_points():
    sd, basis, rm = genus2_surface()
    ctx = ThetaContext(rm.b, Characteristics.zero(2))
    odd = find_odd_characteristic(rm.b)
    xs = [0.2 + 2.0j, -0.8 + 0.6j, 1.2 - 0.7j, 3.5 - 0.2j]
    vecs = [abel_point(sd, basis, x, sheet=s) for x, s in zip(xs, (1, -1, 1, 1))]
    for z in probe_points(2, 5, seed=9):
        assert fay_residual(ctx, odd, *vecs, z) <= 1e-8


def test_fay_all_terms_vanish():
    ctx = ThetaContext(1j * np.eye(1), Characteristics.zero(1))
    odd = find_odd_characteristic(1j * np.eye(1))
    zero = np.zeros(1)
    with pytest.raises(DegenerateConfiguration):
        fay_residual(ctx, odd, zero, zero, zero, zero, zero)


def test_context_validation():
    with pytest.raises(ValueError):
        ThetaContext(np.ones((2, 3)), Characteristics.zero(2))
    with pytest.raises(ValueError):
        ThetaContext(1j * np.eye(2), Characteristics.zero(3))
    with pytest.raises(ValueError):
        Characteristics([np.nan], [0])
