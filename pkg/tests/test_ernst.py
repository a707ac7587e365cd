import numpy as np
import pytest

from ernst_theta.ernst import (
    ErnstOptions,
    PathTooCoarse,
    SolutionSpec,
    StencilDegenerate,
    ThetaDivisorHit,
    WorldPoint,
    _local,
    build_characteristics,
    conjugate_via_formula,
    ernst_potential,
    evaluate_grid,
    evaluate_point,
    metric_quadratures,
    pde_residual,
    real_part_via_fay,
)
from ernst_theta.riemann_surface import BranchPair
from oracles import genus1_ernst

CONJ = BranchPair.conjugate
REAL = BranchPair.real

G1 = SolutionSpec([CONJ(1 + 2j)], [0.5], [0.3])
G2 = SolutionSpec([REAL(-3.0, -1.5), CONJ(2.5 + 1.5j)], [0.3, -0.45], [0.2, -0.1])
G3 = SolutionSpec([REAL(-3.0, -1.0), CONJ(3 + 2j), REAL(4.0, 5.0)], [0.3, 0.5, -0.2], [0.1, 0.2, -0.4])
PT = WorldPoint(1.0, 0.0)
PT3 = WorldPoint(1.0, 0.5)


def test_build_characteristics_examples():
    ch = build_characteristics(SolutionSpec([CONJ(1 + 2j), CONJ(-2 + 1j)], [0, 0], [0.1, 0.2]))
    np.testing.assert_array_equal(ch.q.real, [0, 0])
    np.testing.assert_array_equal(ch.q.imag, [0.1, 0.2])
    ch = build_characteristics(SolutionSpec([REAL(-3, -1), CONJ(2 + 1j)], [0, 0], [0, 0]))
    assert ch.q.real[0] == -0.25 and ch.q.real[1] == 0.0
    ch = build_characteristics(SolutionSpec([CONJ(-2 + 1j), CONJ(2 + 1j)], [0.5, 0.5], [0, 0]))
    np.testing.assert_allclose(ch.q.real, [0.25, 0.25])


def test_shifted_and_raw_characteristics():
    spec = SolutionSpec(G3.pairs, G3.p, G3.q_im, variant="shifted")
    ch = build_characteristics(spec)
    r = np.array([[-0.5, -0.5, -0.5], [-0.5, 0.0, -0.5], [-0.5, -0.5, -0.5]])
    np.testing.assert_allclose(ch.q.real + r @ ch.p, 0.0, atol=1e-15)
    raw = SolutionSpec(G1.pairs, G1.p, G1.q_im, enforce_reality=False, q_re=[0.37])
    assert build_characteristics(raw).q[0] == 0.37 + 0.3j


def test_spec_and_point_validation():
    with pytest.raises(ValueError):
        SolutionSpec([CONJ(1 + 2j)], [0.5, 0.1], [0.0])
    with pytest.raises(ValueError):
        SolutionSpec([], [], [])
    with pytest.raises(ValueError):
        SolutionSpec([CONJ(1 + 2j)], [0.5], [0.0], variant="other")
    with pytest.raises(ValueError):
        SolutionSpec([CONJ(1 + 2j)], [np.inf], [0.0])
    with pytest.raises(ValueError):
        WorldPoint(1e-5, 0.0)


@pytest.mark.parametrize("pt", [WorldPoint(1.0, 0.0), WorldPoint(0.3, -1.2), WorldPoint(2.0, 3.5)])
def test_trivial_solution_is_one(pt):
    spec = SolutionSpec([CONJ(1 + 2j), CONJ(-2.5 + 0.5j)], [0, 0], [0, 0])
    assert abs(ernst_potential(spec, pt).value - 1) <= 1e-9
    assert abs(conjugate_via_formula(spec, pt) - 1) <= 1e-9
    assert abs(real_part_via_fay(spec, pt) - 1) <= 1e-9
    raw = SolutionSpec([REAL(-4.0, -2.0)], [0], [0], enforce_reality=False)
    assert abs(ernst_potential(raw, pt).value - 1) <= 1e-9


def test_genus1_scalar_theta_oracle():
    ev = ernst_potential(G1, PT)
    ref = genus1_ernst(1j, CONJ(1 + 2j), 0.5, 0.3)
    assert abs(ev.value - ref) <= 1e-8 * abs(ref)
    spec = SolutionSpec([CONJ(1 + 2j)], [0.5], [0.0])
    ref0 = genus1_ernst(1j, CONJ(1 + 2j), 0.5, 0.0)
    assert abs(ernst_potential(spec, PT).value - ref0) <= 1e-8 * abs(ref0)


def test_evaluation_fields():
    ev = ernst_potential(G2, WorldPoint(1.0, 0.5))
    assert ev.f == ev.value.real
    assert ev.conj_residual >= 0 and ev.realpart_residual >= 0
    assert abs(ev.phase - np.exp(-1j * np.pi * np.sum(G2.p))) < 1e-15
    np.testing.assert_array_equal(ev.theta_args[0], -ev.theta_args[1])


def test_phase_is_a_constant_factor():
    off = SolutionSpec([CONJ(1 + 2j)], [0.5], [0.0], include_phase=False)
    on = SolutionSpec([CONJ(1 + 2j)], [0.5], [0.0])
    assert abs(ernst_potential(on, PT).value - (-1j) * ernst_potential(off, PT).value) < 1e-15


@pytest.mark.parametrize("spec,pt", [(G1, PT), (G2, WorldPoint(0.7, 0.4)), (G3, PT3)])
def test_conjugation_and_real_part_identities(spec, pt):
    val = ernst_potential(spec, pt).value
    assert abs(conjugate_via_formula(spec, pt) - np.conj(val)) <= 1e-8 * abs(val)
    assert abs(real_part_via_fay(spec, pt) - val.real) <= 1e-8 * abs(val)


def test_shifted_variant_identities():
    spec = SolutionSpec(G3.pairs, G3.p, G3.q_im, variant="shifted")
    ev = ernst_potential(spec, PT3)
    assert ev.conj_residual <= 1e-8 and ev.realpart_residual <= 1e-8
    assert pde_residual(spec, PT3, 1e-3).relative <= 1e-4


def test_negative_control_reality_violation():
    ch = build_characteristics(G2)
    bad = SolutionSpec(G2.pairs, G2.p, G2.q_im, enforce_reality=False, q_re=ch.q.real + [0.1, 0.0])
    pt = WorldPoint(0.7, 0.4)
    val = ernst_potential(bad, pt).value
    # measured violation is about 1.0 relative here
    assert abs(conjugate_via_formula(bad, pt) - np.conj(val)) / abs(val) >= 1e-3


def test_phase_necessity():
    off = SolutionSpec([CONJ(1 + 2j)], [0.5], [0.2], include_phase=False)
    val = ernst_potential(off, PT).value
    assert abs(real_part_via_fay(off, PT) - val.real) / abs(val) >= 1e-3
    for p in ([1.0, 0.0], [0.6, 0.4]):
        on = SolutionSpec(G2.pairs, p, G2.q_im)
        flat = SolutionSpec(G2.pairs, p, G2.q_im, include_phase=False)
        pt = WorldPoint(0.7, 0.4)
        a, b = ernst_potential(on, pt).value, ernst_potential(flat, pt).value
        assert abs(a + b) < 1e-14 * abs(a)  # e^{-i pi} = -1
        assert abs(real_part_via_fay(flat, pt) - b.real) <= 1e-8 * abs(b)


def test_pde_trivial_solution():
    spec = SolutionSpec([CONJ(1 + 2j)], [0], [0])
    r = pde_residual(spec, PT, 1e-3)
    assert abs(r.absolute) < 1e-9 and abs(r.absolute_laplace) < 1e-9


def test_pde_generic_and_convergence():
    r = pde_residual(G1, PT, 1e-3)
    assert r.relative <= 1e-4
    assert r.form_gap <= 1e-12
    r1, r2 = pde_residual(G1, PT, 8e-3), pde_residual(G1, PT, 4e-3)
    assert 3.5 < r1.relative / r2.relative < 4.5
    assert pde_residual(G1, PT, 1e-3, richardson=True).relative < 0.1 * r.relative


def test_pde_preconditions():
    with pytest.raises(StencilDegenerate):
        pde_residual(G1, WorldPoint(0.0025, 0.0), 1e-3)
    with pytest.raises(ValueError):
        pde_residual(G1, PT, 0.05)
    # the stencil reaches the real footprint of the cut [-3, -1.5]
    with pytest.raises(StencilDegenerate):
        pde_residual(G2, WorldPoint(1.0, -1.5 + 5e-7), 1e-3)


def divisor_spec():
    loc = _local(G1, PT, ErnstOptions())
    z, tau = loc.z[0], loc.ctx.b[0, 0]
    q = 0.5 + tau / 2 + z  # Theta(-z) with p = 0 sits on its zero
    return SolutionSpec(G1.pairs, [0.0], [q.imag], enforce_reality=False, q_re=[q.real])


def test_theta_divisor_hit_and_mask():
    spec = divisor_spec()
    with pytest.raises(ThetaDivisorHit) as info:
        ernst_potential(spec, PT)
    assert info.value.point == PT
    rec = evaluate_point(spec, PT.rho, PT.zeta)
    assert rec.masked and "ThetaDivisorHit" in rec.reason


def test_metric_trivial_solution():
    spec = SolutionSpec([CONJ(1 + 2j)], [0], [0])
    path = [WorldPoint(1.0, 0.01 * k) for k in range(5)]
    fields = metric_quadratures(spec, path, 1e-3)
    assert all(m.a_field == 0.0 and m.k_field == 0.0 for m in fields)
    assert all(abs(m.f - 1) < 1e-9 for m in fields)


def l_path(a, corner, b, n):
    pts = [a + (corner - a) * k / n for k in range(n)] + [corner + (b - corner) * k / n for k in range(n + 1)]
    return [WorldPoint(x.imag, x.real) for x in pts]


@pytest.mark.parametrize("spec", [G1, G2])
def test_metric_path_independence(spec):
    a, b = complex(-0.5, 1.0), complex(-0.3, 1.2)
    m1 = metric_quadratures(spec, l_path(a, complex(b.real, a.imag), b, 20), 1e-3)
    m2 = metric_quadratures(spec, l_path(a, complex(a.real, b.imag), b, 20), 1e-3)
    assert abs(m1[-1].a_field - m2[-1].a_field) <= 1e-5
    assert abs(m1[-1].k_field - m2[-1].k_field) <= 1e-5
    assert m1[0].a_field == 0.0 and m1[0].k_field == 0.0 and m1[0].anchor == m1[0].point
    for m in m1[::10]:
        assert m.f == ernst_potential(spec, m.point).f


def test_metric_coarse_path():
    with pytest.raises(PathTooCoarse):
        metric_quadratures(G1, [WorldPoint(1.0, 0.0), WorldPoint(1.0, 0.2)], 1e-3)


def test_metric_rate_jump(monkeypatch):
    import ernst_theta.ernst as mod
    calls = iter(range(100))

    def fake(spec, pt, h, opts, richardson):
        k = next(calls)
        return 1.0 + 0j, (1.0 if k < 2 else 5.0) + 0j, 0j
    monkeypatch.setattr(mod, "_metric_integrands", fake)
    path = [WorldPoint(1.0, 0.005 * k) for k in range(4)]
    with pytest.raises(PathTooCoarse):
        metric_quadratures(G1, path, 1e-3)


def test_grid_determinism_across_threads():
    rhos, zetas = [0.5, 1.0], [-0.5, 0.0, 0.5]
    seq = evaluate_grid(G1, rhos, zetas, threads=1, with_residuals=True)
    par = evaluate_grid(G1, rhos, zetas, threads=4, with_residuals=True)
    assert [(r.rho, r.zeta) for r in seq] == [(r, z) for r in rhos for z in zetas]
    assert all(a == b and a.value == b.value for a, b in zip(seq, par))
    assert not any(r.masked for r in seq)
