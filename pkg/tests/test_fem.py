from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from ifmg.exact import get_exact
from ifmg.errors import compute_errors, eoc
from ifmg.fem import (DiscreteField, ProblemData, TRI_DEG4, assemble, build_z_gamma, gauss_square, interpolate,
                      local_stiffness_quad, local_stiffness_tri, q1_map, reconstruct_uh)
from ifmg.geometry import Region, get_levelset
from ifmg.meshgen import fit_mesh, make_uniform_mesh
from ifmg.mg import solve_direct


def test_q1_map_examples():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert q1_map(sq, (0.5, 0.5)) == pytest.approx([0.5, 0.5])
    q = [(0.1, -0.2), (1.3, 0.1), (1.0, 1.4), (-0.2, 0.9)]
    corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
    for c, p in zip(corners, q):
        assert q1_map(q, c) == pytest.approx(p)
    assert q1_map([(0, 0), (2, 0), (2, 1), (0, 1)], (0.25, 0.5)) == pytest.approx([0.5, 0.5])


def test_tri_stiffness_oracle():
    K = local_stiffness_tri([(0, 0), (1, 0), (0, 1)], 1.0)
    expect = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    assert np.allclose(K, expect, atol=1e-15)
    assert np.allclose(local_stiffness_tri([(0, 0), (1, 0), (0, 1)], 2.0), 2 * expect)
    K = local_stiffness_tri([(0.3, -0.1), (2.0, 0.4), (-0.5, 1.7)], 3.0)
    assert np.allclose(K.sum(axis=1), 0, atol=1e-13) and np.allclose(K, K.T)


def test_quad_stiffness_square():
    K = local_stiffness_quad([(0, 0), (1, 0), (1, 1), (0, 1)], 1.0)
    d, adj, opp = 2 / 3, -1 / 6, -1 / 3
    expect = np.array([[d, adj, opp, adj], [adj, d, adj, opp], [opp, adj, d, adj], [adj, opp, adj, d]])
    assert np.allclose(K, expect, atol=1e-14)


def test_quad_stiffness_parallelogram():
    # bilinear functions pulled back through an affine map: integrate the exact form
    q = np.array([(0.0, 0.0), (2.0, 0.5), (2.6, 1.7), (0.6, 1.2)])
    B = np.column_stack([q[1] - q[0], q[3] - q[0]])
    Binv = np.linalg.inv(B)
    rule = gauss_square(4)
    K = np.zeros((4, 4))
    for (s, t), w in zip(rule.points, rule.weights):
        gref = np.array([[-(1 - t), -(1 - s)], [1 - t, -s], [t, s], [-t, 1 - s]])
        g = gref @ Binv
        K += w * abs(np.linalg.det(B)) * g @ g.T
    assert np.allclose(local_stiffness_quad(q, 1.0), K, atol=1e-13)
    Kg = local_stiffness_quad([(0, 0), (1.0, 0.1), (1.3, 1.2), (-0.1, 0.8)], 5.0)
    assert np.allclose(Kg.sum(axis=1), 0, atol=1e-12) and np.allclose(Kg, Kg.T)


def test_dunavant_exactness():
    # integrates monomials up to degree 4 on the reference triangle
    from math import factorial
    for a in range(5):
        for b in range(5 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            got = np.sum(TRI_DEG4.weights * TRI_DEG4.points[:, 0] ** a * TRI_DEG4.points[:, 1] ** b)
            assert got == pytest.approx(exact, abs=1e-15)


def test_poisson_matches_dense_oracle():
    m = fit_mesh(make_uniform_mesh(4), get_levelset("none"))
    sys = assemble(m, ProblemData())
    # dense assembly by hand over the same triangles
    nv = m.n_vertices
    A = np.zeros((nv, nv))
    for t in m.tri:
        A[np.ix_(t, t)] += local_stiffness_tri(m.vertices[t], 1.0)
    free = np.nonzero(~m.boundary)[0]
    assert np.allclose(sys.A.toarray(), A[np.ix_(free, free)], atol=1e-14)
    # the interior row is the five-point stencil
    assert sorted(np.round(sys.A.toarray()[4], 12)) == [-1, -1, -1, -1, 0, 0, 0, 0, 4]
    assert np.allclose(sys.b, 0)


def test_system_spd(rng):
    ex = get_exact(2, 1e3, 1.0)
    m = fit_mesh(make_uniform_mesh(16), ex.levelset)
    A = assemble(m, ex.problem()).A
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    spla.splu(A.tocsc())
    for _ in range(20):
        v = rng.standard_normal(A.shape[0])
        assert v @ (A @ v) > 0


def test_z_gamma_constant_jump(circle_mesh16):
    m = circle_mesh16
    assert np.all(build_z_gamma(m, lambda x, y: 0 * x).offset == 0)
    z = build_z_gamma(m, lambda x, y: 0 * x + 2.5)
    assert np.allclose(z.side_values(Region.REGION2)[m.interface_nodes], -2.5)
    assert np.allclose(z.side_values(Region.REGION1), 0)
    ubar = DiscreteField(m, np.zeros(m.n_vertices))
    u = reconstruct_uh(ubar, z)
    assert np.allclose(u.jump_at(m.interface_nodes), 2.5)
    assert np.array_equal(reconstruct_uh(ubar, DiscreteField(m, np.zeros(m.n_vertices))).values, ubar.values)


def test_z_gamma_example2_values():
    ex = get_exact(2, 10.0, 1.0)
    m = fit_mesh(make_uniform_mesh(16), ex.levelset)
    z = build_z_gamma(m, ex.q)
    p = m.vertices[m.interface_nodes]
    q = (1 / 10 - 1) * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]) - 5
    assert np.allclose(z.offset[m.interface_nodes], -q, atol=1e-14)


@pytest.mark.parametrize("beta", [1.0, 7.0])
def test_patch_linear(circle, beta):
    u = lambda x, y, r=None: 1 + 2 * x - 3 * y
    data = ProblemData(beta, beta, u_bc=u)
    m = fit_mesh(make_uniform_mesh(8), circle)
    assert len(m.quad) > 0
    sys = assemble(m, data)
    uh = sys.field(solve_direct(sys.A, sys.b))
    p = m.vertices
    for reg in (Region.REGION1, Region.REGION2):
        assert np.abs(uh.side_values(reg) - u(p[:, 0], p[:, 1])).max() < 1e-10


def test_galerkin_residual(circle):
    ex = get_exact(1, 1e2, 1.0)
    m = fit_mesh(make_uniform_mesh(32), circle)
    sys = assemble(m, ex.problem())
    x = solve_direct(sys.A, sys.b)
    assert np.linalg.norm(sys.b - sys.A @ x) <= 1e-12 * np.linalg.norm(sys.b)


@pytest.mark.parametrize("example", [1, 2, 3])
def test_source_against_finite_differences(example, rng):
    ex = get_exact(example, 3.0, 0.5)
    pts = rng.uniform(-0.95, 0.95, size=(200, 2))
    phi = ex.levelset(pts[:, 0], pts[:, 1])
    pts = pts[np.abs(phi) > 0.05]
    x, y = pts[:, 0], pts[:, 1]
    reg = np.where(ex.levelset(x, y) > 0, 1, 2)
    d = 1e-4
    lap = (ex.u(x + d, y, reg) + ex.u(x - d, y, reg) + ex.u(x, y + d, reg) + ex.u(x, y - d, reg)
           - 4 * ex.u(x, y, reg)) / d ** 2
    fd = -ex.beta(reg) * lap
    assert np.allclose(ex.f(x, y, reg), fd, rtol=1e-5, atol=1e-4)


def test_interpolation_orders(circle):
    ex = get_exact(1, 1.0, 100.0)
    errs = [compute_errors(interpolate(fit_mesh(make_uniform_mesh(n), circle), ex.u), ex) for n in (32, 64, 128)]
    r0 = eoc([e.l2 for e in errs])
    r1 = eoc([e.h1 for e in errs])
    assert np.all((r0 > 1.85) & (r0 < 2.15)) and np.all((r1 > 0.85) & (r1 < 1.15))


def _linear_exact(levelset, shift=0.0):
    from ifmg.exact import ExactSolution
    u = lambda x, y, r: 2 * x - y + 0.5 + shift * (np.asarray(r) == Region.REGION2)
    grad = lambda x, y, r: np.stack(np.broadcast_arrays(2.0 + 0 * x, -1.0 + 0 * x), -1)
    zero = lambda x, y, *a: 0 * x
    return ExactSolution("linear", levelset, 1.0, 1.0, u, grad, zero, zero, zero)


def test_discrete_exact_has_zero_error(circle):
    m = fit_mesh(make_uniform_mesh(8), circle)
    ex = _linear_exact(circle)
    rep = compute_errors(interpolate(m, ex.u), ex)
    assert rep.l2 < 1e-14 and rep.h1 < 1e-13


def test_region2_shift_is_side_consistent(circle):
    from ifmg.meshgen import region_areas
    m = fit_mesh(make_uniform_mesh(16), circle)
    uh = interpolate(m, _linear_exact(circle).u)
    c = 0.75
    rep = compute_errors(uh, _linear_exact(circle, shift=c), branch="mesh")
    assert rep.l2 == pytest.approx(c * np.sqrt(region_areas(m)[1]), rel=1e-12)
    assert rep.h1 < 1e-13
    shifted = DiscreteField(m, uh.values, uh.offset + c)
    rep = compute_errors(shifted, _linear_exact(circle, shift=c), branch="mesh")
    assert rep.l2 < 1e-14
