from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifmg.geometry import get_levelset
from ifmg.meshgen import fit_mesh, make_uniform_mesh
from ifmg.quality import audit_fitted_mesh, check_rdp, triangle_angles, triangle_angles_many


def test_right_triangle_angles():
    a = sorted(triangle_angles([(0, 0), (1, 0), (0, 1)]))
    assert a == pytest.approx([math.pi / 4, math.pi / 4, math.pi / 2], abs=1e-14)


def test_equilateral_angles():
    a = triangle_angles([(0, 0), (1, 0), (0.5, math.sqrt(3) / 2)])
    assert a == pytest.approx([math.pi / 3] * 3, abs=1e-14)


def test_sliver_max_angle():
    a = triangle_angles([(0, 0), (1, 0), (0.5, 1e-3)])
    expect = math.pi - 2 * math.atan(1e-3 / 0.5)
    assert max(a) == pytest.approx(expect, abs=1e-12)
    assert sum(a) == pytest.approx(math.pi, abs=1e-12)


def test_rdp_square_and_rectangle():
    N, psi, _ = check_rdp([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert N == pytest.approx(1.0) and psi == pytest.approx(math.pi / 2)
    for eps in (1e-1, 1e-3, 1e-6):
        N, psi, _ = check_rdp([(0, 0), (1, 0), (1, eps), (0, eps)])
        assert N == pytest.approx(1.0) and psi == pytest.approx(math.pi / 2, abs=1e-9)


def _brute_rdp(q):
    q = np.asarray(q, dtype=float)
    best = None
    for d, (t1, t2, d1, d2) in enumerate((([0, 1, 2], [0, 2, 3], (0, 2), (1, 3)),
                                          ([1, 2, 3], [1, 3, 0], (1, 3), (0, 2)))):
        psi = max(max(triangle_angles(q[t1])), max(triangle_angles(q[t2])))
        N = np.linalg.norm(q[d2[1]] - q[d2[0]]) / np.linalg.norm(q[d1[1]] - q[d1[0]])
        cand = (psi, N, d)
        if best is None or cand < best:
            best = cand
    return best


def test_rdp_brute_force():
    q = [(0, 0), (1, 0), (1.2, 0.5), (0, 1)]
    psi, N, d = _brute_rdp(q)
    got = check_rdp(q)
    assert got[0] == pytest.approx(N) and got[1] == pytest.approx(psi) and got[2] == d


def test_rdp_rejects_nonconvex():
    with pytest.raises(ValueError):
        check_rdp([(0, 0), (1, 0), (0.2, 0.2), (0, 1)])


@settings(max_examples=80, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0.1, 10), st.floats(-5, 5), st.floats(-5, 5))
def test_rdp_similarity_invariance(theta, scale, tx, ty):
    q = np.array([(0, 0), (1, 0), (1.2, 0.5), (0, 1)], dtype=float)
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    q2 = scale * q @ R.T + [tx, ty]
    a, b = check_rdp(q), check_rdp(q2)
    assert a[0] == pytest.approx(b[0], abs=1e-9) and a[1] == pytest.approx(b[1], abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6))
def test_angle_sum(xs):
    p = np.array(xs).reshape(1, 3, 2)
    u, v = p[0, 1] - p[0, 0], p[0, 2] - p[0, 0]
    if abs(u[0] * v[1] - u[1] * v[0]) < 1e-6:
        return
    assert triangle_angles_many(p).sum() == pytest.approx(math.pi, abs=1e-10)


def test_audit_uniform_mesh():
    rep = audit_fitted_mesh(fit_mesh(make_uniform_mesh(8), get_levelset("none")))
    assert rep.ok and rep.max_angle == pytest.approx(math.pi / 2)


def test_audit_circle(circle_mesh16):
    rep = audit_fitted_mesh(circle_mesh16)
    assert rep.ok


def test_audit_catches_sheared_quad(circle_mesh16):
    m = circle_mesh16
    bad = type(m)(**{**m.__dict__})
    verts = np.vstack([m.vertices, [(10.0, 0.0), (10.1, 0.0), (10.2, 0.02), (10.0, 0.01)]])
    nv = len(m.vertices)
    bad.vertices = verts
    bad.quad = np.vstack([m.quad, [[nv, nv + 1, nv + 2, nv + 3]]])
    bad.quad_region = np.append(m.quad_region, 1)
    rep = audit_fitted_mesh(bad)
    assert [v.element for v in rep.violations] == [len(m.tri) + len(m.quad)]


def test_quality_csv(tmp_path, circle_mesh16):
    rep = audit_fitted_mesh(circle_mesh16, keep_rows=True)
    rep.write_csv(tmp_path / "q.csv")
    lines = (tmp_path / "q.csv").read_text().splitlines()
    assert lines[0] == "element,kind,min_angle,max_angle,N,psi"
    assert len(lines) == 1 + circle_mesh16.n_elements
