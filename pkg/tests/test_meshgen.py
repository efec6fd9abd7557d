from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from ifmg.geometry import Region, get_levelset, parse_levelset
from ifmg.meshgen import (ElementKind, UnfittedMesh, build_hierarchy, detect_interface_elements, fit_mesh,
                          make_uniform_mesh, polygon_areas, region_areas, triangle_areas)


def _single_triangle():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return UnfittedMesh(v, np.array([[0, 1, 2]]), 1.0, np.ones(3, dtype=bool))


def _polys(mesh, cells):
    return sorted(tuple(sorted(map(tuple, np.round(mesh.vertices[c], 12)))) for c in cells)


@pytest.mark.parametrize("n,nv,nt", [(2, 9, 8), (4, 25, 32), (7, 64, 98)])
def test_uniform_counts(n, nv, nt):
    m = make_uniform_mesh(n)
    assert m.n_vertices == nv and len(m.triangles) == nt
    assert m.h == pytest.approx(2.0 / n)
    assert triangle_areas(m.vertices, m.triangles).sum() == pytest.approx(4.0)
    assert np.all(triangle_areas(m.vertices, m.triangles) > 0)
    assert m.boundary.sum() == 4 * n


def test_detect_example(circle):
    m = make_uniform_mesh(8)
    cut = set(detect_interface_elements(m, circle).tolist())
    target = {(0.25, 0.25), (0.5, 0.25), (0.25, 0.5)}
    k = [i for i, t in enumerate(m.triangles) if set(map(tuple, m.vertices[t])) == target]
    assert len(k) == 1 and k[0] in cut
    phi = circle(m.vertices[:, 0], m.vertices[:, 1])
    for t in m.triangles[np.all(phi[m.triangles] > 0.1, axis=1)]:
        assert not any(np.array_equal(t, m.triangles[c]) for c in cut)


def test_detect_empty():
    m = make_uniform_mesh(8)
    assert len(detect_interface_elements(m, get_levelset("none"))) == 0


def test_fit_line_cut():
    fm = fit_mesh(_single_triangle(), parse_levelset("x - 0.5"))
    assert len(fm.quad) == 1 and len(fm.tri) == 1
    assert _polys(fm, fm.quad) == [tuple(sorted([(0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (0.0, 1.0)]))]
    assert _polys(fm, fm.tri) == [tuple(sorted([(0.5, 0.0), (1.0, 0.0), (0.5, 0.5)]))]
    assert fm.quad_region[0] == Region.REGION2 and fm.tri_region[0] == Region.REGION1
    assert len(fm.interface_nodes) == 2 and len(fm.gamma_h) == 1


def test_fit_vertex_chord():
    fm = fit_mesh(_single_triangle(), parse_levelset("x - y"))
    assert len(fm.quad) == 0 and len(fm.tri) == 2
    expect = sorted([tuple(sorted([(0.0, 0.0), (1.0, 0.0), (0.5, 0.5)])),
                     tuple(sorted([(0.0, 0.0), (0.5, 0.5), (0.0, 1.0)]))])
    assert _polys(fm, fm.tri) == expect
    assert set(fm.tri_region.tolist()) == {1, 2}


def test_fit_without_interface_is_identity():
    m = make_uniform_mesh(6)
    fm = fit_mesh(m, get_levelset("none"))
    assert np.array_equal(fm.vertices, m.vertices) and np.array_equal(fm.tri, m.triangles)
    assert len(fm.quad) == 0 and all(e.kind is ElementKind.TRI3 for e in fm.elements())


@pytest.mark.parametrize("name", ["circle", "cardioid", "fivestar-circle-radial"])
def test_fitted_mesh_conformity(name):
    ls = get_levelset(name)
    m = make_uniform_mesh(32)
    fm = fit_mesh(m, ls, strict=False)
    areas = np.concatenate([triangle_areas(fm.vertices, fm.tri), polygon_areas(fm.vertices, fm.quad)])
    assert np.all(areas > 0) and areas.sum() == pytest.approx(4.0, abs=1e-12)
    assert fm.n_vertices == m.n_vertices + int(np.sum(np.asarray(fm.interface_nodes) >= m.n_vertices))
    # every interior edge is shared by two elements, boundary edges by one
    edges = Counter()
    owner = {}
    cells = [(c, r) for c, r in zip(fm.tri, fm.tri_region)] + [(c, r) for c, r in zip(fm.quad, fm.quad_region)]
    for c, r in cells:
        for a, b in zip(c, np.roll(c, -1)):
            e = (min(a, b), max(a, b))
            edges[e] += 1
            owner.setdefault(e, []).append(int(r))
    for e, k in edges.items():
        on_bnd = fm.boundary[e[0]] and fm.boundary[e[1]] and np.any(
            np.all(np.isclose(np.abs(fm.vertices[list(e)]), 1.0), axis=0))
        assert k == (1 if on_bnd else 2)
    for a, b in fm.gamma_h:
        regs = owner[(min(a, b), max(a, b))]
        assert len(regs) == 1 or sorted(regs) == [1, 2]


def test_region_areas_trivial():
    m = make_uniform_mesh(8)
    assert region_areas(fit_mesh(m, parse_levelset("x"))) == pytest.approx((2.0, 2.0))
    a1, a2 = region_areas(fit_mesh(m, get_levelset("none")))
    assert (a1, a2) == pytest.approx((4.0, 0.0))


def test_region_area_converges(circle):
    errs = [abs(region_areas(fit_mesh(make_uniform_mesh(n), circle))[1] - math.pi / 4) for n in (16, 32)]
    assert errs[0] / errs[1] >= 3.0


def test_hierarchy_single_level(circle):
    h = build_hierarchy(circle, 8, 0)
    assert len(h.levels) == 1 and len(h.levels[0].hanging) == 0


def test_hierarchy_nested_and_localized(circle):
    h = build_hierarchy(circle, 8, 1)
    F0, F1 = h.levels
    k0, k1 = set(F0.keys.tolist()), set(F1.keys.tolist())
    assert k0 <= k1
    assert F1.n_vertices == fit_mesh(make_uniform_mesh(16), circle).n_vertices
    assert F0.n_vertices < F1.n_vertices
    # fine-sized triangles of F0 only near the interface
    fine = np.isclose(triangle_areas(F0.vertices, F0.tri), (2 / 16) ** 2 / 2)
    dist = np.abs(np.hypot(F0.vertices[:, 0], F0.vertices[:, 1]) - 0.5)
    far = np.all(dist[F0.tri] > 3 * 0.25, axis=1)
    assert not np.any(fine & far)
    # interface elements are identical on both levels
    assert _polys(F0, F0.quad) == _polys(F1, F1.quad)


def test_hierarchy_exhaustive_nesting():
    ls = get_levelset("cardioid")
    h = build_hierarchy(ls, 8, 3)
    for l in range(3):
        assert set(h.levels[l].keys.tolist()) <= set(h.levels[l + 1].keys.tolist())
        a = region_areas(h.levels[l])
        assert a == pytest.approx(region_areas(h.levels[-1]), abs=1e-12)


def test_hierarchy_without_interface():
    h = build_hierarchy(get_levelset("none"), 4, 2)
    for l, F in enumerate(h.levels):
        assert F.n_vertices == (4 * 2 ** l + 1) ** 2 and len(F.quad) == 0
