from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifmg.geometry import (LevelSetEvaluationError, MeshTooCoarse, Region, builtin_levelsets, edge_intersections,
                           get_levelset, parse_levelset, side)


def test_side_examples(circle):
    assert side(circle, (0.0, 0.0)) == Region.REGION2
    assert side(circle, (1.0, 1.0)) == Region.REGION1
    assert side(circle, (0.5, 0.0), snap_tol=1e-12) == Region.ON_INTERFACE


def test_edge_intersection_midpoint(circle):
    out = edge_intersections(circle, (0.4, 0.0), (0.6, 0.0))
    assert len(out) == 1
    t, p = out[0]
    assert t == pytest.approx(0.5, abs=1e-12)
    assert p.x == pytest.approx(0.5, abs=1e-12) and p.y == pytest.approx(0.0, abs=1e-15)


def test_edge_intersection_none(circle):
    assert edge_intersections(circle, (0.6, 0.6), (0.8, 0.8)) == []


def test_edge_intersection_vertical(circle):
    (t, p), = edge_intersections(circle, (0.3, 0.0), (0.3, 0.5))
    assert t == pytest.approx(0.8, abs=1e-11)
    assert p.y == pytest.approx(0.4, abs=1e-11)


def test_edge_intersection_snaps_to_endpoint(circle):
    (t, p), = edge_intersections(circle, (0.5 - 1e-11, 0.0), (0.9, 0.0))
    assert t == 0.0


def test_degenerate_edge_rejected(circle):
    with pytest.raises(ValueError):
        edge_intersections(circle, (0.1, 0.1), (0.1, 0.1))


def test_too_many_crossings():
    wavy = parse_levelset("sin(40*x)")
    with pytest.raises(MeshTooCoarse):
        edge_intersections(wavy, (-1.0, 0.0), (1.0, 0.0), n_scan=64)


def test_builtin_values():
    reg = builtin_levelsets()
    assert {"circle", "cardioid", "fivestar-circle"} <= set(reg)
    assert get_levelset("circle", r=0.5)(0.5, 0.0) == 0.0
    assert get_levelset("cardioid")(-0.5, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert get_levelset("fivestar-circle")(0.8, 0.0) == pytest.approx(-0.113841, abs=1e-12)


def test_unknown_levelset():
    with pytest.raises(KeyError):
        get_levelset("hexagon")


def test_parse_expression():
    ls = parse_levelset("x^2 + y^2 - r^2", r=0.25)
    assert ls(0.25, 0.0) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        parse_levelset("__import__('os')")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_levelset():
    ls = parse_levelset("1/x")
    with pytest.raises(LevelSetEvaluationError):
        edge_intersections(ls, (0.0, 0.0), (1.0, 0.0))


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(0, 2 * math.pi), st.floats(0.05, 0.4))
def test_sign_change_yields_root(cx, cy, ang, length):
    ls = get_levelset("circle", r=0.5)
    a = np.array([cx, cy])
    b = a + length * np.array([math.cos(ang), math.sin(ang)])
    fa, fb = ls(*a), ls(*b)
    out = edge_intersections(ls, a, b)
    ts = [t for t, _ in out]
    assert ts == sorted(ts) and len(set(ts)) == len(ts)
    if fa * fb < 0:
        assert out
        for t, p in out:
            # the gradient of the circle level set is bounded by 2 * |p| <= 4
            assert abs(ls(p.x, p.y)) < 4 * 1e-9 * length + 1e-14


@settings(max_examples=60, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_side_stable_under_tiny_perturbation(x, y):
    ls = get_levelset("circle", r=0.5)
    s = side(ls, (x, y))
    if abs(ls(x, y)) > 1e-8:
        for dx, dy in ((1e-13, 0), (0, -1e-13), (1e-13, 1e-13)):
            assert side(ls, (x + dx, y + dy)) == s
