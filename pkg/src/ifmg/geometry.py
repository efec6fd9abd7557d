"""Level-set interfaces and interface/edge intersection."""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, NamedTuple

import numpy as np

# Bracketing scan resolution and bisection tolerance used by every root locator.
SCAN_INTERVALS = 8
BISECT_RTOL = 1e-12
ENDPOINT_SNAP = 1e-9
SNAP_TOL = 1e-14


class MeshTooCoarse(ValueError):
    """The interface crosses a mesh entity more often than the fitter allows."""


class LevelSetEvaluationError(ValueError):
    pass


class Point2(NamedTuple):
    x: float
    y: float


class Region(IntEnum):
    ON_INTERFACE = 0
    REGION1 = 1  # phi > 0
    REGION2 = 2  # phi < 0


@dataclass(frozen=True)
class LevelSet:
    """Scalar field whose zero contour is the interface.

    ``func(x, y, **params)`` must accept numpy arrays and broadcast.
    """

    name: str
    func: Callable[..., np.ndarray] = field(repr=False)
    params: dict = field(default_factory=dict)

    def __call__(self, x, y):
        return self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float), **self.params)

    def eval_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.asarray(self(pts[..., 0], pts[..., 1]), dtype=float)

    def with_params(self, **params) -> "LevelSet":
        merged = dict(self.params)
        merged.update(params)
        return LevelSet(self.name, self.func, merged)


def side(ls: LevelSet, p, snap_tol: float = SNAP_TOL) -> Region:
    val = float(ls(p[0], p[1]))
    if not math.isfinite(val):
        raise LevelSetEvaluationError(f"level set {ls.name!r} is not finite at {tuple(p)}")
    if abs(val) <= snap_tol:
        return Region.ON_INTERFACE
    return Region.REGION1 if val > 0 else Region.REGION2


def _sign(vals: np.ndarray, snap_tol: float) -> np.ndarray:
    s = np.sign(vals).astype(np.int8)
    s[np.abs(vals) <= snap_tol] = 0
    return s


def bisect_segments(ls: LevelSet, a: np.ndarray, b: np.ndarray, t0: np.ndarray, t1: np.ndarray,
                    rtol: float = BISECT_RTOL) -> np.ndarray:
    """Vectorised bisection of phi((1-t)a + t b) on brackets [t0, t1].

    Each bracket must carry a sign change. Returns the bracket midpoints once
    every bracket is narrower than ``rtol`` (in the segment parameter).
    """
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    lo = np.array(t0, dtype=float, copy=True).reshape(-1)
    hi = np.array(t1, dtype=float, copy=True).reshape(-1)
    d = b - a

    def phi(t):
        p = a + t[:, None] * d
        return ls(p[:, 0], p[:, 1])

    f_lo = phi(lo)
    n_iter = max(1, int(math.ceil(math.log2(max(np.max(hi - lo, initial=1.0), rtol) / rtol))))
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        f_mid = phi(mid)
        left = np.sign(f_mid) == np.sign(f_lo)
        exact = f_mid == 0.0
        lo = np.where(left & ~exact, mid, lo)
        f_lo = np.where(left & ~exact, f_mid, f_lo)
        hi = np.where(left & ~exact, hi, mid)
        lo = np.where(exact, mid, lo)
    return 0.5 * (lo + hi)


def edge_intersections(ls: LevelSet, a, b, tol: float = BISECT_RTOL,
                       n_scan: int = SCAN_INTERVALS, snap: float = ENDPOINT_SNAP,
                       snap_tol: float = SNAP_TOL) -> list[tuple[float, Point2]]:
    """Roots of t -> phi((1-t)a + t b) on [0, 1], sorted by t.

    Roots are bracketed on ``n_scan`` equal subintervals and refined by
    bisection. Roots within ``snap`` of an endpoint are reported at 0 or 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.allclose(a, b, rtol=0.0, atol=0.0):
        raise ValueError("degenerate edge: a == b")
    ts = np.linspace(0.0, 1.0, n_scan + 1)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    vals = np.asarray(ls(pts[:, 0], pts[:, 1]), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise LevelSetEvaluationError(f"level set {ls.name!r} not finite along edge")
    s = _sign(vals, snap_tol)

    roots: list[float] = [float(t) for t, si in zip(ts, s) if si == 0]
    lo, hi = [], []
    for i in range(n_scan):
        if s[i] * s[i + 1] < 0:
            lo.append(ts[i])
            hi.append(ts[i + 1])
    if lo:
        m = len(lo)
        found = bisect_segments(ls, np.repeat(a[None], m, 0), np.repeat(b[None], m, 0),
                                np.array(lo), np.array(hi), rtol=tol)
        roots.extend(float(t) for t in found)
    roots.sort()
    snapped: list[float] = []
    for t in roots:
        if t < snap:
            t = 0.0
        elif t > 1.0 - snap:
            t = 1.0
        if snapped and abs(t - snapped[-1]) <= tol:
            continue
        snapped.append(t)
    if len(snapped) > 2:
        raise MeshTooCoarse(f"{len(snapped)} interface crossings on edge {tuple(a)}-{tuple(b)}")
    return [(t, Point2(*(a + t * (b - a)))) for t in snapped]


# ----------------------------------------------------------------------------
# builtin interfaces

def _circle(x, y, r=0.5, cx=0.0, cy=0.0):
    return (x - cx) ** 2 + (y - cy) ** 2 - r * r


def _cardioid(x, y):
    X = x + 0.5
    rr = X * X + y * y
    return (rr - 0.5 * X) ** 2 - 0.25 * rr


def _star_angle(x, y):
    return np.arctan2(y, x + 0.5)


def _fivestar_circle(x, y):
    # rho are squared distances, exactly as the formula is printed
    rho1 = (x + 0.5) ** 2 + y ** 2
    rho2 = (x - 0.5) ** 2 + y ** 2
    theta = _star_angle(x, y)
    return (rho1 - 0.3 - 0.09 * np.sin(5.0 * theta)) * (rho2 ** 2 - 0.09)


def _fivestar_circle_radial(x, y):
    # rho are Euclidean distances: star r = 0.3 + 0.09 sin(5 theta), circle r = 0.3
    rho1 = np.sqrt((x + 0.5) ** 2 + y ** 2)
    rho2 = np.sqrt((x - 0.5) ** 2 + y ** 2)
    theta = _star_angle(x, y)
    return (rho1 - 0.3 - 0.09 * np.sin(5.0 * theta)) * (rho2 ** 2 - 0.09)


def _halfplane(x, y, x0=0.0):
    return x - x0


def _empty(x, y, c=1.0):
    return np.full(np.broadcast(x, y).shape, float(c))


_BUILTINS: dict[str, tuple[Callable, dict]] = {
    "circle": (_circle, {"r": 0.5}),
    "cardioid": (_cardioid, {}),
    "fivestar-circle": (_fivestar_circle, {}),
    "fivestar-circle-radial": (_fivestar_circle_radial, {}),
    "line": (_halfplane, {"x0": 0.0}),
    "none": (_empty, {"c": 1.0}),
}


def builtin_levelsets() -> dict[str, LevelSet]:
    return {name: LevelSet(name, fn, dict(p)) for name, (fn, p) in _BUILTINS.items()}


def get_levelset(name: str, **params) -> LevelSet:
    try:
        fn, defaults = _BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown level set {name!r}; known: {sorted(_BUILTINS)}") from None
    merged = dict(defaults)
    merged.update({k: v for k, v in params.items() if v is not None})
    return LevelSet(name, fn, merged)


# ----------------------------------------------------------------------------
# user expressions

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "atan2": np.arctan2, "abs": np.abs, "tanh": np.tanh,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def _check_expr(node: ast.AST, names: set[str]) -> None:
    for sub in ast.walk(node):
        if isinstance(sub, (ast.Expression, ast.Load, ast.operator, ast.unaryop)):
            if isinstance(sub, ast.operator) and not isinstance(sub, _BINOPS):
                raise ValueError(f"operator {type(sub).__name__} not allowed")
            continue
        if isinstance(sub, (ast.BinOp, ast.UnaryOp)):
            continue
        if isinstance(sub, ast.Constant) and isinstance(sub.value, (int, float)):
            continue
        if isinstance(sub, ast.Name):
            if sub.id not in names and sub.id not in _FUNCS and sub.id not in _CONSTS:
                raise ValueError(f"unknown name {sub.id!r} in expression")
            continue
        if isinstance(sub, ast.Call):
            if not isinstance(sub.func, ast.Name) or sub.func.id not in _FUNCS or sub.keywords:
                raise ValueError("only calls to sin, cos, tan, exp, log, sqrt, atan2, abs, tanh")
            continue
        raise ValueError(f"construct {type(sub).__name__} not allowed in expression")


def parse_levelset(expr: str, name: str | None = None, **params) -> LevelSet:
    """Build a level set from an expression in ``x``, ``y`` (``^`` means power)."""
    tree = ast.parse(expr.replace("^", "**"), mode="eval")
    _check_expr(tree, {"x", "y", *params})
    code = compile(tree, "<levelset>", "eval")

    def fn(x, y, **kw):
        env = dict(_FUNCS)
        env.update(_CONSTS)
        env.update(kw)
        env["x"], env["y"] = x, y
        out = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x, y).shape).copy()

    return LevelSet(name or expr, fn, dict(params))
