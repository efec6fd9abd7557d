"""Unfitted grids, interface-fitted mixed meshes and the nested hierarchy.

Structured grids tile [-1, 1]^2 with n x n squares, each split along the
(i+1, j)-(i, j+1) diagonal.  Regular (red) refinement of such a triangle
reproduces the triangles of the grid with 2n squares, so every red triangle
of every level is addressed by ``(level, i, j, t)`` with ``t = 0`` for the
lower-left and ``t = 1`` for the upper-right triangle of square ``(i, j)``.  Vertices
carry integer keys on the finest grid of a hierarchy, which makes vertex
identity across levels exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from .geometry import (
    ENDPOINT_SNAP,
    SCAN_INTERVALS,
    SNAP_TOL,
    LevelSet,
    LevelSetEvaluationError,
    MeshTooCoarse,
    Region,
    bisect_segments,
)


class NonConvexQuad(ValueError):
    pass


class ElementKind(Enum):
    TRI3 = 3
    QUAD4 = 4


@dataclass(frozen=True)
class Element:
    kind: ElementKind
    nodes: tuple[int, ...]
    region: Region
    parent: int


@dataclass
class UnfittedMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    h: float
    boundary: np.ndarray
    keys: np.ndarray | None = None
    key_base: int = 0
    hanging: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    tri_level: np.ndarray | None = None
    min_angle: float = np.pi / 4

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)


@dataclass
class FittedMesh:
    vertices: np.ndarray
    tri: np.ndarray
    tri_region: np.ndarray
    tri_parent: np.ndarray
    quad: np.ndarray
    quad_region: np.ndarray
    quad_parent: np.ndarray
    interface_nodes: np.ndarray
    gamma_h: np.ndarray
    polylines: list
    boundary: np.ndarray
    h: float
    n_original: int
    keys: np.ndarray | None = None
    hanging: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.tri) + len(self.quad)

    def elements(self) -> Iterator[Element]:
        for nodes, reg, par in zip(self.tri, self.tri_region, self.tri_parent):
            yield Element(ElementKind.TRI3, tuple(int(v) for v in nodes), Region(int(reg)), int(par))
        for nodes, reg, par in zip(self.quad, self.quad_region, self.quad_parent):
            yield Element(ElementKind.QUAD4, tuple(int(v) for v in nodes), Region(int(reg)), int(par))


# ----------------------------------------------------------------------------
# structured grids

def _grid_triangles(n: int, scale: int, mask: np.ndarray | None = None):
    """Integer corner coordinates (scaled) of the structured triangles.

    Returns ``(ijt, X, Y)`` where ``X, Y`` have shape (m, 3), counterclockwise.
    """
    if mask is None:
        mask = np.ones((n, n, 2), dtype=bool)
    i, j, t = np.nonzero(mask)
    dx = np.where(t[:, None] == 0, [[0, 1, 0]], [[1, 1, 0]])
    dy = np.where(t[:, None] == 0, [[0, 0, 1]], [[0, 1, 1]])
    X = (i[:, None] + dx) * scale
    Y = (j[:, None] + dy) * scale
    return (i, j, t), X, Y


def make_uniform_mesh(n: int) -> UnfittedMesh:
    """Structured n x n right-triangle grid of [-1, 1]^2 with h = 2/n."""
    if n < 2:
        raise ValueError("need n >= 2")
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    verts = np.column_stack([-1.0 + 2.0 * ii.ravel() / n, -1.0 + 2.0 * jj.ravel() / n])
    _, X, Y = _grid_triangles(n, 1)
    tris = (X * (n + 1) + Y).astype(np.int64)
    keys = np.arange((n + 1) ** 2, dtype=np.int64)
    bnd = (ii.ravel() == 0) | (ii.ravel() == n) | (jj.ravel() == 0) | (jj.ravel() == n)
    return UnfittedMesh(verts, tris, 2.0 / n, bnd, keys=keys, key_base=(n + 1) ** 2,
                        tri_level=np.zeros(len(tris), dtype=np.int64))


def triangle_areas(verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = verts[tris]
    return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))


def polygon_areas(verts: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p = verts[cells]
    x, y = p[..., 0], p[..., 1]
    return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)


# ----------------------------------------------------------------------------
# interface detection

@dataclass
class _CutAnalysis:
    sign: np.ndarray        # per vertex, -1/0/+1
    edges: np.ndarray       # (ne, 2), a < b
    tri_edges: np.ndarray   # (nt, 3), edge k joins local vertices k and k+1
    edge_count: np.ndarray
    crossing: np.ndarray    # (ne,) bool
    t: np.ndarray           # (ne,) root parameter measured from edges[:, 0]
    touching: np.ndarray    # (ne,) crossing edges with an interface vertex at one end


def _mesh_edges(tris: np.ndarray, nv: int):
    loc = np.stack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=1)  # (nt,3,2)
    a = loc.min(axis=2)
    b = loc.max(axis=2)
    code = a.astype(np.int64) * nv + b
    uniq, inv, counts = np.unique(code.ravel(), return_inverse=True, return_counts=True)
    edges = np.column_stack([uniq // nv, uniq % nv])
    return edges, inv.reshape(-1, 3), counts


def _scan_changes(ls: LevelSet, pa: np.ndarray, pb: np.ndarray, sa: np.ndarray, sb: np.ndarray,
                  n_scan: int, chunk: int = 200_000):
    """Count sign changes of phi along segments, sampled on ``n_scan`` intervals.

    Returns (changes, first) where ``first`` is the index of the first
    subinterval that carries a change.
    """
    m = len(pa)
    changes = np.zeros(m, dtype=np.int64)
    first = np.full(m, -1, dtype=np.int64)
    ts = np.linspace(0.0, 1.0, n_scan + 1)[1:-1]
    for s0 in range(0, m, chunk):
        sl = slice(s0, min(m, s0 + chunk))
        a, b = pa[sl], pb[sl]
        pts = a[:, None, :] + ts[None, :, None] * (b - a)[:, None, :]
        vals = np.asarray(ls(pts[..., 0], pts[..., 1]), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise LevelSetEvaluationError(f"level set {ls.name!r} not finite on mesh edges")
        s = np.sign(vals).astype(np.int8)
        s[np.abs(vals) <= SNAP_TOL] = 0
        s = np.concatenate([sa[sl, None], s, sb[sl, None]], axis=1)
        # propagate last nonzero sign forward so zeros do not count as changes
        last = s[:, 0].copy()
        cnt = np.zeros(len(a), dtype=np.int64)
        fst = np.full(len(a), -1, dtype=np.int64)
        for k in range(1, s.shape[1]):
            cur = s[:, k]
            flip = (cur != 0) & (last != 0) & (cur != last)
            cnt += flip
            fst = np.where(flip & (fst < 0), k - 1, fst)
            last = np.where(cur != 0, cur, last)
        changes[sl] = cnt
        first[sl] = fst
    return changes, first


def _analyse_cuts(mesh: UnfittedMesh, ls: LevelSet, snap_tol: float = SNAP_TOL,
                  n_scan: int = SCAN_INTERVALS, strict: bool = True) -> _CutAnalysis:
    """Vertex signs and edge roots.

    With ``strict`` any edge met more than once raises MeshTooCoarse.
    Otherwise such shallow caps are dropped: an edge whose ends share a sign
    is left uncut and a sign-changing edge keeps one root, so the chords
    still form a conforming polyline.
    """
    verts = mesh.vertices
    phi = ls.eval_points(verts)
    if not np.all(np.isfinite(phi)):
        raise LevelSetEvaluationError(f"level set {ls.name!r} not finite at mesh vertices")
    sign = np.sign(phi).astype(np.int8)
    sign[np.abs(phi) <= snap_tol] = 0
    edges, tri_edges, counts = _mesh_edges(mesh.triangles, len(verts))
    pa, pb = verts[edges[:, 0]], verts[edges[:, 1]]
    t = np.full(len(edges), np.nan)

    for _ in range(4):
        sa, sb = sign[edges[:, 0]], sign[edges[:, 1]]
        crossing = (sa * sb) < 0
        idx = np.nonzero(crossing)[0]
        changes, first = _scan_changes(ls, pa[idx], pb[idx], sa[idx], sb[idx], n_scan)
        if strict and np.any(changes > 1):
            bad = idx[changes > 1][0]
            raise MeshTooCoarse(f"edge {tuple(edges[bad])} crosses the interface more than once")
        lo = first / n_scan
        t_idx = bisect_segments(ls, pa[idx], pb[idx], lo, lo + 1.0 / n_scan)
        t[:] = np.nan
        t[idx] = t_idx
        near_a = idx[t_idx < ENDPOINT_SNAP]
        near_b = idx[t_idx > 1.0 - ENDPOINT_SNAP]
        if len(near_a) == 0 and len(near_b) == 0:
            break
        sign[edges[near_a, 0]] = 0
        sign[edges[near_b, 1]] = 0
    else:  # pragma: no cover - snapping settles after one pass in practice
        raise MeshTooCoarse("endpoint snapping did not settle")

    # edges whose endpoints do not bracket a root.  An edge leaving an
    # interface vertex may still cross once inside (near a cusp); it is kept
    # as a crossing edge and the vertex takes a sign locally in each triangle.
    rest = np.nonzero(~crossing)[0]
    ra, rb = sign[edges[rest, 0]], sign[edges[rest, 1]]
    changes, first = _scan_changes(ls, pa[rest], pb[rest], ra, rb, n_scan)
    if strict:
        touch = ((ra == 0) != (rb == 0)) & (changes == 1)
    else:
        touch = ((ra == 0) != (rb == 0)) & (changes % 2 == 1)
    if strict and np.any(changes[~touch] > 0):
        bad = rest[~touch & (changes > 0)][0]
        raise MeshTooCoarse(f"edge {tuple(edges[bad])} is crossed twice by the interface; refine the mesh")
    tidx = rest[touch]
    touching = np.zeros(len(edges), dtype=bool)
    if len(tidx):
        lo = first[touch] / n_scan
        tt = bisect_segments(ls, pa[tidx], pb[tidx], lo, lo + 1.0 / n_scan)
        zero_at_a = ra[touch] == 0
        far = np.where(zero_at_a, tt > 1.0 - ENDPOINT_SNAP, tt < ENDPOINT_SNAP)
        if np.any(far):
            raise MeshTooCoarse("interface passes through both ends of an edge")
        t[tidx] = tt
        crossing = crossing.copy()
        crossing[tidx] = True
        touching[tidx] = True
    return _CutAnalysis(sign, edges, tri_edges, counts, crossing, t, touching)


def _local_signs(cuts: _CutAnalysis, tris: np.ndarray):
    """Vertex signs seen from inside each triangle.

    A zero vertex on an edge that crosses the interface again takes the sign
    of the edge portion next to it.  When that contradicts its other edge the
    interface only grazes the triangle along the touching edge ("fold"); the
    vertex stays 0 and ``fold`` holds the local index of the touching edge.
    """
    orig = cuts.sign[tris]
    s = orig.copy()
    fold = np.full(len(tris), -1, dtype=np.int64)
    touch = cuts.touching[cuts.tri_edges]
    if not np.any(touch):
        return s, fold
    for k in range(3):
        ea, eb = k, (k + 2) % 3
        oa, ob = (k + 1) % 3, (k + 2) % 3
        zk = orig[:, k] == 0
        ta = touch[:, ea] & zk
        tb = touch[:, eb] & zk
        if np.any(ta & tb & (orig[:, oa] != orig[:, ob])):
            raise MeshTooCoarse("interface touches a vertex from two sides in one triangle")
        s[:, k] = np.where(ta, -orig[:, oa], np.where(tb, -orig[:, ob], s[:, k]))
        fa = ta & ~tb & (orig[:, ob] == orig[:, oa])
        fb = tb & ~ta & (orig[:, oa] == orig[:, ob])
        fold = np.where(fa, ea, np.where(fb, eb, fold))
        s[:, k] = np.where(fa | fb, 0, s[:, k])
    return s, fold


def _interface_mask(cuts: _CutAnalysis, tris: np.ndarray) -> np.ndarray:
    s = cuts.sign[tris]
    z = np.count_nonzero(s == 0, axis=1)
    c = np.count_nonzero(cuts.crossing[cuts.tri_edges], axis=1)
    return (c >= 1) | (z >= 2)


def detect_interface_elements(mesh: UnfittedMesh, ls: LevelSet, strict: bool = True) -> np.ndarray:
    """Indices of triangles cut by the interface (sorted)."""
    cuts = _analyse_cuts(mesh, ls, strict=strict)
    return np.nonzero(_interface_mask(cuts, mesh.triangles))[0]


# ----------------------------------------------------------------------------
# fitting

def _chain_polylines(segments: np.ndarray) -> list[np.ndarray]:
    """Chain undirected segments into polylines; closed loops repeat no node."""
    if len(segments) == 0:
        return []
    adj: dict[int, list[int]] = {}
    for k, (a, b) in enumerate(segments.tolist()):
        adj.setdefault(a, []).append(k)
        adj.setdefault(b, []).append(k)
    used = np.zeros(len(segments), dtype=bool)
    lines = []
    # open chains start from degree-1 nodes, then closed loops
    starts = sorted(v for v, ks in adj.items() if len(ks) == 1) + sorted(adj)
    for s in starts:
        if all(used[k] for k in adj[s]):
            continue
        path = [s]
        cur = s
        while True:
            nxt = [k for k in adj[cur] if not used[k]]
            if not nxt:
                break
            k = nxt[0]
            used[k] = True
            a, b = segments[k]
            cur = int(b if a == cur else a)
            if cur == s:
                break
            path.append(cur)
        lines.append(np.array(path, dtype=np.int64))
    return lines


def fit_mesh(mesh: UnfittedMesh, ls: LevelSet, strict: bool = True) -> FittedMesh:
    """Split every cut triangle along its chord of the interface."""
    cuts = _analyse_cuts(mesh, ls, strict=strict)
    tris = mesh.triangles
    nv = mesh.n_vertices
    s, fold = _local_signs(cuts, tris)                    # (nt,3)
    cross = cuts.crossing[cuts.tri_edges]                 # (nt,3)
    both = (s != 0) & (np.roll(s, -1, axis=1) != 0)
    if np.any(both & (cross != (s != np.roll(s, -1, axis=1)))):
        raise MeshTooCoarse("edge crossings inconsistent with vertex signs")
    z = np.count_nonzero(s == 0, axis=1)
    c = np.count_nonzero(cross, axis=1)

    if np.any(z == 3):
        raise MeshTooCoarse("triangle with all vertices on the interface")
    folded = fold >= 0
    quad_cut = (z == 0) & (c == 2) & ~folded
    two_tri = (z == 1) & (c == 1) & ~folded
    odd = (c > 0) & ~quad_cut & ~two_tri & ~folded
    if np.any(odd):
        raise MeshTooCoarse(f"triangle {int(np.nonzero(odd)[0][0])} is not cut by a single chord")

    # new interface nodes, one per crossing edge
    cedges = np.nonzero(cuts.crossing)[0]
    node_of_edge = np.full(len(cuts.edges), -1, dtype=np.int64)
    node_of_edge[cedges] = nv + np.arange(len(cedges))
    ea, eb = cuts.edges[cedges, 0], cuts.edges[cedges, 1]
    tt = cuts.t[cedges][:, None]
    new_pts = (1.0 - tt) * mesh.vertices[ea] + tt * mesh.vertices[eb]
    verts = np.vstack([mesh.vertices, new_pts])
    on_bnd = (cuts.edge_count[cedges] == 1) & mesh.boundary[ea] & mesh.boundary[eb]
    boundary = np.concatenate([mesh.boundary, on_bnd])
    keys = None
    if mesh.keys is not None:
        ka, kb = mesh.keys[ea], mesh.keys[eb]
        lo_k, hi_k = np.minimum(ka, kb), np.maximum(ka, kb)
        keys = np.concatenate([mesh.keys, mesh.key_base * (1 + lo_k) + hi_k])

    sign_region = lambda sg: np.where(sg > 0, int(Region.REGION1), int(Region.REGION2))

    # untouched triangles
    keep = ~(quad_cut | two_tri | folded)
    kt = np.nonzero(keep)[0]
    ks = s[kt]
    ref_sign = np.where(ks[:, 0] != 0, ks[:, 0], np.where(ks[:, 1] != 0, ks[:, 1], ks[:, 2]))
    out_tri = [tris[kt]]
    out_tri_reg = [sign_region(ref_sign)]
    out_tri_par = [kt]

    # triangle + quadrilateral
    qt = np.nonzero(quad_cut)[0]
    qs = s[qt]
    lone = np.where(qs[:, 0] != qs[:, 1],
                    np.where(qs[:, 0] != qs[:, 2], 0, 1), 2)
    r = np.arange(len(qt))
    v0 = tris[qt, lone]
    v1 = tris[qt, (lone + 1) % 3]
    v2 = tris[qt, (lone + 2) % 3]
    P = node_of_edge[cuts.tri_edges[qt, lone]]
    Q = node_of_edge[cuts.tri_edges[qt, (lone + 2) % 3]]
    if np.any(P < 0) or np.any(Q < 0):  # pragma: no cover - guarded by the case split
        raise MeshTooCoarse("inconsistent edge crossings")
    out_tri.append(np.column_stack([v0, P, Q]))
    out_tri_reg.append(sign_region(qs[r, lone]))
    out_tri_par.append(qt)
    quads = np.column_stack([P, v1, v2, Q])
    quad_reg = sign_region(qs[r, (lone + 1) % 3])
    seg = [np.column_stack([P, Q])]

    # two triangles through a vertex
    wt = np.nonzero(two_tri)[0]
    ws = s[wt]
    zero = np.argmax(ws == 0, axis=1)
    r = np.arange(len(wt))
    w0 = tris[wt, zero]
    w1 = tris[wt, (zero + 1) % 3]
    w2 = tris[wt, (zero + 2) % 3]
    Pw = node_of_edge[cuts.tri_edges[wt, (zero + 1) % 3]]
    if np.any(Pw < 0):
        raise MeshTooCoarse("vertex cut without opposite crossing")
    out_tri += [np.column_stack([w0, w1, Pw]), np.column_stack([w0, Pw, w2])]
    out_tri_reg += [sign_region(ws[r, (zero + 1) % 3]), sign_region(ws[r, (zero + 2) % 3])]
    out_tri_par += [wt, wt]
    seg.append(np.column_stack([w0, Pw]))

    # interface grazing a triangle along part of an edge: split at the node
    ft = np.nonzero(folded)[0]
    if len(ft):
        e = fold[ft]
        r = np.arange(len(ft))
        Pf = node_of_edge[cuts.tri_edges[ft, e]]
        a0 = tris[ft, e]
        a1 = tris[ft, (e + 1) % 3]
        a2 = tris[ft, (e + 2) % 3]
        fs = s[ft]
        reg = sign_region(np.where(fs[r, (e + 2) % 3] != 0, fs[r, (e + 2) % 3], fs[r, (e + 1) % 3]))
        out_tri += [np.column_stack([a0, Pf, a2]), np.column_stack([Pf, a1, a2])]
        out_tri_reg += [reg, reg]
        out_tri_par += [ft, ft]
        zero_end = np.where(fs[r, e] == 0, a0, a1)
        seg.append(np.column_stack([zero_end, Pf]))

    # chords lying on an edge between two interface vertices
    et = np.nonzero((z == 2) & keep)[0]
    if len(et):
        es = s[et]
        nz = np.argmax(es != 0, axis=1)
        seg.append(np.column_stack([tris[et, (nz + 1) % 3], tris[et, (nz + 2) % 3]]))

    segments = np.vstack(seg) if seg else np.zeros((0, 2), dtype=np.int64)
    segments = np.unique(np.sort(segments, axis=1), axis=0)

    tri_all = np.vstack(out_tri).astype(np.int64)
    areas = triangle_areas(verts, tri_all)
    if np.any(areas <= 0):
        raise MeshTooCoarse("fitted triangle with non-positive area")
    if len(quads):
        _assert_convex(verts, quads)
    polylines = _chain_polylines(segments)
    iface = np.concatenate(polylines) if polylines else np.zeros(0, dtype=np.int64)
    return FittedMesh(
        vertices=verts, tri=tri_all,
        tri_region=np.concatenate(out_tri_reg).astype(np.int8),
        tri_parent=np.concatenate(out_tri_par).astype(np.int64),
        quad=quads.astype(np.int64).reshape(-1, 4), quad_region=quad_reg.astype(np.int8),
        quad_parent=qt.astype(np.int64), interface_nodes=iface, gamma_h=segments,
        polylines=polylines, boundary=boundary, h=mesh.h, n_original=nv, keys=keys,
        hanging=mesh.hanging.copy(),
    )


def _assert_convex(verts: np.ndarray, quads: np.ndarray) -> None:
    p = verts[quads]
    e = np.roll(p, -1, axis=1) - p
    cross = e[:, :, 0] * np.roll(e, -1, axis=1)[:, :, 1] - e[:, :, 1] * np.roll(e, -1, axis=1)[:, :, 0]
    if np.any(cross <= 0):
        bad = int(np.nonzero(np.any(cross <= 0, axis=1))[0][0])
        raise NonConvexQuad(f"quadrilateral {bad} is not strictly convex")


def region_areas(mesh: FittedMesh) -> tuple[float, float]:
    ta = triangle_areas(mesh.vertices, mesh.tri)
    qa = polygon_areas(mesh.vertices, mesh.quad) if len(mesh.quad) else np.zeros(0)
    a1 = ta[mesh.tri_region == Region.REGION1].sum() + qa[mesh.quad_region == Region.REGION1].sum()
    a2 = ta[mesh.tri_region == Region.REGION2].sum() + qa[mesh.quad_region == Region.REGION2].sum()
    return float(a1), float(a2)


# ----------------------------------------------------------------------------
# hierarchy

def _coarsen_mask(fine: np.ndarray) -> np.ndarray:
    """Mark every parent of a marked triangle one level up."""
    n = fine.shape[0] // 2
    out = np.zeros((n, n, 2), dtype=bool)
    a, b, t = np.nonzero(fine)
    pa, pb = a % 2, b % 2
    # corner children keep the parent's type, the middle child flips it
    pt = np.where((pa == 0) & (pb == 0), 0, np.where((pa == 1) & (pb == 1), 1, t))
    out[a // 2, b // 2, pt] = True
    return out


def _children_mask(mask: np.ndarray) -> np.ndarray:
    n = mask.shape[0]
    out = np.zeros((2 * n, 2 * n, 2), dtype=bool)
    lo = mask[:, :, 0]
    up = mask[:, :, 1]
    out[0::2, 0::2, 0] |= lo
    out[1::2, 0::2, 0] |= lo
    out[0::2, 1::2, 0] |= lo
    out[0::2, 0::2, 1] |= lo
    out[1::2, 0::2, 1] |= up
    out[1::2, 1::2, 1] |= up
    out[0::2, 1::2, 1] |= up
    out[1::2, 1::2, 0] |= up
    return out


def _vertex_ring(mask: np.ndarray) -> np.ndarray:
    """Triangles sharing at least one vertex with a marked triangle."""
    n = mask.shape[0]
    lo, up = mask[:, :, 0], mask[:, :, 1]
    mv = np.zeros((n + 1, n + 1), dtype=bool)
    mv[:-1, :-1] |= lo
    mv[1:, :-1] |= lo | up
    mv[:-1, 1:] |= lo | up
    mv[1:, 1:] |= up
    ring = np.zeros_like(mask)
    ring[:, :, 0] = mv[:-1, :-1] | mv[1:, :-1] | mv[:-1, 1:]
    ring[:, :, 1] = mv[1:, :-1] | mv[1:, 1:] | mv[:-1, 1:]
    return ring


def _triangles_containing(X: np.ndarray, Y: np.ndarray, n: int, scale: int):
    """Candidate grid triangles (i, j, t, inside) around integer points."""
    cands = []
    for di in (0, -1):
        for dj in (0, -1):
            i = np.clip(X // scale + di, 0, n - 1)
            j = np.clip(Y // scale + dj, 0, n - 1)
            lx = X - i * scale
            ly = Y - j * scale
            box = (lx >= 0) & (lx <= scale) & (ly >= 0) & (ly <= scale)
            cands.append((i, j, np.zeros_like(i), box & (lx + ly <= scale)))
            cands.append((i, j, np.ones_like(i), box & (lx + ly >= scale)))
    return cands


@dataclass
class MeshHierarchy:
    """Nested fitted meshes built by local regular refinement near the interface.

    ``interface[k]`` / ``ring[k]`` are masks over the grid triangles of level
    k; ``leaves[l][k]`` marks the level-k triangles that are leaves of the
    refinement forest underlying ``levels[l]``.
    """

    levels: list[FittedMesh]
    n0: int
    L: int
    interface: list[np.ndarray]
    ring: list[np.ndarray]
    leaves: list[dict]
    levelset: LevelSet
    strict: bool = True

    @property
    def N(self) -> int:
        return self.n0 * 2 ** self.L

    @property
    def sizes(self) -> list[float]:
        return [2.0 / (self.n0 * 2 ** l) for l in range(self.L + 1)]

    def grid_coords(self, keys: np.ndarray):
        """Integer fine-grid coordinates of grid vertices (-1 for interface nodes)."""
        base = (self.N + 1) ** 2
        keys = np.asarray(keys)
        grid = keys < base
        X = np.where(grid, keys // (self.N + 1), -1)
        Y = np.where(grid, keys % (self.N + 1), -1)
        return X, Y, grid

    def in_ring_region(self, k: int, keys: np.ndarray) -> np.ndarray:
        """Whether vertices lie in the closed region covered by ``ring[k]``.

        Interface nodes always lie inside it.
        """
        X, Y, grid = self.grid_coords(keys)
        out = ~grid
        n = self.n0 * 2 ** k
        scale = 2 ** (self.L - k)
        Xg, Yg = X[grid], Y[grid]
        hit = np.zeros(len(Xg), dtype=bool)
        for i, j, t, inside in _triangles_containing(Xg, Yg, n, scale):
            hit |= inside & self.ring[k][i, j, t]
        out = out.copy()
        out[grid] = hit
        return out

    def support_in_ring_region(self, k: int, keys: np.ndarray) -> np.ndarray:
        """Whether every level-(k+1) triangle around a vertex lies in ``ring[k]``.

        Only meaningful for vertices of the level-(k+1) grid.
        """
        X, Y, grid = self.grid_coords(keys)
        out = ~grid
        nf = self.n0 * 2 ** (k + 1)
        scale = 2 ** (self.L - k - 1)
        fine_in = _children_mask(self.ring[k])
        Xg, Yg = X[grid], Y[grid]
        ok = np.ones(len(Xg), dtype=bool)
        for i, j, t, inside in _triangles_containing(Xg, Yg, nf, scale):
            ok &= ~inside | fine_in[i, j, t]
        # boundary vertices have supports cut by the domain; they carry no dof anyway
        out = out.copy()
        out[grid] = ok
        return out

    def locate_leaf(self, l: int, X: np.ndarray, Y: np.ndarray):
        """Find a leaf triangle of ``levels[l]``'s forest containing each point.

        Returns (level, i, j, t) arrays.
        """
        m = len(X)
        found = np.zeros(m, dtype=bool)
        lev = np.full(m, -1, dtype=np.int64)
        I = np.zeros(m, dtype=np.int64)
        J = np.zeros(m, dtype=np.int64)
        T = np.zeros(m, dtype=np.int64)
        for k in range(self.L, l - 1, -1):
            n = self.n0 * 2 ** k
            scale = 2 ** (self.L - k)
            leaf = self.leaves[l][k]
            for i, j, t, inside in _triangles_containing(X, Y, n, scale):
                take = ~found & inside & leaf[i, j, t]
                lev[take], I[take], J[take], T[take] = k, i[take], j[take], t[take]
                found |= take
        if not np.all(found):
            raise RuntimeError("point outside every leaf triangle")
        return lev, I, J, T


def _leaf_mesh(leaves: dict, n0: int, L: int) -> UnfittedMesh:
    N = n0 * 2 ** L
    Xs, Ys, lv = [], [], []
    for k in sorted(leaves):
        n = n0 * 2 ** k
        _, X, Y = _grid_triangles(n, 2 ** (L - k), leaves[k])
        Xs.append(X)
        Ys.append(Y)
        lv.append(np.full(len(X), k, dtype=np.int64))
    X = np.vstack(Xs)
    Y = np.vstack(Ys)
    tri_level = np.concatenate(lv)
    tkeys = X * (N + 1) + Y
    keys, inv = np.unique(tkeys.ravel(), return_inverse=True)
    tris = inv.reshape(-1, 3).astype(np.int64)
    vx, vy = keys // (N + 1), keys % (N + 1)
    verts = np.column_stack([-1.0 + 2.0 * vx / N, -1.0 + 2.0 * vy / N])
    bnd = (vx == 0) | (vx == N) | (vy == 0) | (vy == N)

    # hanging midpoints on edges of coarse leaves
    hang = []
    coarse = tri_level < L
    for e0, e1 in ((0, 1), (1, 2), (2, 0)):
        xa, ya = X[coarse, e0], Y[coarse, e0]
        xb, yb = X[coarse, e1], Y[coarse, e1]
        mk = ((xa + xb) // 2) * (N + 1) + (ya + yb) // 2
        pos = np.searchsorted(keys, mk)
        pos = np.clip(pos, 0, len(keys) - 1)
        hit = keys[pos] == mk
        if np.any(hit):
            a = tris[coarse, e0][hit]
            b = tris[coarse, e1][hit]
            hang.append(np.column_stack([pos[hit], np.minimum(a, b), np.maximum(a, b)]))
            # 1-irregularity: quarter points must not exist
            q1 = ((3 * xa + xb) // 4) * (N + 1) + (3 * ya + yb) // 4
            deep = (tri_level[coarse] <= L - 2) & hit
            pq = np.clip(np.searchsorted(keys, q1[deep]), 0, len(keys) - 1)
            if np.any(keys[pq] == q1[deep]):
                raise RuntimeError("refinement forest is not 1-irregular")
    hanging = np.unique(np.vstack(hang), axis=0) if hang else np.zeros((0, 3), dtype=np.int64)
    h = 2.0 / (n0 * 2 ** min(leaves))
    return UnfittedMesh(verts, tris, h, bnd, keys=keys.astype(np.int64), key_base=(N + 1) ** 2,
                        hanging=hanging.astype(np.int64), tri_level=tri_level)


def build_hierarchy(ls: LevelSet, h0_n: int, L: int, strict: bool = True) -> MeshHierarchy:
    """Nested interface-adaptive fitted meshes F_0, ..., F_L.

    F_l starts from the uniform grid of level l and is refined ``L - l``
    times: each round regularly subdivides the interface triangles of the
    current finest level together with every triangle sharing a vertex with
    one of them.  Hanging midpoints are kept as constrained nodes, so the
    finite element spaces on consecutive levels are nested.
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    N = h0_n * 2 ** L
    fine = make_uniform_mesh(N)
    cut = _interface_mask(_analyse_cuts(fine, ls, strict=strict), fine.triangles)
    interface = [None] * (L + 1)
    interface[L] = cut.reshape(N, N, 2)
    for k in range(L - 1, -1, -1):
        interface[k] = _coarsen_mask(interface[k + 1])
    ring = [_vertex_ring(m) for m in interface]

    leaves_all = []
    levels = []
    for l in range(L + 1):
        n = h0_n * 2 ** l
        exists = np.ones((n, n, 2), dtype=bool)
        leaves = {}
        for k in range(l, L):
            if np.any(ring[k] & ~exists):
                raise RuntimeError(f"refinement zone of level {k} leaves the refined region")
            refine = ring[k] & exists
            leaves[k] = exists & ~refine
            exists = _children_mask(refine)
        leaves[L] = exists
        leaves_all.append(leaves)
        levels.append(fit_mesh(_leaf_mesh(leaves, h0_n, L), ls, strict=strict))
    return MeshHierarchy(levels, h0_n, L, interface, ring, leaves_all, ls, strict)
