"""P1/Q1 finite elements on fitted meshes and the discrete system with jumps.

The solution is written as ``u_h = ubar + z`` where ``ubar`` is continuous
and ``z`` is a lifting of the prescribed jump q that lives only on Region2
elements.  ``z`` is stored as an *offset* at interface nodes, read by the
Region2 elements only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .geometry import Region
from .meshgen import FittedMesh


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)


def gauss_square(n: int) -> QuadRule:
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return QuadRule(np.column_stack([X.ravel(), Y.ravel()]), W.ravel())


def gauss_line(n: int) -> QuadRule:
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadRule(0.5 * (x + 1.0), 0.5 * w)


TRI_DEG2 = QuadRule(np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]), np.full(3, 1 / 6))


def _dunavant4() -> QuadRule:
    a, wa = 0.445948490915965, 0.223381589678011
    b, wb = 0.091576213509771, 0.109951743655322
    pts = [[a, a], [1 - 2 * a, a], [a, 1 - 2 * a], [b, b], [1 - 2 * b, b], [b, 1 - 2 * b]]
    return QuadRule(np.array(pts), 0.5 * np.array([wa] * 3 + [wb] * 3))


TRI_DEG4 = _dunavant4()
SQ_2x2 = gauss_square(2)
SQ_3x3 = gauss_square(3)
LINE_3 = gauss_line(3)


# ----------------------------------------------------------------------------
# shape functions

def q1_shape(ref: np.ndarray):
    """Bilinear basis on [0,1]^2 and its reference gradient, corners CCW from (0,0)."""
    ref = np.atleast_2d(ref)
    x, y = ref[:, 0], ref[:, 1]
    phi = np.column_stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y])
    dphi = np.stack([
        np.column_stack([-(1 - y), -(1 - x)]),
        np.column_stack([1 - y, -x]),
        np.column_stack([y, x]),
        np.column_stack([-y, 1 - x]),
    ], axis=1)
    return phi, dphi


def q1_map(q, ref) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    phi, _ = q1_shape(np.asarray(ref, dtype=float))
    out = phi @ q
    return out[0] if np.ndim(ref) == 1 else out


def q1_geometry(X: np.ndarray, rule: QuadRule):
    """Physical points, |det J| and basis gradients for quads X (m, 4, 2)."""
    phi, dphi = q1_shape(rule.points)
    pts = np.einsum("qi,mia->mqa", phi, X)
    J = np.einsum("mia,qib->mqab", X, dphi)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        raise ValueError("non-positive Jacobian in quadrilateral element")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    grad = np.einsum("mqba,qib->mqia", inv, dphi)
    return pts, det, grad, phi


def p1_geometry(X: np.ndarray):
    """Area and constant barycentric gradients for triangles X (m, 3, 2)."""
    x, y = X[..., 0], X[..., 1]
    d2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    if np.any(d2 <= 0):
        raise ValueError("degenerate or clockwise triangle")
    g = np.empty(X.shape)
    g[:, 0] = np.column_stack([y[:, 1] - y[:, 2], x[:, 2] - x[:, 1]])
    g[:, 1] = np.column_stack([y[:, 2] - y[:, 0], x[:, 0] - x[:, 2]])
    g[:, 2] = np.column_stack([y[:, 0] - y[:, 1], x[:, 1] - x[:, 0]])
    g /= d2[:, None, None]
    return 0.5 * d2, g


def tri_stiffness(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    area, g = p1_geometry(X)
    return (beta * area)[:, None, None] * np.einsum("mia,mja->mij", g, g)


def quad_stiffness(X: np.ndarray, beta: np.ndarray, rule: QuadRule = SQ_2x2) -> np.ndarray:
    _, det, grad, _ = q1_geometry(X, rule)
    return beta[:, None, None] * np.einsum("q,mq,mqia,mqja->mij", rule.weights, det, grad, grad)


def local_stiffness_tri(t, beta: float = 1.0) -> np.ndarray:
    return tri_stiffness(np.asarray(t, dtype=float)[None], np.array([beta]))[0]


def local_stiffness_quad(q, beta: float = 1.0, rule: QuadRule = SQ_2x2) -> np.ndarray:
    return quad_stiffness(np.asarray(q, dtype=float)[None], np.array([beta]), rule)[0]


# ----------------------------------------------------------------------------
# problem data and fields

Func = Callable[..., np.ndarray]


def _zero(x, y, *_):
    return np.zeros(np.broadcast(x, y).shape)


@dataclass
class ProblemData:
    """Coefficients and data; ``f(x, y, region)``, ``q(x, y)``, ``g(x, y)``.

    ``u_bc(x, y, region)`` gives Dirichlet values (zero by default).
    """

    beta1: float = 1.0
    beta2: float = 1.0
    f: Func = _zero
    q: Func = _zero
    g: Func = _zero
    g_mode: str = "nodal"
    u_bc: Func | None = None

    def __post_init__(self):
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise ValueError("beta1 and beta2 must be positive")
        if self.g_mode not in ("nodal", "exact"):
            raise ValueError("g_mode must be 'nodal' or 'exact'")

    def beta(self, region: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(region) == Region.REGION1, self.beta1, self.beta2)


@dataclass
class DiscreteField:
    """Nodal values on a fitted mesh plus a Region2-only offset layer."""

    mesh: FittedMesh
    values: np.ndarray
    offset: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.offset is None:
            self.offset = np.zeros_like(self.values)
        if self.values.shape != (self.mesh.n_vertices,) or self.offset.shape != self.values.shape:
            raise ValueError("field size does not match the mesh")

    def side_values(self, region: int) -> np.ndarray:
        return self.values + (self.offset if region == Region.REGION2 else 0.0)

    def jump_at(self, nodes) -> np.ndarray:
        nodes = np.asarray(nodes)
        return self.side_values(Region.REGION1)[nodes] - self.side_values(Region.REGION2)[nodes]


@dataclass
class DofMap:
    """Dofs are vertices that are neither on the boundary nor hanging.

    ``C`` maps dof vectors to vertex values, including hanging-node
    interpolation; Dirichlet and hanging vertices carry no dof.
    """

    vertex_dof: np.ndarray
    dirichlet: np.ndarray
    n_dofs: int
    C: sp.csr_matrix
    interface_dofs: np.ndarray
    hanging: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    @classmethod
    def build(cls, mesh: FittedMesh) -> "DofMap":
        nv = mesh.n_vertices
        hang = mesh.hanging
        is_hang = np.zeros(nv, dtype=bool)
        is_hang[hang[:, 0]] = True
        free = ~mesh.boundary & ~is_hang
        vdof = np.full(nv, -1, dtype=np.int64)
        vdof[free] = np.arange(int(free.sum()))
        n = int(free.sum())
        E = sp.csr_matrix((np.ones(n), (np.nonzero(free)[0], np.arange(n))), shape=(nv, n))
        C = _resolve_hanging(E, hang, nv)
        idofs = vdof[mesh.interface_nodes]
        return cls(vdof, np.nonzero(mesh.boundary)[0], n, C, np.unique(idofs[idofs >= 0]), hang)

    def expand(self, x: np.ndarray, lift: np.ndarray | None = None) -> np.ndarray:
        v = self.C @ x
        return v if lift is None else v + lift


def _resolve_hanging(E: sp.csr_matrix, hang: np.ndarray, nv: int) -> sp.csr_matrix:
    """Solve C = E + H C for the hanging-node averaging matrix H."""
    if len(hang) == 0:
        return E.tocsr()
    H = sp.csr_matrix((np.full(2 * len(hang), 0.5),
                       (np.repeat(hang[:, 0], 2), hang[:, 1:].ravel())), shape=(nv, nv))
    C = E.tocsr()
    for _ in range(64):
        Cn = (E + H @ C).tocsr()
        if Cn.nnz == C.nnz and abs(Cn - C).max() == 0:
            return Cn
        C = Cn
    raise RuntimeError("hanging-node constraints do not resolve")


def _resolve_values(d: np.ndarray, hang: np.ndarray) -> np.ndarray:
    """Propagate vertex data to hanging nodes by edge averaging."""
    d = d.copy()
    for _ in range(64):
        if len(hang) == 0:
            break
        new = 0.5 * (d[hang[:, 1]] + d[hang[:, 2]])
        if np.array_equal(new, d[hang[:, 0]]):
            break
        d[hang[:, 0]] = new
    return d


# ----------------------------------------------------------------------------
# assembly

def vertex_stiffness(mesh: FittedMesh, beta1: float, beta2: float, region: int | None = None) -> sp.csr_matrix:
    """Stiffness on all vertices; restrict to one region's elements if given."""
    nv = mesh.n_vertices
    rows, cols, vals = [], [], []
    for cells, reg, fn in ((mesh.tri, mesh.tri_region, tri_stiffness),
                           (mesh.quad, mesh.quad_region, quad_stiffness)):
        if len(cells) == 0:
            continue
        sel = np.ones(len(cells), dtype=bool) if region is None else (reg == region)
        if not np.any(sel):
            continue
        c = cells[sel]
        beta = np.where(reg[sel] == Region.REGION1, beta1, beta2)
        K = fn(mesh.vertices[c], beta)
        k = c.shape[1]
        rows.append(np.repeat(c, k, axis=1).ravel())
        cols.append(np.tile(c, (1, k)).ravel())
        vals.append(K.ravel())
    if not rows:
        return sp.csr_matrix((nv, nv))
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nv, nv))
    return A.tocsr()


def vertex_load(mesh: FittedMesh, f: Func) -> np.ndarray:
    nv = mesh.n_vertices
    b = np.zeros(nv)
    if len(mesh.tri):
        X = mesh.vertices[mesh.tri]
        area, _ = p1_geometry(X)
        lam = np.column_stack([1 - TRI_DEG2.points.sum(1), TRI_DEG2.points])  # (q,3)
        pts = np.einsum("qi,mia->mqa", lam, X)
        reg = np.repeat(mesh.tri_region[:, None], len(TRI_DEG2), axis=1)
        fv = f(pts[..., 0], pts[..., 1], reg)
        loc = 2 * area[:, None] * np.einsum("q,mq,qi->mi", TRI_DEG2.weights, fv, lam)
        np.add.at(b, mesh.tri, loc)
    if len(mesh.quad):
        X = mesh.vertices[mesh.quad]
        pts, det, _, phi = q1_geometry(X, SQ_3x3)
        reg = np.repeat(mesh.quad_region[:, None], len(SQ_3x3), axis=1)
        fv = f(pts[..., 0], pts[..., 1], reg)
        loc = np.einsum("q,mq,mq,qi->mi", SQ_3x3.weights, det, fv, phi)
        np.add.at(b, mesh.quad, loc)
    return b


def interface_load(mesh: FittedMesh, g: Func, mode: str = "nodal") -> np.ndarray:
    """Line term over the chords of Gamma_h."""
    b = np.zeros(mesh.n_vertices)
    seg = mesh.gamma_h
    if len(seg) == 0:
        return b
    pa, pb = mesh.vertices[seg[:, 0]], mesh.vertices[seg[:, 1]]
    length = np.linalg.norm(pb - pa, axis=1)
    if mode == "nodal":
        ga, gb = g(pa[:, 0], pa[:, 1]), g(pb[:, 0], pb[:, 1])
        np.add.at(b, seg[:, 0], length * (2 * ga + gb) / 6.0)
        np.add.at(b, seg[:, 1], length * (ga + 2 * gb) / 6.0)
    else:
        t = LINE_3.points
        pts = pa[:, None, :] + t[None, :, None] * (pb - pa)[:, None, :]
        gv = g(pts[..., 0], pts[..., 1])
        np.add.at(b, seg[:, 0], length * np.einsum("q,mq,q->m", LINE_3.weights, gv, 1 - t))
        np.add.at(b, seg[:, 1], length * np.einsum("q,mq,q->m", LINE_3.weights, gv, t))
    return b


def build_z_gamma(mesh: FittedMesh, q: Func) -> DiscreteField:
    """Lifting of the jump: -q(O_i) at interface nodes, read from Region2 only."""
    off = np.zeros(mesh.n_vertices)
    nodes = mesh.interface_nodes
    if len(nodes):
        p = mesh.vertices[nodes]
        off[nodes] = -np.asarray(q(p[:, 0], p[:, 1]), dtype=float)
    return DiscreteField(mesh, np.zeros(mesh.n_vertices), off)


def dirichlet_lift(mesh: FittedMesh, data: ProblemData) -> np.ndarray:
    """Vertex values of the boundary data (Region1 branch at interface nodes)."""
    d = np.zeros(mesh.n_vertices)
    if data.u_bc is None:
        return d
    bnd = np.nonzero(mesh.boundary)[0]
    p = mesh.vertices[bnd]
    on_iface = np.zeros(mesh.n_vertices, dtype=bool)
    on_iface[mesh.interface_nodes] = True
    reg = np.where(on_iface[bnd], int(Region.REGION1), _vertex_region(mesh)[bnd])
    d[bnd] = data.u_bc(p[:, 0], p[:, 1], reg)
    return _resolve_values(d, mesh.hanging)


def _vertex_region(mesh: FittedMesh) -> np.ndarray:
    reg = np.full(mesh.n_vertices, int(Region.REGION1))
    reg[mesh.tri[mesh.tri_region == Region.REGION2].ravel()] = int(Region.REGION2)
    if len(mesh.quad):
        reg[mesh.quad[mesh.quad_region == Region.REGION2].ravel()] = int(Region.REGION2)
    return reg


@dataclass
class LinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    dofs: DofMap
    lift: np.ndarray
    zgamma: DiscreteField
    mesh: FittedMesh

    def field(self, x: np.ndarray) -> DiscreteField:
        """u_h = ubar + z for a dof vector x."""
        ubar = DiscreteField(self.mesh, self.dofs.expand(x, self.lift))
        return reconstruct_uh(ubar, self.zgamma)


def assemble(mesh: FittedMesh, data: ProblemData, dofs: DofMap | None = None) -> LinearSystem:
    if dofs is None:
        dofs = DofMap.build(mesh)
    A1 = vertex_stiffness(mesh, data.beta1, data.beta2, Region.REGION1)
    A2 = vertex_stiffness(mesh, data.beta1, data.beta2, Region.REGION2)
    Av = (A1 + A2).tocsr()
    z = build_z_gamma(mesh, data.q)
    lift = dirichlet_lift(mesh, data)
    rhs = vertex_load(mesh, data.f) + interface_load(mesh, data.g, data.g_mode)
    # known parts: boundary values on both sides plus the jump lifting on Region2
    rhs -= A1 @ lift + A2 @ (lift + z.offset)
    C = dofs.C
    A = (C.T @ Av @ C).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    b = C.T @ rhs
    return LinearSystem(A, np.asarray(b).ravel(), dofs, lift, z, mesh)


def reconstruct_uh(ubar: DiscreteField, zgamma: DiscreteField) -> DiscreteField:
    if ubar.mesh is not zgamma.mesh and ubar.values.shape != zgamma.values.shape:
        raise ValueError("fields live on different meshes")
    return DiscreteField(ubar.mesh, ubar.values + zgamma.values, ubar.offset + zgamma.offset)


def interpolate(mesh: FittedMesh, u: Func) -> DiscreteField:
    """Nodal interpolant of a piecewise function ``u(x, y, region)``."""
    p = mesh.vertices
    v1 = u(p[:, 0], p[:, 1], np.full(len(p), int(Region.REGION1)))
    v2 = u(p[:, 0], p[:, 1], np.full(len(p), int(Region.REGION2)))
    reg = _vertex_region(mesh)
    on_iface = np.zeros(len(p), dtype=bool)
    on_iface[mesh.interface_nodes] = True
    vals = np.where(on_iface | (reg == Region.REGION1), v1, v2)
    off = np.where(on_iface, v2 - v1, 0.0)
    return DiscreteField(mesh, vals, off)
