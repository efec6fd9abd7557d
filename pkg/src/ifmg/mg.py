"""Interface-adaptive geometric multigrid on a nested fitted-mesh hierarchy.

Each level splits its dofs into an interface block, solved exactly inside
the smoother, and the remaining dofs, relaxed by point Gauss-Seidel.  Coarse
operators are Galerkin products with nodal-interpolation prolongations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from .fem import DofMap
from .meshgen import MeshHierarchy


class NoConvergence(RuntimeError):
    def __init__(self, msg, x=None, stats=None):
        super().__init__(msg)
        self.x = x
        self.stats = stats


@dataclass
class MGConfig:
    stopping_tol: float = math.exp(-20)
    max_iters: int = 100
    pre_sweeps: int = 1
    post_sweeps: int = 1

    def __post_init__(self):
        if not self.stopping_tol > 0:
            raise ValueError("stopping_tol must be positive")


@dataclass
class SolveStats:
    iterations: int
    residuals: list = field(default_factory=list)

    @property
    def contraction(self) -> float:
        r = np.asarray(self.residuals)
        if len(r) < 2 or r[0] == 0:
            return 0.0
        return float((r[-1] / r[0]) ** (1.0 / (len(r) - 1)))


@njit(cache=True)
def _gs(indptr, indices, data, diag, b, x, order):
    for k in range(order.shape[0]):
        i = order[k]
        s = b[i]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                s -= data[p] * x[j]
        x[i] = s / diag[i]


@dataclass
class MGLevel:
    l: int
    A: sp.csr_matrix
    interface_block: np.ndarray
    smooth_block: np.ndarray
    P: sp.csr_matrix | None = None   # to level l + 1
    dofs: DofMap | None = None
    _lu: object = None
    _A_I: sp.csr_matrix | None = None

    def __post_init__(self):
        self.A = sp.csr_matrix(self.A)
        self.A.sort_indices()
        self.diag = self.A.diagonal()
        if len(self.smooth_block) and np.any(self.diag[self.smooth_block] <= 0):
            raise ValueError("non-positive diagonal in smoothing block")
        self._fwd = np.ascontiguousarray(np.sort(self.smooth_block).astype(np.int64))
        self._bwd = np.ascontiguousarray(self._fwd[::-1])
        I = np.asarray(self.interface_block, dtype=np.int64)
        if len(I):
            self._A_I = self.A[I]
            self._lu = spla.splu(self.A[I][:, I].tocsc())

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def block_solve(self, rhs: np.ndarray, x: np.ndarray) -> None:
        I = self.interface_block
        if len(I):
            r = rhs[I] - self._A_I @ x
            x[I] += self._lu.solve(r)

    def gs(self, rhs: np.ndarray, x: np.ndarray, backward: bool = False) -> None:
        A = self.A
        _gs(A.indptr, A.indices, A.data, self.diag, rhs, x, self._bwd if backward else self._fwd)


def smooth(level: MGLevel, rhs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Exact interface-block correction, then forward Gauss-Seidel on the rest."""
    x = np.array(x, dtype=float, copy=True)
    level.block_solve(rhs, x)
    level.gs(rhs, x)
    return x


def smooth_adjoint(level: MGLevel, rhs: np.ndarray, x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float, copy=True)
    level.gs(rhs, x, backward=True)
    level.block_solve(rhs, x)
    return x


def vcycle(levels: list, l: int, rhs: np.ndarray, cfg: MGConfig | None = None) -> np.ndarray:
    """One V-cycle B_l rhs from a zero initial guess."""
    cfg = cfg or MGConfig()
    lev = levels[l]
    x = np.zeros_like(rhs)
    if l == 0:
        # the whole coarsest space is one block: exact solve
        lev.block_solve(rhs, x)
        return x
    for _ in range(cfg.pre_sweeps):
        x = smooth(lev, rhs, x)
    P = levels[l - 1].P
    r = rhs - lev.A @ x
    x += P @ vcycle(levels, l - 1, P.T @ r, cfg)
    for _ in range(cfg.post_sweeps):
        x = smooth_adjoint(lev, rhs, x)
    return x


def solve_mg(levels: list, b: np.ndarray, cfg: MGConfig | None = None, x0=None):
    """Stationary iteration x <- x + B (b - A x) until the relative residual drops below tol."""
    cfg = cfg or MGConfig()
    A = levels[-1].A
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bn = np.linalg.norm(b)
    stats = SolveStats(0, [])
    if bn == 0:
        return np.zeros_like(b), stats
    r = b - A @ x
    stats.residuals.append(np.linalg.norm(r) / bn)
    while stats.residuals[-1] >= cfg.stopping_tol:
        if stats.iterations >= cfg.max_iters:
            raise NoConvergence(f"no convergence in {cfg.max_iters} iterations", x, stats)
        x += vcycle(levels, len(levels) - 1, r, cfg)
        r = b - A @ x
        stats.iterations += 1
        stats.residuals.append(np.linalg.norm(r) / bn)
    return x, stats


def solve_direct(A, b) -> np.ndarray:
    A = sp.csc_matrix(A)
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        return spla.splu(A).solve(np.asarray(b, dtype=float))
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(str(exc)) from exc


def solve_cg(A, b, tol: float = math.exp(-20), maxiter: int | None = None):
    """Unpreconditioned CG; returns (x, iterations)."""
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter, callback=cb)
    if info > 0:
        raise NoConvergence(f"CG stopped after {count[0]} iterations", x, SolveStats(count[0]))
    return x, count[0]


# ----------------------------------------------------------------------------
# setup

def _key_index(keys: np.ndarray):
    order = np.argsort(keys, kind="stable")
    return keys[order], order


def _lookup(sorted_keys, order, q):
    pos = np.clip(np.searchsorted(sorted_keys, q), 0, len(sorted_keys) - 1)
    hit = sorted_keys[pos] == q
    return order[pos], hit


def vertex_prolongation(hier: MeshHierarchy, l: int) -> sp.csr_matrix:
    """Interpolate vertex values of F_l to the vertices of F_{l+1}."""
    Fc, Ff = hier.levels[l], hier.levels[l + 1]
    sk, order = _key_index(Fc.keys)
    idx, shared = _lookup(sk, order, Ff.keys)
    rows = [np.nonzero(shared)[0]]
    cols = [idx[shared]]
    vals = [np.ones(int(shared.sum()))]
    new = np.nonzero(~shared)[0]
    if len(new):
        X, Y, grid = hier.grid_coords(Ff.keys[new])
        if not np.all(grid):
            raise ValueError("hierarchy is not nested: interface node missing on the coarser level")
        lev, I, J, T = hier.locate_leaf(l, X, Y)
        s = 2 ** (hier.L - lev)
        lx = (X - I * s) / s
        ly = (Y - J * s) / s
        N1 = hier.N + 1
        low = T == 0
        cx = np.stack([np.where(low, I, I + 1), I + 1, I], axis=1) * s[:, None]
        cy = np.stack([J, np.where(low, J, J + 1), J + 1], axis=1) * s[:, None]
        w = np.stack([np.where(low, 1 - lx - ly, 1 - ly),
                      np.where(low, lx, lx + ly - 1),
                      np.where(low, ly, 1 - lx)], axis=1)
        cidx, hit = _lookup(sk, order, cx * N1 + cy)
        if not np.all(hit):
            raise ValueError("hierarchy is not nested: leaf corner missing")
        keep = np.abs(w) > 0
        rows.append(np.repeat(new, 3).reshape(-1, 3)[keep])
        cols.append(cidx[keep])
        vals.append(w[keep])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(Ff.n_vertices, Fc.n_vertices))


def prolongation(hier: MeshHierarchy, l: int, dc: DofMap, df: DofMap) -> sp.csr_matrix:
    Mv = vertex_prolongation(hier, l)
    rows = np.nonzero(df.vertex_dof >= 0)[0]
    P = (Mv @ dc.C).tocsr()[rows]
    P.eliminate_zeros()
    return P.tocsr()


def level_blocks(hier: MeshHierarchy, l: int, dofs: DofMap):
    """(interface_block, smooth_block) dof index arrays of level l."""
    n = dofs.n_dofs
    if l == 0:
        return np.arange(n), np.zeros(0, dtype=np.int64)
    verts = np.nonzero(dofs.vertex_dof >= 0)[0]
    keys = hier.levels[l].keys[verts]
    if l < hier.L:
        inside = hier.in_ring_region(l - 1, keys)
    else:
        inside = hier.support_in_ring_region(l - 1, keys)
    d = dofs.vertex_dof[verts]
    return np.sort(d[inside]), np.sort(d[~inside])


def build_levels(hier: MeshHierarchy, A_L, dofmaps: list | None = None) -> list[MGLevel]:
    """Galerkin hierarchy with block partitions; ``A_L`` lives on the finest dofs."""
    L = hier.L
    if dofmaps is None:
        dofmaps = [DofMap.build(F) for F in hier.levels]
    if A_L.shape[0] != dofmaps[L].n_dofs:
        raise ValueError("fine operator does not match the finest dof map")
    Ps = [prolongation(hier, l, dofmaps[l], dofmaps[l + 1]) for l in range(L)]
    As = [None] * (L + 1)
    As[L] = sp.csr_matrix(A_L)
    for l in range(L - 1, -1, -1):
        Ac = (Ps[l].T @ As[l + 1] @ Ps[l]).tocsr()
        Ac.sum_duplicates()
        As[l] = Ac
    levels = []
    for l in range(L + 1):
        I, W = level_blocks(hier, l, dofmaps[l])
        lev = MGLevel(l, As[l], I, W, Ps[l] if l < L else None, dofmaps[l])
        levels.append(lev)
    return levels


def error_propagation(levels: list) -> np.ndarray:
    """Dense I - B A of one V-cycle (small problems only)."""
    A = levels[-1].A
    n = A.shape[0]
    B = np.column_stack([vcycle(levels, len(levels) - 1, e) for e in np.eye(n)])
    return np.eye(n) - B @ A.toarray()
