"""Angle conditions and the regular decomposition property of fitted meshes."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .meshgen import FittedMesh

# Constant in the RDP bound N <= RDP_C / sin(alpha) that the audit checks.
RDP_C = 4.0


def _sq_edges(p: np.ndarray) -> np.ndarray:
    # squared length of the edge opposite each vertex, p has shape (..., 3, 2)
    a = np.sum((p[..., 1, :] - p[..., 2, :]) ** 2, axis=-1)
    b = np.sum((p[..., 2, :] - p[..., 0, :]) ** 2, axis=-1)
    c = np.sum((p[..., 0, :] - p[..., 1, :]) ** 2, axis=-1)
    return np.stack([a, b, c], axis=-1)


def triangle_angles_many(p: np.ndarray) -> np.ndarray:
    """Interior angles of triangles ``p`` (shape (m, 3, 2)), law of cosines."""
    p = np.asarray(p, dtype=float)
    d = p - np.roll(p, -1, axis=-2)
    cross = d[..., 0, 0] * d[..., 1, 1] - d[..., 0, 1] * d[..., 1, 0]
    sq = _sq_edges(p)
    if np.any(np.abs(cross) <= 1e-300) or np.any(sq <= 0):
        raise ValueError("degenerate triangle")
    ang = np.empty_like(sq)
    for k in range(3):
        a2 = sq[..., k]
        b2 = sq[..., (k + 1) % 3]
        c2 = sq[..., (k + 2) % 3]
        cosv = (b2 + c2 - a2) / (2.0 * np.sqrt(b2 * c2))
        ang[..., k] = np.arccos(np.clip(cosv, -1.0, 1.0))
    # the largest angle absorbs the rounding so the sum is exact
    big = np.argmax(ang, axis=-1)
    rest = ang.sum(axis=-1) - np.take_along_axis(ang, big[..., None], -1)[..., 0]
    np.put_along_axis(ang, big[..., None], (np.pi - rest)[..., None], -1)
    return ang


def triangle_angles(t) -> np.ndarray:
    return triangle_angles_many(np.asarray(t, dtype=float)[None])[0]


def _is_strictly_convex(q: np.ndarray) -> np.ndarray:
    e = np.roll(q, -1, axis=-2) - q
    en = np.roll(e, -1, axis=-2)
    cross = e[..., 0] * en[..., 1] - e[..., 1] * en[..., 0]
    return np.all(cross > 0, axis=-1)


def check_rdp_many(q: np.ndarray):
    """Best-diagonal RDP data for quads ``q`` of shape (m, 4, 2).

    Returns ``(N, psi, diagonal)`` where diagonal 0 joins corners 0-2 and 1
    joins corners 1-3.
    """
    q = np.asarray(q, dtype=float)
    if not np.all(_is_strictly_convex(q)):
        raise ValueError("quadrilateral is not strictly convex and counterclockwise")
    d02 = np.linalg.norm(q[:, 2] - q[:, 0], axis=1)
    d13 = np.linalg.norm(q[:, 3] - q[:, 1], axis=1)
    psi0 = np.maximum(triangle_angles_many(q[:, [0, 1, 2]]).max(axis=1),
                      triangle_angles_many(q[:, [0, 2, 3]]).max(axis=1))
    psi1 = np.maximum(triangle_angles_many(q[:, [1, 2, 3]]).max(axis=1),
                      triangle_angles_many(q[:, [1, 3, 0]]).max(axis=1))
    N0 = d13 / d02
    N1 = d02 / d13
    pick1 = (psi1 < psi0) | ((psi1 == psi0) & (N1 < N0))
    return np.where(pick1, N1, N0), np.where(pick1, psi1, psi0), pick1.astype(np.int64)


def check_rdp(q) -> tuple[float, float, int]:
    N, psi, d = check_rdp_many(np.asarray(q, dtype=float)[None])
    return float(N[0]), float(psi[0]), int(d[0])


@dataclass
class Violation:
    element: int
    kind: str
    min_angle: float
    max_angle: float
    N: float = float("nan")
    psi: float = float("nan")


@dataclass
class QualityReport:
    min_angle: float
    max_angle: float
    worst_rdp_N: float
    worst_rdp_psi: float
    alpha: float
    violations: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element", "kind", "min_angle", "max_angle", "N", "psi"])
            for r in self.rows:
                w.writerow([r[0], r[1]] + [f"{v:.6f}" for v in r[2:]])


def audit_fitted_mesh(mesh: FittedMesh, alpha: float = np.pi / 4,
                      rdp_c: float = RDP_C, keep_rows: bool = False) -> QualityReport:
    """Check Maxac(pi - alpha) on triangles and RDP(N, pi - alpha) on quads."""
    psi_max = np.pi - alpha
    n_bound = rdp_c / np.sin(alpha)
    eps = 1e-12
    viol: list[Violation] = []
    rows = []

    ta = triangle_angles_many(mesh.vertices[mesh.tri])
    tmin, tmax = ta.min(axis=1), ta.max(axis=1)
    for k in np.nonzero(tmax > psi_max + eps)[0]:
        viol.append(Violation(int(k), "tri", float(tmin[k]), float(tmax[k])))

    nt = len(mesh.tri)
    if len(mesh.quad):
        qp = mesh.vertices[mesh.quad]
        N, psi, _ = check_rdp_many(qp)
        # interior angles of the quad itself
        e_prev = qp - np.roll(qp, 1, axis=1)
        e_next = np.roll(qp, -1, axis=1) - qp
        cosq = -np.sum(e_prev * e_next, axis=2) / (np.linalg.norm(e_prev, axis=2) * np.linalg.norm(e_next, axis=2))
        qang = np.arccos(np.clip(cosq, -1, 1))
        qmin, qmax = qang.min(axis=1), qang.max(axis=1)
        bad = (psi > psi_max + eps) | (N > n_bound)
        for k in np.nonzero(bad)[0]:
            viol.append(Violation(nt + int(k), "quad", float(qmin[k]), float(qmax[k]), float(N[k]), float(psi[k])))
        worst_N = float(N.max())
        worst_psi = float(psi.max())
    else:
        N = psi = qmin = qmax = np.zeros(0)
        worst_N, worst_psi = 1.0, 0.0

    if keep_rows:
        rows = [(k, "tri", tmin[k], tmax[k], np.nan, np.nan) for k in range(nt)]
        rows += [(nt + k, "quad", qmin[k], qmax[k], N[k], psi[k]) for k in range(len(mesh.quad))]
    all_min = min([float(tmin.min())] + ([float(qmin.min())] if len(qmin) else []))
    all_max = max([float(tmax.max())] + ([float(qmax.max())] if len(qmax) else []))
    return QualityReport(all_min, all_max, max(worst_N, 1.0), worst_psi, alpha, viol, rows)
