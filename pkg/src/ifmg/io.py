"""CSV, legacy VTK and MatrixMarket output."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import scipy.io

from .fem import DiscreteField
from .geometry import Region
from .meshgen import FittedMesh


def _fmt_err(v: float) -> str:
    return f"{v:.3e}"


def _fmt_order(v) -> str:
    return "" if v is None else f"{v:.4f}"


def write_convergence_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["1/h", "L2", "order", "H1", "order"])
        for r in sorted(rows, key=lambda r: r.inv_h):
            w.writerow([f"{r.inv_h:g}", _fmt_err(r.l2), _fmt_order(r.l2_order), _fmt_err(r.h1), _fmt_order(r.h1_order)])


def write_mg_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["example", "1/h", "beta1/beta2", "iterations"])
        for r in sorted(rows, key=lambda r: (r.inv_h, -r.ratio)):
            w.writerow(["" if r.example is None else r.example, f"{r.inv_h:g}", f"{r.ratio:g}", int(r.iterations)])


def write_residuals_csv(residuals, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "residual"])
        for k, r in enumerate(residuals):
            w.writerow([k, f"{r:.6e}"])


def write_vtk(mesh: FittedMesh, path, field: DiscreteField | None = None, title: str = "fitted mesh") -> None:
    """Legacy ASCII unstructured grid; triangles are type 5, quads type 9."""
    nt, nq = len(mesh.tri), len(mesh.quad)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x:.16g} {y:.16g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt + nq} {4 * nt + 5 * nq}")
    lines += ["3 " + " ".join(map(str, c)) for c in mesh.tri]
    lines += ["4 " + " ".join(map(str, c)) for c in mesh.quad]
    lines.append(f"CELL_TYPES {nt + nq}")
    lines += ["5"] * nt + ["9"] * nq
    lines += [f"CELL_DATA {nt + nq}", "SCALARS region int 1", "LOOKUP_TABLE default"]
    lines += [str(int(r)) for r in np.concatenate([mesh.tri_region, mesh.quad_region])]
    if field is not None:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, reg in (("u_region1", Region.REGION1), ("u_region2", Region.REGION2)):
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.16g}" for v in field.side_values(reg)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_mesh_listing(mesh: FittedMesh, path) -> None:
    """Plain-text node/element listing."""
    out = [f"nodes {mesh.n_vertices}"]
    out += [f"{k} {x:.12g} {y:.12g}" for k, (x, y) in enumerate(mesh.vertices)]
    out.append(f"elements {mesh.n_elements}")
    for k, e in enumerate(mesh.elements()):
        out.append(f"{k} {e.kind.name} {int(e.region)} " + " ".join(map(str, e.nodes)))
    Path(path).write_text("\n".join(out) + "\n")


def dump_system(A, b, stem) -> None:
    scipy.io.mmwrite(f"{stem}_A.mtx", A)
    scipy.io.mmwrite(f"{stem}_b.mtx", np.asarray(b).reshape(-1, 1))
