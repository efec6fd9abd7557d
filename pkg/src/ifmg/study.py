"""End-to-end runs: build meshes, assemble, solve, measure errors and iteration counts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import compute_errors, eoc
from .exact import ExactSolution, get_exact
from .fem import DofMap, LinearSystem, ProblemData, assemble
from .geometry import LevelSet, get_levelset, parse_levelset
from .meshgen import build_hierarchy, fit_mesh, make_uniform_mesh
from .mg import MGConfig, build_levels, solve_cg, solve_direct, solve_mg

RATIOS = (1e4, 1e2, 1e-2, 1e-4)


def betas_for_ratio(ratio: float) -> tuple[float, float]:
    """Coefficient pair with the larger value set to the ratio and the other to 1."""
    return (ratio, 1.0) if ratio >= 1 else (1.0, 1.0 / ratio)


@dataclass
class ProblemSpec:
    example: int | None = 1
    beta1: float = 1.0
    beta2: float = 1.0
    levelset: str | None = None
    radius: float | None = None
    g_mode: str = "nodal"

    def __post_init__(self):
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise ValueError("beta1 and beta2 must be positive")

    def exact(self) -> ExactSolution | None:
        if self.example is None:
            return None
        kw = {"r": self.radius} if (self.example == 1 and self.radius is not None) else {}
        return get_exact(self.example, self.beta1, self.beta2, **kw)

    def level_set(self) -> LevelSet:
        ex = self.exact()
        if ex is not None:
            return ex.levelset
        name = self.levelset or "circle"
        params = {"r": self.radius} if (name == "circle" and self.radius is not None) else {}
        try:
            return get_levelset(name, **params)
        except KeyError:
            return parse_levelset(name)

    def data(self) -> ProblemData:
        ex = self.exact()
        if ex is not None:
            return ex.problem(self.g_mode)
        return ProblemData(self.beta1, self.beta2, f=lambda x, y, r=None: np.ones(np.broadcast(x, y).shape),
                           g_mode=self.g_mode)


@dataclass
class RunConfig:
    levels: list = field(default_factory=lambda: [32, 64, 128, 256])   # values of 1/h
    solver: str = "direct"
    n0: int = 8
    error_branch: str = "auto"
    mg: MGConfig = field(default_factory=MGConfig)
    strict_mesh: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.levels:
            raise ValueError("levels must be nonempty")
        if self.solver not in ("mg", "cg", "direct"):
            raise ValueError("solver must be mg, cg or direct")


def grid_n(inv_h: float) -> int:
    """Cells per side of [-1, 1]^2 for mesh size h (h = 2/n)."""
    n = 2.0 * inv_h
    if abs(n - round(n)) > 1e-9 or round(n) < 2:
        raise ValueError(f"1/h = {inv_h} does not give an integer grid")
    return int(round(n))


def resolve_branch(branch: str, spec: ProblemSpec) -> str:
    if branch != "auto":
        return branch
    ex = spec.exact()
    # a nonzero solution jump makes the true-interface comparison O(1) in the sliver
    return "mesh" if (ex is not None and spec.example in (2, 3)) else "levelset"


@dataclass
class SolveResult:
    n: int
    system: LinearSystem
    x: np.ndarray
    iterations: int | None
    residuals: list
    field: object
    levels: list | None = None


def solve_problem(spec: ProblemSpec, n: int, cfg: RunConfig) -> SolveResult:
    ls = spec.level_set()
    data = spec.data()
    levels = None
    if cfg.solver == "mg":
        if n % cfg.n0 or (n // cfg.n0) & (n // cfg.n0 - 1):
            raise ValueError(f"n={n} must be n0 * 2^L with n0={cfg.n0}")
        L = int(round(math.log2(n // cfg.n0)))
        hier = build_hierarchy(ls, cfg.n0, L, strict=cfg.strict_mesh)
        dms = [DofMap.build(F) for F in hier.levels]
        system = assemble(hier.levels[-1], data, dms[-1])
        levels = build_levels(hier, system.A, dms)
        x, stats = solve_mg(levels, system.b, cfg.mg)
        its, res = stats.iterations, stats.residuals
    else:
        mesh = fit_mesh(make_uniform_mesh(n), ls, strict=cfg.strict_mesh)
        system = assemble(mesh, data)
        if cfg.solver == "cg":
            x, its = solve_cg(system.A, system.b, cfg.mg.stopping_tol)
            res = []
        else:
            x, its, res = solve_direct(system.A, system.b), None, []
    return SolveResult(n, system, x, its, res, system.field(x), levels)


@dataclass
class ConvergenceRow:
    inv_h: float
    l2: float
    l2_order: float | None
    h1: float
    h1_order: float | None
    iterations: int | None = None


def run_convergence_study(spec: ProblemSpec, cfg: RunConfig) -> list[ConvergenceRow]:
    ex = spec.exact()
    if ex is None:
        raise ValueError("a convergence study needs an exact solution")
    branch = resolve_branch(cfg.error_branch, spec)
    rows = []
    for inv_h in sorted(cfg.levels):
        res = solve_problem(spec, grid_n(inv_h), cfg)
        rep = compute_errors(res.field, ex, branch=branch)
        rows.append([inv_h, rep.l2, rep.h1, res.iterations])
    l2 = eoc([r[1] for r in rows], [1.0 / r[0] for r in rows])
    h1 = eoc([r[2] for r in rows], [1.0 / r[0] for r in rows])
    out = []
    for k, (inv_h, e0, e1, its) in enumerate(rows):
        out.append(ConvergenceRow(inv_h, e0, None if k == 0 else float(l2[k - 1]),
                                  e1, None if k == 0 else float(h1[k - 1]), its))
    return out


@dataclass
class MGRow:
    example: int | None
    inv_h: float
    ratio: float
    iterations: int
    contraction: float


def run_mg_study(spec: ProblemSpec, cfg: RunConfig, ratios=RATIOS) -> list[MGRow]:
    """Iteration counts of the V-cycle iteration over mesh sizes and jump ratios."""
    rows = []
    mg_cfg = RunConfig(levels=cfg.levels, solver="mg", n0=cfg.n0, mg=cfg.mg, strict_mesh=cfg.strict_mesh)
    for inv_h in sorted(cfg.levels):
        for ratio in ratios:
            b1, b2 = betas_for_ratio(ratio)
            s = ProblemSpec(spec.example, b1, b2, spec.levelset, spec.radius, spec.g_mode)
            res = solve_problem(s, grid_n(inv_h), mg_cfg)
            r = np.asarray(res.residuals)
            rho = float((r[-1] / r[0]) ** (1.0 / max(1, len(r) - 1))) if len(r) > 1 else 0.0
            rows.append(MGRow(spec.example, inv_h, ratio, res.iterations, rho))
    rows.sort(key=lambda r: (r.inv_h, -r.ratio))
    return rows
