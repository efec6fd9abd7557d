"""Command line entry point: mesh, solve, converge, mgbench."""

from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import compute_errors
from .geometry import LevelSetEvaluationError, MeshTooCoarse
from .meshgen import NonConvexQuad, fit_mesh, make_uniform_mesh
from .mg import MGConfig, NoConvergence
from .quality import audit_fitted_mesh
from .study import (RATIOS, ProblemSpec, RunConfig, grid_n, resolve_branch, run_convergence_study,
                    run_mg_study, solve_problem)

log = logging.getLogger("ifmg")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def parse_h(text: str) -> float:
    """Mesh size from '2^-7', '1/128' or '0.0078125'."""
    t = text.strip().replace(" ", "")
    m = re.fullmatch(r"([0-9.]+)\^(-?[0-9]+)", t)
    if m:
        return float(m.group(1)) ** int(m.group(2))
    m = re.fullmatch(r"1/([0-9.]+)", t)
    if m:
        return 1.0 / float(m.group(1))
    return float(t)


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def read_config(path) -> dict:
    """``key = value`` lines; '#' starts a comment; dashes and underscores are equivalent."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line without '=': {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; command line flags override it")
    p.add_argument("--levelset", default=None, help="builtin name or expression in x, y")
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--example", type=int, choices=[1, 2, 3], default=None)
    p.add_argument("--beta1", type=float, default=1.0)
    p.add_argument("--beta2", type=float, default=1.0)
    p.add_argument("--n0", type=int, default=8, help="coarsest grid cells per side")
    p.add_argument("--solver", choices=["mg", "cg", "direct"], default=None)
    p.add_argument("--g-mode", choices=["nodal", "exact"], default="nodal")
    p.add_argument("--error-branch", choices=["auto", "levelset", "mesh"], default="auto")
    p.add_argument("--tol", type=float, default=None, help="relative residual tolerance")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--out", default="out")
    p.add_argument("--strict-mesh", action="store_true", help="fail on edges cut twice")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ifmg", description="Interface-fitted FEM with interface-adaptive multigrid")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    m = sub.add_parser("mesh", help="generate a fitted mesh, export VTK and a quality report")
    _common(m)
    m.add_argument("--h", default=None, help="mesh size, overrides --n0")
    s = sub.add_parser("solve", help="solve one problem and export the solution")
    _common(s)
    s.add_argument("--h", default="2^-5")
    s.add_argument("--dump-matrix", action="store_true")
    c = sub.add_parser("converge", help="error table over mesh sizes")
    _common(c)
    c.add_argument("--levels", default="32,64,128,256", help="comma separated values of 1/h")
    b = sub.add_parser("mgbench", help="multigrid iteration counts over h and jump ratio")
    _common(b)
    b.add_argument("--h", default=None, help="comma separated mesh sizes, e.g. 2^-6,2^-7")
    b.add_argument("--levels", default=None, help="comma separated values of 1/h")
    b.add_argument("--ratios", default=",".join(f"{r:g}" for r in RATIOS))
    return p


def _config_path(argv) -> str | None:
    for k, a in enumerate(argv):
        if a == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    cfg_path = _config_path(argv)
    if cfg_path is not None:
        cfg = read_config(cfg_path)
        # file contents become defaults of the chosen subcommand
        sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        chosen = [a for a in argv if a in sub_action.choices][:1]
        for sp in (sub_action.choices[c] for c in chosen):
            known = {a.dest for a in sp._actions}
            unknown = set(cfg) - known
            if unknown:
                raise UsageError(f"unknown config keys: {sorted(unknown)}")
            defaults = {}
            for a in sp._actions:
                if a.dest in cfg:
                    val = cfg[a.dest]
                    if a.type is not None:
                        val = a.type(val)
                    elif isinstance(a, argparse._StoreTrueAction):
                        val = val.lower() in ("1", "true", "yes", "on")
                    defaults[a.dest] = val
            sp.set_defaults(**defaults)
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().strip())
    return args


def _spec(args) -> ProblemSpec:
    ex = args.example
    if ex is None and args.levelset is None:
        ex = 1
    return ProblemSpec(ex, args.beta1, args.beta2, args.levelset, args.radius, args.g_mode)


def _run_cfg(args, levels, default_solver) -> RunConfig:
    mg = MGConfig(max_iters=args.max_iters)
    if args.tol is not None:
        mg.stopping_tol = args.tol
    return RunConfig(levels=levels, solver=args.solver or default_solver, n0=args.n0,
                     error_branch=args.error_branch, mg=mg, strict_mesh=args.strict_mesh)


def cmd_mesh(args, out: Path) -> int:
    spec = _spec(args)
    n = grid_n(1.0 / parse_h(args.h)) if args.h else args.n0
    mesh = fit_mesh(make_uniform_mesh(n), spec.level_set(), strict=args.strict_mesh)
    rep = audit_fitted_mesh(mesh, keep_rows=True)
    io.write_vtk(mesh, out / "mesh.vtk")
    io.write_mesh_listing(mesh, out / "mesh.txt")
    rep.write_csv(out / "quality.csv")
    print(f"mesh n={n}: {len(mesh.tri)} triangles, {len(mesh.quad)} quadrilaterals, "
          f"{len(mesh.interface_nodes)} interface nodes")
    print(f"max triangle/quad angle {np.degrees(rep.max_angle):.2f} deg, worst RDP psi "
          f"{np.degrees(rep.worst_rdp_psi):.2f} deg, N {rep.worst_rdp_N:.3f}, violations {len(rep.violations)}")
    return EXIT_OK


def cmd_solve(args, out: Path) -> int:
    spec = _spec(args)
    n = grid_n(1.0 / parse_h(args.h))
    cfg = _run_cfg(args, [n / 2], "mg")
    res = solve_problem(spec, n, cfg)
    io.write_vtk(res.system.mesh, out / "solution.vtk", res.field, title="u_h")
    if res.residuals:
        io.write_residuals_csv(res.residuals, out / "residuals.csv")
    if args.dump_matrix:
        io.dump_system(res.system.A, res.system.b, out / "system")
    msg = f"n={n} dofs={res.system.A.shape[0]} solver={cfg.solver}"
    if res.iterations is not None:
        msg += f" iterations={res.iterations}"
    ex = spec.exact()
    if ex is not None:
        e = compute_errors(res.field, ex, branch=resolve_branch(args.error_branch, spec))
        msg += f" L2={e.l2:.4e} H1={e.h1:.4e}"
    print(msg)
    return EXIT_OK


def cmd_converge(args, out: Path) -> int:
    spec = _spec(args)
    levels = _float_list(args.levels)
    rows = run_convergence_study(spec, _run_cfg(args, levels, "direct"))
    io.write_convergence_csv(rows, out / "converge.csv")
    print((out / "converge.csv").read_text(), end="")
    return EXIT_OK


def cmd_mgbench(args, out: Path) -> int:
    spec = _spec(args)
    if args.h:
        levels = [1.0 / parse_h(h) for h in args.h.split(",")]
    elif args.levels:
        levels = _float_list(args.levels)
    else:
        levels = [64, 128, 256]
    ratios = _float_list(args.ratios)
    rows = run_mg_study(spec, _run_cfg(args, levels, "mg"), ratios)
    io.write_mg_csv(rows, out / "mgbench.csv")
    print((out / "mgbench.csv").read_text(), end="")
    return EXIT_OK


COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "converge": cmd_converge, "mgbench": cmd_mgbench}


def cli_main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args, out)
    except (ValueError, KeyError, SyntaxError) as exc:
        if isinstance(exc, (MeshTooCoarse, LevelSetEvaluationError, NonConvexQuad)):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NoConvergence, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(cli_main())
