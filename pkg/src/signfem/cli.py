"""Command-line experiment runner.

Subcommands: solve, converge, verify-coercivity, dump-mesh.  Runs write
delimited tables plus the matching figures into the output directory;
identical configurations produce bitwise-identical text outputs.

Exit codes: 0 success, 2 configuration error, 3 solver singularity,
4 file I/O failure; verify-coercivity exits 1 when a theory threshold
fails.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .adapt import run_loop
from .assembly import (
    SingularFactorizationError,
    apply_dirichlet,
    assemble,
    assemble_load,
    compute_errors,
    solve,
)
from .estimator import aggregate, compute_indicators, write_indicator_dump
from .mesh import GEOMETRIES, build_structured_mesh, refine_uniform, write_mesh
from .problem import PROBLEMS
from .tcoercivity import verify_coercivity, write_coercivity_report

EXIT_CONFIG = 2
EXIT_SINGULAR = 3
EXIT_IO = 4

ENV_OUTDIR = "SIGNFEM_OUTDIR"

_CONFIG_KEYS = {
    "problem": str,
    "mu": float,
    "mode": str,
    "steps": int,
    "initial_n": int,
    "mark_threshold": float,
    "out": str,
    "figures": lambda s: s.lower() in ("1", "true", "yes", "on"),
    "geometry": str,
    "levels": int,
    "quad_load": int,
    "quad_error": int,
    "quad_origin": int,
}


class ConfigError(ValueError):
    pass


def load_config(path):
    """Parse a plain key=value configuration file."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown configuration key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](val.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="signfem",
        description="Adaptive FEM and residual error estimation for "
        "sign-changing diffusion problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value configuration file; flags override")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--figures", dest="figures", action="store_true", default=None)
        p.add_argument("--no-figures", dest="figures", action="store_false")

    p = sub.add_parser("solve", help="single solve on a structured mesh")
    common(p)
    p.add_argument("--problem", choices=sorted(PROBLEMS), default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--initial-n", type=int, default=None)
    p.add_argument("--refine", type=int, default=0,
                   help="uniform refinements before solving")
    p.add_argument("--dump-system", action="store_true",
                   help="also dump the assembled system in coordinate format")

    p = sub.add_parser("converge", help="refinement loop and convergence table")
    common(p)
    p.add_argument("--problem", choices=sorted(PROBLEMS), default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--mode", choices=["uniform", "adaptive"], default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--initial-n", type=int, default=None)
    p.add_argument("--mark-threshold", type=float, default=None)
    p.add_argument("--quad-load", type=int, default=None)
    p.add_argument("--quad-error", type=int, default=None)
    p.add_argument("--quad-origin", type=int, default=None)

    p = sub.add_parser("verify-coercivity",
                       help="lifting contrast and coercivity constants")
    common(p)
    p.add_argument("--geometry", choices=sorted(GEOMETRIES), default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--initial-n", type=int, default=None)

    p = sub.add_parser("dump-mesh", help="write a structured mesh as text")
    common(p)
    p.add_argument("--geometry", choices=sorted(GEOMETRIES), default=None)
    p.add_argument("--initial-n", type=int, default=None)
    p.add_argument("--refine", type=int, default=0)
    return parser


_DEFAULTS = {
    "problem": "polynomial",
    "mu": -3.0,
    "mode": "uniform",
    "steps": 4,
    "initial_n": 8,
    "mark_threshold": 0.5,
    "figures": True,
    "geometry": "square",
    "levels": 3,
    "quad_load": 4,
    "quad_error": 6,
    "quad_origin": 10,
}


def _resolve(args):
    """Fill unset options from the config file, then the defaults."""
    file_values = load_config(args.config) if getattr(args, "config", None) else {}
    for key, default in _DEFAULTS.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) is None:
            setattr(args, key, file_values.get(key, default))
    if getattr(args, "out", None) is None:
        args.out = file_values.get("out") or os.environ.get(ENV_OUTDIR) or os.path.join(
            "runs", args.command
        )
    _validate(args)
    return args


def _validate(args):
    if getattr(args, "mu", None) is not None and args.command in ("solve", "converge"):
        if not args.mu < 0.0:
            raise ConfigError("mu: the contrast must be negative")
    if getattr(args, "steps", None) is not None and args.steps < 1:
        raise ConfigError("steps: must be >= 1")
    if getattr(args, "mark_threshold", None) is not None and not (
        0.0 < args.mark_threshold < 1.0
    ):
        raise ConfigError("mark_threshold: must lie in (0, 1)")
    if getattr(args, "initial_n", None) is not None and args.initial_n < 1:
        raise ConfigError("initial_n: must be >= 1")


def _problem(args):
    return PROBLEMS[args.problem](args.mu)


def _log_lines(args, problem):
    lines = [f"command = {args.command}"]
    for key in sorted(_DEFAULTS):
        if hasattr(args, key):
            lines.append(f"{key} = {getattr(args, key)}")
    if problem is not None and problem.name == "singular":
        lines.append(f"singular_exponent = {problem.exact.lam!r}")
        lines.append(
            "singular_constants = "
            + " ".join(repr(c) for c in problem.constants)
        )
    return lines


def cmd_solve(args):
    problem = _problem(args)
    mesh = build_structured_mesh(problem.geometry, args.initial_n)
    for _ in range(args.refine):
        mesh = refine_uniform(mesh)
    matrix = assemble(mesh, problem.coefficient)
    rhs = assemble_load(mesh, problem.source)
    system = apply_dirichlet(matrix, rhs, mesh, problem.boundary)
    solution = solve(system)
    errors = compute_errors(mesh, solution, problem.exact)
    indicators = compute_indicators(mesh, solution, problem.coefficient, problem.source)
    report = aggregate(indicators, errors)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "solution.csv", "w") as fh:
        fh.write("vertex,x,y,u\n")
        for i, (x, y) in enumerate(mesh.coords):
            fh.write(f"{i},{float(x)!r},{float(y)!r},{float(solution.values[i])!r}\n")
    eff = "n/a" if report.effectivity is None else f"{report.effectivity:.6f}"
    summary = _log_lines(args, problem) + [
        f"dof = {mesh.num_vertices}",
        f"interior_dof = {int((~mesh.vertex_on_boundary).sum())}",
        f"e_l2 = {errors.l2:.10e}",
        f"e_h1 = {errors.h1:.10e}",
        f"eta = {report.eta:.10e}",
        f"effectivity = {eff}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    if args.dump_system:
        from .assembly import dump_system

        dump_system(out / "system.txt", system.matrix, system.rhs)
    if args.figures:
        from . import report as figs

        figs.plot_mesh(mesh, out / "mesh.png")
        figs.plot_solution(mesh, solution.values, out / "solution.png")
    print(f"solve: dof={mesh.num_vertices} e_h1={errors.h1:.6e} -> {out}")
    return 0


def cmd_converge(args):
    problem = _problem(args)
    mesh = build_structured_mesh(problem.geometry, args.initial_n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    interior = []

    def observer(level):
        path = out / f"indicators_k{level.k:02d}.txt"
        write_indicator_dump(path, level.indicators)
        interior.append(int((~level.mesh.vertex_on_boundary).sum()))

    result = run_loop(
        problem,
        mesh,
        steps=args.steps,
        mode=args.mode,
        threshold=args.mark_threshold,
        load_degree=args.quad_load,
        error_degree=args.quad_error,
        origin_degree=args.quad_origin,
        observer=observer,
    )
    table = result.table
    table.validate()
    (out / "table.csv").write_text(table.to_csv())
    (out / "table.txt").write_text(table.to_text())
    log = _log_lines(args, problem)
    log.append(f"levels_recorded = {len(table)}")
    for row, free in zip(table, interior):
        log.append(
            f"level {row.k}: dof={row.dof} interior_dof={free} "
            f"e_l2={row.e_l2:.10e} e_h1={row.e_h1:.10e} eta={row.eta:.10e}"
        )
    (out / "run.log").write_text("\n".join(log) + "\n")
    if args.figures:
        from . import report as figs

        figs.plot_convergence(table, out / "convergence.png",
                              title=f"{problem.name}, mu={problem.mu}, {args.mode}")
        figs.plot_mesh(result.final.mesh, out / "mesh_final.png")
        figs.plot_indicators(result.final.mesh, result.final.indicators,
                             out / "indicators_final.png")
    last = table.rows[-1]
    print(
        f"converge: {len(table)} levels, final dof={last.dof} "
        f"e_h1={last.e_h1:.6e} -> {out}"
    )
    return 0


def cmd_verify_coercivity(args):
    rows = verify_coercivity(
        args.geometry, args.mu, levels=args.levels, initial_n=args.initial_n
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_coercivity_report(out / "coercivity_report.txt", rows)
    if args.figures:
        from . import report as figs

        figs.plot_coercivity(rows, out / "coercivity.png")
    status = all(r["pass_kr"] and r["pass_alpha"] for r in rows)
    for r in rows:
        print(
            f"level {r['level']}: dof={r['dof']} kr={r['kr']:.8f} "
            f"alpha_min={r['alpha_min']:.6e} "
            f"[{'pass' if r['pass_kr'] and r['pass_alpha'] else 'FAIL'}]"
        )
    print(f"verify-coercivity: report -> {out}")
    return 0 if status else 1


def cmd_dump_mesh(args):
    mesh = build_structured_mesh(args.geometry, args.initial_n)
    for _ in range(args.refine):
        mesh = refine_uniform(mesh)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mesh.txt"
    write_mesh(mesh, path)
    print(f"dump-mesh: {mesh.num_vertices} vertices -> {path}")
    return 0


_COMMANDS = {
    "solve": cmd_solve,
    "converge": cmd_converge,
    "verify-coercivity": cmd_verify_coercivity,
    "dump-mesh": cmd_dump_mesh,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _resolve(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except SingularFactorizationError as exc:
        level = f" at level {exc.level}" if exc.level is not None else ""
        print(f"solver singularity{level}: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except OSError as exc:
        print(f"file I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
