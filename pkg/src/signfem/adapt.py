"""Marking, refinement loop, and convergence-rate bookkeeping.

The loop records one table row per level: solve, measure errors against
the exact solution, compute indicators, then refine (uniformly or the
marked set).  Rates are measured against DoF^(-1/2) between consecutive
rows, matching the usual table layout for 2D P1 runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    SingularFactorizationError,
    apply_dirichlet,
    assemble,
    assemble_load,
    compute_errors,
    solve,
)
from .estimator import aggregate, compute_indicators
from .mesh import refine_marked, refine_uniform


@dataclass
class Row:
    k: int
    dof: int
    e_l2: float
    cv_l2: float | None
    e_h1: float
    cv_h1: float | None
    eta: float
    effectivity: float | None


class ConvergenceTable:
    """Per-level convergence rows with CSV and aligned-text emission."""

    CSV_HEADER = "k,dof,e_l2,cv_l2,e_h1,cv_h1,eta,effectivity"

    def __init__(self):
        self.rows: list[Row] = []

    def append(self, row):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def validate(self):
        dofs = [r.dof for r in self.rows]
        if any(b <= a for a, b in zip(dofs, dofs[1:])):
            raise ValueError("DoF column must be strictly increasing")
        if self.rows and (self.rows[0].cv_l2 is not None or self.rows[0].cv_h1 is not None):
            raise ValueError("first row must not carry convergence rates")
        return True

    @staticmethod
    def _fmt_rate(v):
        return "" if v is None else f"{v:.6f}"

    def to_csv(self):
        lines = [self.CSV_HEADER]
        for r in self.rows:
            eff = "" if r.effectivity is None else f"{r.effectivity:.6f}"
            lines.append(
                f"{r.k},{r.dof},{r.e_l2:.10e},{self._fmt_rate(r.cv_l2)},"
                f"{r.e_h1:.10e},{self._fmt_rate(r.cv_h1)},{r.eta:.10e},{eff}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self):
        header = (
            f"{'k':>3} {'DoF':>8} {'e_L2':>10} {'CV_L2':>6} "
            f"{'e_H1':>10} {'CV_H1':>6} {'eta/e_H1':>9}"
        )
        lines = [header, "-" * len(header)]
        for r in self.rows:
            cv2 = "" if r.cv_l2 is None else f"{r.cv_l2:.2f}"
            cv1 = "" if r.cv_h1 is None else f"{r.cv_h1:.2f}"
            eff = "" if r.effectivity is None else f"{r.effectivity:.2f}"
            lines.append(
                f"{r.k:>3} {r.dof:>8} {r.e_l2:>10.2E} {cv2:>6} "
                f"{r.e_h1:>10.2E} {cv1:>6} {eff:>9}"
            )
        return "\n".join(lines) + "\n"


def mark(indicators, threshold=0.5):
    """Ids of triangles with eta_T above threshold * max eta_T (strict)."""
    eta = indicators.eta_total
    if eta.size == 0:
        raise ValueError("cannot mark an empty indicator set")
    return np.flatnonzero(eta > threshold * eta.max())


def convergence_rate(prev_row, next_row):
    """Experimental rate between two rows, h proxied by DoF^(-1/2)."""
    for r in (prev_row, next_row):
        if r[0] <= 0:
            raise ValueError("DoF must be positive")
        if r[1] <= 0.0:
            raise ValueError("error values must be positive to define a rate")
    (dof0, e0), (dof1, e1) = prev_row, next_row
    return math.log(e0 / e1) / math.log(math.sqrt(dof1 / dof0))


@dataclass
class LevelData:
    k: int
    mesh: object
    solution: object
    errors: object
    indicators: object
    report: object
    marked: np.ndarray | None = None


@dataclass
class RunResult:
    table: ConvergenceTable
    final: LevelData
    levels: list = field(default_factory=list)


def run_loop(
    problem,
    mesh,
    steps,
    mode="uniform",
    threshold=0.5,
    load_degree=4,
    error_degree=6,
    origin_degree=10,
    observer=None,
    keep_levels=False,
):
    """Drive `steps` solve/estimate/refine rounds and tabulate them.

    mode is "uniform" (red refinement) or "adaptive" (threshold marking
    plus conforming bisection).  Solver failures carry the level index.
    The loop stops early if the marked set comes out empty.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if mode not in ("uniform", "adaptive"):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")

    table = ConvergenceTable()
    result = RunResult(table, None)
    prev = None
    for k in range(1, steps + 1):
        matrix = assemble(mesh, problem.coefficient)
        rhs = assemble_load(mesh, problem.source, degree=load_degree)
        system = apply_dirichlet(matrix, rhs, mesh, problem.boundary)
        try:
            solution = solve(system)
        except SingularFactorizationError as exc:
            exc.level = k
            raise
        errors = compute_errors(
            mesh, solution, problem.exact,
            degree=error_degree, origin_degree=origin_degree,
        )
        indicators = compute_indicators(mesh, solution, problem.coefficient, problem.source)
        report = aggregate(indicators, errors)

        cv_l2 = cv_h1 = None
        if prev is not None:
            cv_l2 = convergence_rate((prev.dof, prev.e_l2), (mesh.num_vertices, errors.l2))
            cv_h1 = convergence_rate((prev.dof, prev.e_h1), (mesh.num_vertices, errors.h1))
        # the table columns carry the coefficient-weighted aggregate,
        # the convention behind the reported effectivity indices
        row = Row(
            k, mesh.num_vertices, errors.l2, cv_l2, errors.h1, cv_h1,
            report.eta_weighted, report.effectivity_weighted,
        )
        table.append(row)
        prev = row

        marked = None
        if mode == "adaptive":
            marked = mark(indicators, threshold)
        data = LevelData(k, mesh, solution, errors, indicators, report, marked)
        result.final = data
        if keep_levels:
            result.levels.append(data)
        if observer is not None:
            observer(data)

        if k == steps:
            break
        if mode == "uniform":
            mesh = refine_uniform(mesh)
        else:
            if marked.size == 0:
                break
            mesh = refine_marked(mesh, marked)
    return result


def tail_rate(table, which="h1", min_dof_ratio=8.0):
    """Least-squares late-iteration rate against DoF^(-1/2).

    Fits the rows whose DoF is within `min_dof_ratio` of the final one
    (at least three rows), which smooths the step-to-step noise of
    adaptive runs.
    """
    rows = table.rows
    if len(rows) < 2:
        raise ValueError("need at least two rows for a rate")
    dof_last = rows[-1].dof
    sel = [r for r in rows if r.dof * min_dof_ratio >= dof_last]
    if len(sel) < 3:
        sel = rows[-3:] if len(rows) >= 3 else rows
    err = np.array([getattr(r, f"e_{which}") for r in sel])
    dof = np.array([r.dof for r in sel], dtype=float)
    slope = np.polyfit(np.log(dof**-0.5), np.log(err), 1)[0]
    return float(slope)
