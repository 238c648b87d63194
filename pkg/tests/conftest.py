"""Shared benchmark runs, computed once per session.

The acceptance criteria and several module tests all consume the same
five benchmark runs; the observers record per-level diagnostics so no
level data has to be retained.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from signfem import (
    build_structured_mesh,
    polynomial_problem,
    run_loop,
    singular_problem,
)
from signfem.estimator import efficiency_ratios


@dataclass
class BenchmarkRun:
    problem: object
    table: object
    runtime: float
    reliability_plain: list = field(default_factory=list)
    reliability_weighted: list = field(default_factory=list)
    efficiency_max: list = field(default_factory=list)
    marked_near_origin: list = field(default_factory=list)
    effectivities: list = field(default_factory=list)


def _run(problem, n, steps, mode, track_marks=False):
    mesh = build_structured_mesh(problem.geometry, n)
    run = BenchmarkRun(problem, None, 0.0)

    def observer(level):
        rep = level.report
        denom = rep.eta_r + rep.eta_j + rep.osc
        run.reliability_plain.append(level.errors.h1_semi / denom)
        run.reliability_weighted.append(level.errors.h1_semi / (rep.eta_weighted + rep.osc))
        run.efficiency_max.append(
            float(efficiency_ratios(level.mesh, level.indicators, level.errors).max())
        )
        run.effectivities.append(rep.effectivity_weighted)
        if track_marks and level.marked is not None and level.marked.size:
            cent = level.mesh.coords[level.mesh.triangles[level.marked]].mean(axis=1)
            run.marked_near_origin.append(
                float((np.hypot(cent[:, 0], cent[:, 1]) < 0.25).mean())
            )

    start = time.perf_counter()
    result = run_loop(problem, mesh, steps=steps, mode=mode, observer=observer)
    run.runtime = time.perf_counter() - start
    run.table = result.table
    return run


@pytest.fixture(scope="session")
def poly_uniform():
    """Table-1 configuration: mu=-3, 17x17 start, 4 uniform steps."""
    return _run(polynomial_problem(-3.0), 8, 4, "uniform")


@pytest.fixture(scope="session")
def singular5_uniform():
    """Table-2 configuration: mu=-5, 5 uniform steps."""
    return _run(singular_problem(-5.0), 8, 5, "uniform")


@pytest.fixture(scope="session")
def singular100_uniform():
    """Table-3 configuration: mu=-100, 5 uniform steps."""
    return _run(singular_problem(-100.0), 8, 5, "uniform")


@pytest.fixture(scope="session")
def singular100_adaptive():
    """Table-5 configuration: mu=-100, adaptive from the 81-node mesh."""
    return _run(singular_problem(-100.0), 4, 40, "adaptive", track_marks=True)


@pytest.fixture(scope="session")
def singular5_adaptive():
    """Table-4 configuration: mu=-5, adaptive from the 81-node mesh."""
    return _run(singular_problem(-5.0), 4, 32, "adaptive", track_marks=True)
