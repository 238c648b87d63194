"""Benchmark problem data: coefficient, exact solutions, sources, traces.

Two manufactured configurations are provided.  The polynomial one lives
on the symmetric square and vanishes on the outer boundary; the
singular one lives on the L-shaped interface geometry and behaves like
r^lam near the re-entrant interface corner at the origin, with the
exponent and the four angular constants determined by the transmission
conditions across the two interface rays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import GEOMETRIES


class SingularPointError(ValueError):
    """Gradient requested exactly at the singular point."""


@dataclass(frozen=True)
class Coefficient:
    """Piecewise-constant diffusion coefficient, positive/negative."""

    a_plus: float
    a_minus: float

    def __post_init__(self):
        if not self.a_plus > 0.0:
            raise ValueError("a_plus must be positive")
        if not self.a_minus < 0.0:
            raise ValueError("a_minus must be negative (the sign-changing contrast)")

    @property
    def epsilon0(self):
        return min(self.a_plus, -self.a_minus)

    def on_side(self, side):
        return np.where(np.asarray(side) > 0, self.a_plus, self.a_minus)


def singular_exponent(mu):
    """Corner-singularity exponent lam(mu) in (0, 1).

    Defined for mu < -3 or -1/3 < mu < 0; outside these ranges the
    arccos argument leaves [-1, 1] and a ValueError is raised.
    """
    mu = float(mu)
    if mu >= 0.0:
        raise ValueError("the contrast mu must be negative")
    if mu == -1.0:
        raise ValueError("mu = -1 is the critical contrast; exponent undefined")
    arg = (1.0 - mu) / (2.0 * abs(1.0 + mu))
    if not -1.0 <= arg <= 1.0:
        raise ValueError(
            f"arccos argument {arg:.6g} outside [-1, 1]; "
            "mu must satisfy mu < -3 or -1/3 < mu < 0"
        )
    lam = (2.0 / np.pi) * np.arccos(arg)
    if not 0.0 < lam < 1.0:
        raise ValueError(
            f"exponent {lam:.6g} outside (0, 1); "
            "mu must satisfy mu < -3 or -1/3 < mu < 0"
        )
    return lam


def transmission_matrix(mu, lam):
    """4x4 system enforcing value and flux continuity of the angular parts.

    Unknown order is (c1, c2, d1, d2); rows are value continuity at the
    two interface rays followed by flux continuity (coefficient times
    angular derivative) at the same rays.
    """
    a = lam * np.pi / 2.0  # lam * pi/2
    b = 3.0 * lam * np.pi / 2.0  # lam * (2 pi - pi/2)
    sa, ca = np.sin(a), np.cos(a)
    sb, cb = np.sin(b), np.cos(b)
    return np.array(
        [
            [sa, 0.0, 0.0, -sb],
            [0.0, sa, -sb, 0.0],
            [ca, -1.0, -mu, mu * cb],
            [1.0, -ca, -mu * cb, mu],
        ]
    )


def singular_constants(mu, lam=None):
    """Angular constants (c1, c2, d1, d2) of the singular solution.

    Computed as the nullspace of the transmission system, normalized so
    max |constant| = 1 with the first nonzero constant positive.  Raises
    if the matrix is not numerically singular (lam inconsistent with mu).
    """
    if lam is None:
        lam = singular_exponent(mu)
    m = transmission_matrix(mu, lam)
    u, s, vt = np.linalg.svd(m)
    if s[-1] > 1e-8 * s[0]:
        raise ValueError(
            f"transmission matrix not singular (smin/smax = {s[-1] / s[0]:.3e}); "
            "lam does not match mu"
        )
    consts = vt[-1]
    consts = consts / np.abs(consts).max()
    first = consts[np.abs(consts) > 1e-12][0]
    if first < 0:
        consts = -consts
    return tuple(consts)


class PolynomialSolution:
    """Manufactured polynomial solution on the symmetric square.

    The plus branch carries the factor mu so that both the value and
    the flux a * du/dx match across the interface x = 0.
    """

    kind = "polynomial"

    def __init__(self, mu):
        self.mu = float(mu)

    def _branch_factor(self, pts, side):
        x = pts[..., 0]
        if side is None:
            plus = x > 0.0
        else:
            plus = np.broadcast_to(np.asarray(side) > 0, x.shape)
        return np.where(plus, self.mu, 1.0)

    def value(self, pts, side=None):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return self._branch_factor(pts, side) * x * (x * x - 1.0) * (y * y - 1.0)

    def gradient(self, pts, side=None):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        fac = self._branch_factor(pts, side)
        gx = fac * (3.0 * x * x - 1.0) * (y * y - 1.0)
        gy = fac * x * (x * x - 1.0) * 2.0 * y
        return np.stack([gx, gy], axis=-1)

    def source(self, pts, side=None):
        """-div(a grad u); the branch factors cancel the coefficient."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        lap = 6.0 * x * (y * y - 1.0) + 2.0 * x * (x * x - 1.0)
        return -self.mu * lap


class SingularSolution:
    """Separable r^lam solution of the L-shaped interface problem.

    Harmonic in each subdomain; all the error is driven through the
    non-homogeneous boundary trace.
    """

    kind = "singular"

    def __init__(self, mu):
        self.mu = float(mu)
        self.lam = singular_exponent(mu)
        self.constants = singular_constants(mu, self.lam)

    def _angular(self, theta, plus):
        lam = self.lam
        c1, c2, d1, d2 = self.constants
        phi_p = c1 * np.sin(lam * theta) + c2 * np.sin(lam * (np.pi / 2.0 - theta))
        phi_m = d1 * np.sin(lam * (theta - np.pi / 2.0)) + d2 * np.sin(
            lam * (2.0 * np.pi - theta)
        )
        return np.where(plus, phi_p, phi_m)

    def _angular_deriv(self, theta, plus):
        lam = self.lam
        c1, c2, d1, d2 = self.constants
        dp = lam * (
            c1 * np.cos(lam * theta) - c2 * np.cos(lam * (np.pi / 2.0 - theta))
        )
        dm = lam * (
            d1 * np.cos(lam * (theta - np.pi / 2.0))
            + -d2 * np.cos(lam * (2.0 * np.pi - theta))
        )
        return np.where(plus, dp, dm)

    def _polar(self, pts, side):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        r = np.hypot(x, y)
        theta = np.arctan2(y, x)
        theta = np.where(theta < 0.0, theta + 2.0 * np.pi, theta)
        if side is None:
            plus = theta <= np.pi / 2.0
        else:
            plus = np.broadcast_to(np.asarray(side) > 0, r.shape)
        return r, theta, plus

    def value(self, pts, side=None):
        r, theta, plus = self._polar(pts, side)
        out = np.where(r > 0.0, r, 1.0) ** self.lam * self._angular(theta, plus)
        return np.where(r > 0.0, out, 0.0)

    def gradient(self, pts, side=None):
        r, theta, plus = self._polar(pts, side)
        if np.any(r == 0.0):
            raise SingularPointError("gradient is unbounded at the origin")
        phi = self._angular(theta, plus)
        dphi = self._angular_deriv(theta, plus)
        rad = self.lam * r ** (self.lam - 1.0) * phi
        ang = r ** (self.lam - 1.0) * dphi
        ct, st = np.cos(theta), np.sin(theta)
        gx = rad * ct - ang * st
        gy = rad * st + ang * ct
        return np.stack([gx, gy], axis=-1)

    def source(self, pts, side=None):
        """Zero: the solution is harmonic in each subdomain."""
        pts = np.asarray(pts, dtype=float)
        return np.zeros(pts.shape[:-1])


def exact_eval(sol, point):
    """Value and Cartesian gradient of an exact solution at one point."""
    pt = np.asarray(point, dtype=float)
    return float(sol.value(pt)), sol.gradient(pt)


def source_eval(sol, coeff, point):
    """Source term -div(a grad u) at an interior point of one subdomain."""
    pt = np.asarray(point, dtype=float)
    if sol.kind == "singular":
        return 0.0
    x = pt[..., 0]
    side = 1 if x > 0 else -1
    a = float(coeff.on_side(side))
    fac = sol.mu if side > 0 else 1.0
    y = pt[..., 1]
    lap = fac * (6.0 * x * (y * y - 1.0) + 2.0 * x * (x * x - 1.0))
    return float(-a * lap)


@dataclass
class ProblemConfig:
    """Everything a refinement loop needs for one benchmark problem."""

    name: str
    mu: float
    geometry: object
    coefficient: Coefficient
    exact: object
    source: object  # callable(points, side) -> values
    boundary: object  # callable(points) -> trace values
    constants: tuple = field(default=())


def polynomial_problem(mu=-3.0):
    """Polynomial benchmark on the symmetric square, zero trace."""
    mu = float(mu)
    sol = PolynomialSolution(mu)
    return ProblemConfig(
        name="polynomial",
        mu=mu,
        geometry=GEOMETRIES["square"],
        coefficient=Coefficient(1.0, mu),
        exact=sol,
        source=sol.source,
        boundary=lambda pts: np.zeros(np.asarray(pts).shape[:-1]),
    )


def singular_problem(mu):
    """Singular benchmark on the L-shaped geometry, trace of the solution."""
    mu = float(mu)
    sol = SingularSolution(mu)
    return ProblemConfig(
        name="singular",
        mu=mu,
        geometry=GEOMETRIES["lshape"],
        coefficient=Coefficient(1.0, mu),
        exact=sol,
        source=sol.source,
        boundary=lambda pts: sol.value(np.asarray(pts)),
        constants=sol.constants,
    )


PROBLEMS = {"polynomial": polynomial_problem, "singular": singular_problem}
