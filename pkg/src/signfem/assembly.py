"""P1 Lagrange assembly, Dirichlet elimination, sparse solve, exact errors.

The bilinear form integral of a * grad(u) . grad(v) is indefinite for a
sign-changing coefficient, so the linear solver is a direct sparse LU
factorization; singular factorizations (critical contrast) are detected
and reported instead of silently returning garbage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quadrature import physical_points, triangle_rule


class AssemblyError(ValueError):
    """Degenerate geometry or inconsistent assembly input."""


class SingularFactorizationError(RuntimeError):
    """The constrained system is numerically singular."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


@dataclass
class SparseSystem:
    """Constrained symmetric system tied to a mesh."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    mesh: object
    free: np.ndarray  # boolean mask over vertices
    boundary_values: np.ndarray


@dataclass
class DiscreteSolution:
    """Nodal values over all vertices of one mesh generation."""

    values: np.ndarray
    generation: int


@dataclass
class ErrorNorms:
    l2: float
    h1: float
    h1_semi: float
    tri_l2_sq: np.ndarray
    tri_semi_sq: np.ndarray


def coefficient_on_triangles(mesh, coeff):
    """Per-triangle coefficient values from a Coefficient, scalar, or array."""
    if np.isscalar(coeff):
        return np.full(mesh.num_triangles, float(coeff))
    if hasattr(coeff, "on_side"):
        return np.asarray(coeff.on_side(mesh.subdomain), dtype=float)
    a = np.asarray(coeff, dtype=float)
    if a.shape != (mesh.num_triangles,):
        raise AssemblyError("coefficient array must have one value per triangle")
    return a


def _gradients(mesh):
    """Hat-function gradient components b, c with grad(lam_i) = (b_i, c_i)/(2A)."""
    p = mesh.coords[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return b, c


def local_stiffness(tri_coords, a=1.0):
    """Exact 3x3 stiffness block of one triangle for a constant coefficient."""
    p = np.asarray(tri_coords, dtype=float)
    x, y = p[:, 0], p[:, 1]
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]])
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]])
    area2 = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
    return a * (np.outer(b, b) + np.outer(c, c)) / (2.0 * area2)


def assemble(mesh, coeff):
    """Stiffness matrix of the form integral of a grad(u).grad(v).

    Local blocks are exactly symmetric and the duplicate summation order
    is the (stable) triangle order, so the assembled matrix is symmetric
    bitwise.
    """
    if mesh.tri_areas.min(initial=np.inf) <= 1e-14:
        raise AssemblyError("degenerate triangle (area below 1e-14)")
    a_t = coefficient_on_triangles(mesh, coeff)
    b, c = _gradients(mesh)
    scale = a_t / (4.0 * mesh.tri_areas)
    blocks = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) * scale[
        :, None, None
    ]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.num_vertices
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_mass(mesh):
    """P1 mass matrix (exact closed form)."""
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    blocks = mesh.tri_areas[:, None, None] * base
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.num_vertices
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_load(mesh, f, degree=4):
    """Load vector b_i = integral of f * phi_i, fixed symmetric rule."""
    bary, w = triangle_rule(degree)
    pts = physical_points(mesh.coords[mesh.triangles], bary)  # (Nt, Q, 2)
    side = mesh.subdomain[:, None]
    vals = np.asarray(f(pts, side), dtype=float)
    if vals.shape != pts.shape[:2]:
        raise AssemblyError("source term returned wrong shape")
    # contribution of quad point q to local dof i is area * w_q * f_q * lam_i(q)
    contrib = mesh.tri_areas[:, None, None] * (vals * w)[:, :, None] * bary[None, :, :]
    local = contrib.sum(axis=1)  # (Nt, 3)
    b = np.zeros(mesh.num_vertices)
    np.add.at(b, mesh.triangles.ravel(), local.ravel())
    return b


def apply_dirichlet(matrix, rhs, mesh, boundary=None):
    """Symmetric elimination of the outer-boundary vertices.

    Constrained values are the nodal interpolation of the boundary data;
    the known columns move to the right-hand side, constrained rows and
    columns are zeroed with a unit diagonal.
    """
    n = mesh.num_vertices
    fixed = mesh.vertex_on_boundary
    free = ~fixed
    if boundary is None:
        gvals = np.zeros(int(fixed.sum()))
    else:
        gvals = np.asarray(boundary(mesh.coords[fixed]), dtype=float)
        gvals = np.broadcast_to(gvals, (int(fixed.sum()),)).copy()
    ubc = np.zeros(n)
    ubc[fixed] = gvals

    b = rhs - matrix @ ubc
    b[fixed] = gvals
    d_free = sp.diags(free.astype(float))
    d_fixed = sp.diags(fixed.astype(float))
    a = d_free @ matrix @ d_free + d_fixed
    return SparseSystem(a.tocsr(), b, mesh, free, ubc)


def solve(system, residual_tol=1e-10):
    """Direct sparse factorization and solve of the constrained system.

    Raises SingularFactorizationError when the factorization is exactly
    singular, produces non-finite values, or leaves a large residual
    (the critical-contrast symptom).
    """
    a = system.matrix.tocsc()
    try:
        lu = spla.splu(a)
        x = lu.solve(system.rhs)
    except RuntimeError as exc:  # SuperLU: "Factor is exactly singular"
        raise SingularFactorizationError(f"sparse factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularFactorizationError("solution contains non-finite values")
    resid = np.linalg.norm(a @ x - system.rhs)
    scale = max(np.linalg.norm(system.rhs), 1e-300)
    if resid / scale > residual_tol:
        raise SingularFactorizationError(
            f"relative residual {resid / scale:.3e} exceeds {residual_tol:.1e}; "
            "system is numerically singular"
        )
    return DiscreteSolution(x, system.mesh.generation)


def solution_gradients(mesh, values):
    """Constant gradient of the P1 field on every triangle, shape (Nt, 2)."""
    b, c = _gradients(mesh)
    u = values[mesh.triangles]
    inv2a = 1.0 / (2.0 * mesh.tri_areas)
    gx = (u * b).sum(axis=1) * inv2a
    gy = (u * c).sum(axis=1) * inv2a
    return np.column_stack([gx, gy])


def _origin_triangles(mesh, tol=1e-14):
    p = mesh.coords[mesh.triangles]
    return (np.hypot(p[..., 0], p[..., 1]) <= tol).any(axis=1)


def _error_sums(mesh, values, exact, tris, degree):
    bary, w = triangle_rule(degree)
    sub = mesh.triangles[tris]
    pts = physical_points(mesh.coords[sub], bary)
    side = mesh.subdomain[tris, None]
    ue = exact.value(pts, side)
    ge = exact.gradient(pts, side)
    uh = values[sub] @ bary.T  # (Nt, Q)
    gh = solution_gradients(mesh, values)[tris]
    diff = ue - uh
    gdiff = ge - gh[:, None, :]
    area = mesh.tri_areas[tris]
    l2 = area * (w * diff**2).sum(axis=1)
    semi = area * (w * (gdiff**2).sum(axis=-1)).sum(axis=1)
    return l2, semi


def compute_errors(mesh, solution, exact, degree=6, origin_degree=10):
    """Elementwise quadrature of the L2 and full H1 errors.

    For the singular solution the triangles touching the origin use a
    higher-order rule; quadrature points are interior so the unbounded
    gradient is never sampled at the singular point itself.
    """
    values = solution.values if isinstance(solution, DiscreteSolution) else solution
    values = np.asarray(values, dtype=float)
    tri_l2 = np.zeros(mesh.num_triangles)
    tri_semi = np.zeros(mesh.num_triangles)
    near = (
        _origin_triangles(mesh)
        if getattr(exact, "kind", "") == "singular" and origin_degree
        else np.zeros(mesh.num_triangles, dtype=bool)
    )
    far = np.flatnonzero(~near)
    if far.size:
        tri_l2[far], tri_semi[far] = _error_sums(mesh, values, exact, far, degree)
    near_ids = np.flatnonzero(near)
    if near_ids.size:
        tri_l2[near_ids], tri_semi[near_ids] = _error_sums(
            mesh, values, exact, near_ids, origin_degree
        )
    l2 = float(np.sqrt(tri_l2.sum()))
    semi = float(np.sqrt(tri_semi.sum()))
    return ErrorNorms(
        l2=l2,
        h1=float(np.sqrt(tri_l2.sum() + tri_semi.sum())),
        h1_semi=semi,
        tri_l2_sq=tri_l2,
        tri_semi_sq=tri_semi,
    )


def build_system(mesh, coeff, source, boundary=None, load_degree=4):
    """Assemble + constrain in one call; returns (raw matrix, system)."""
    a = assemble(mesh, coeff)
    b = assemble_load(mesh, source, degree=load_degree)
    return a, apply_dirichlet(a, b, mesh, boundary)


def dump_system(path, matrix, rhs=None):
    """Coordinate-format text dump of an assembled system, for cross-checks."""
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"matrix {matrix.shape[0]} {matrix.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {float(v)!r}\n")
        if rhs is not None:
            fh.write(f"rhs {len(rhs)}\n")
            for i, v in enumerate(rhs):
                fh.write(f"{i} {float(v)!r}\n")
