"""Executable well-posedness machinery: trace liftings, the modified
Clement operator, the discrete sign-flipping map, and eigenvalue
estimates of the lifting contrast and the discrete coercivity constant.

The liftings are the reflections of the two benchmark geometries.  On
the structured meshes (which are invariant under the reflections) the
nodal reflection of a P1 function is again P1, so those liftings are
exact isometries of the H1 seminorm; the production lifting composes a
reflection with the patch-average interpolation, which takes exact
point values at interface nodes so the trace is preserved nodally.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .assembly import assemble, assemble_mass, coefficient_on_triangles
from .mesh import GEOMETRIES
from .quadrature import physical_points, triangle_rule


class MirrorSymmetryError(ValueError):
    """The mesh is not invariant under the geometry's reflections."""


class EigenSolveError(RuntimeError):
    """Dense/iterative eigensolver failed to converge."""


# -- node classification -----------------------------------------------------

def node_sides(mesh):
    """Boolean masks (in_plus_closure, in_minus_closure) by adjacency."""
    in_plus = np.zeros(mesh.num_vertices, dtype=bool)
    in_minus = np.zeros(mesh.num_vertices, dtype=bool)
    in_plus[np.unique(mesh.triangles[mesh.subdomain > 0])] = True
    in_minus[np.unique(mesh.triangles[mesh.subdomain < 0])] = True
    return in_plus, in_minus


def plus_dofs(mesh):
    """Nodes of the plus closure not on the outer boundary."""
    in_plus, _ = node_sides(mesh)
    return np.flatnonzero(in_plus & ~mesh.vertex_on_boundary)


def minus_dofs(mesh):
    """The set N_minus: interior nodes in the minus closure."""
    _, in_minus = node_sides(mesh)
    return np.flatnonzero(in_minus & ~mesh.vertex_on_boundary)


def _vertex_lookup(mesh):
    return {
        (round(x, 12), round(y, 12)): i for i, (x, y) in enumerate(mesh.coords)
    }


def _lookup(table, x, y, what):
    out = np.empty(len(x), dtype=np.int64)
    for i, (xi, yi) in enumerate(zip(x, y)):
        key = (round(float(xi), 12), round(float(yi), 12))
        if key not in table:
            raise MirrorSymmetryError(
                f"{what}: reflected point {key} is not a mesh vertex; "
                "mesh is not mirror-symmetric"
            )
        out[i] = table[key]
    return out


def _check_triangle_symmetry(mesh, table, terms, target_side):
    """Each target-side triangle must map onto a mesh triangle under
    every reflection term; otherwise the reflected P1 function is not
    P1 on the target triangulation."""
    tri_set = {frozenset(t) for t in mesh.triangles.tolist()}
    sel = mesh.subdomain == target_side
    pts = mesh.coords[mesh.triangles[sel]]
    for _, mapping in terms:
        sx, sy = mapping(pts[..., 0], pts[..., 1])
        ids = _lookup(
            table, sx.ravel(), sy.ravel(), "triangle symmetry"
        ).reshape(-1, 3)
        for triple in ids:
            if frozenset(triple.tolist()) not in tri_set:
                raise MirrorSymmetryError(
                    "reflected triangle is not part of the mesh; build the "
                    'mesh with diagonal="symmetric" for the lifting checks'
                )


def reflection_matrix(mesh, direction="plus_to_minus"):
    """Nodal reflection lifting as a sparse matrix over all vertices.

    Rows are the target-side interior nodes; each row combines the
    source values at the mirrored vertices with the geometry's
    coefficients.  Requires a mesh invariant under the reflections at
    the triangle level.
    """
    geom = mesh.geometry
    if geom is None:
        raise MirrorSymmetryError("mesh carries no geometry tag")
    table = _vertex_lookup(mesh)
    n = mesh.num_vertices
    if direction == "plus_to_minus":
        targets = minus_dofs(mesh)
        terms = geom.minus_lifting_terms()
        _check_triangle_symmetry(mesh, table, terms, -1)
    elif direction == "minus_to_plus":
        targets = plus_dofs(mesh)
        terms = geom.plus_lifting_terms()
        _check_triangle_symmetry(mesh, table, terms, 1)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    x = mesh.coords[targets, 0]
    y = mesh.coords[targets, 1]
    rows, cols, vals = [], [], []
    for coef, mapping in terms:
        sx, sy = mapping(x, y)
        src = _lookup(table, sx, sy, direction)
        rows.append(targets)
        cols.append(src)
        vals.append(np.full(targets.size, coef))
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()


def clement_weight_matrix(mesh):
    """The patch-average interpolation onto the minus-side P1 space.

    Interior minus nodes receive the patch mean of the (P1) input;
    interface nodes receive the exact point value; everything else is
    zero, so the output vanishes on the rest of the subdomain boundary.
    (The standard quasi-interpolation would average over the interface
    edge patch at interface nodes instead; taking the point value there
    is what makes the lifted trace match exactly.)
    """
    in_plus, in_minus = node_sides(mesh)
    interface = in_plus & in_minus
    nm = minus_dofs(mesh)
    n = mesh.num_vertices
    rows, cols, vals = [], [], []
    for v in nm:
        if interface[v]:
            rows.append(v)
            cols.append(v)
            vals.append(1.0)
            continue
        patch = mesh.vertex_patch(v)
        areas = mesh.tri_areas[patch]
        total = areas.sum()
        for t, at in zip(patch, areas):
            # exact mean of a P1 function on t is the vertex average
            for node in mesh.triangles[t]:
                rows.append(v)
                cols.append(node)
                vals.append(at / (3.0 * total))
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def lifting_matrix(mesh, kind="clement", direction="plus_to_minus"):
    """Discrete trace lifting: nodal reflection or Clement-composed."""
    g = reflection_matrix(mesh, direction)
    if kind == "nodal":
        return g
    if kind != "clement":
        raise ValueError(f"unknown lifting kind {kind!r}")
    if direction != "plus_to_minus":
        raise ValueError("the Clement-composed lifting targets the minus side")
    return clement_weight_matrix(mesh) @ g


def lift_trace(geometry, v, direction="plus_to_minus", mesh=None):
    """Reflected extension of a function across the interface.

    `v` is either a callable (x, y arrays -> values), in which case a
    callable on the target subdomain is returned, or a nodal vector on
    a mirror-symmetric mesh (pass `mesh`), in which case the reflected
    nodal vector is returned.
    """
    if isinstance(geometry, str):
        geometry = GEOMETRIES[geometry]
    if geometry.name not in GEOMETRIES:
        raise ValueError(f"unsupported geometry {geometry!r}")
    terms = (
        geometry.minus_lifting_terms()
        if direction == "plus_to_minus"
        else geometry.plus_lifting_terms()
    )
    if callable(v):
        def lifted(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            out = 0.0
            for coef, mapping in terms:
                sx, sy = mapping(x, y)
                out = out + coef * v(sx, sy)
            return out

        return lifted
    if mesh is None:
        raise ValueError("a mesh is required to lift a nodal vector")
    g = reflection_matrix(mesh, direction)
    return g @ np.asarray(v, dtype=float)


def clement_interpolate(mesh, w, trace, degree=4):
    """Patch-average interpolation with exact interface point values.

    `w` is a callable on the minus subdomain (e.g. a reflected plus-side
    function) or a nodal vector (treated as P1 on this mesh).  `trace`
    supplies the interface values: a callable or a full nodal vector.
    Returns a nodal vector supported on the interior minus-closure nodes.
    """
    in_plus, in_minus = node_sides(mesh)
    interface = in_plus & in_minus
    nm = minus_dofs(mesh)
    out = np.zeros(mesh.num_vertices)

    minus_tris = np.flatnonzero(mesh.subdomain < 0)
    tri_int = np.zeros(mesh.num_triangles)
    if callable(w):
        bary, wq = triangle_rule(degree)
        pts = physical_points(mesh.coords[mesh.triangles[minus_tris]], bary)
        vals = np.asarray(w(pts[..., 0], pts[..., 1]), dtype=float)
        tri_int[minus_tris] = mesh.tri_areas[minus_tris] * (vals @ wq)
    else:
        wv = np.asarray(w, dtype=float)
        tri_int[minus_tris] = (
            mesh.tri_areas[minus_tris]
            * wv[mesh.triangles[minus_tris]].mean(axis=1)
        )

    for v in nm:
        if interface[v]:
            if callable(trace):
                out[v] = float(trace(mesh.coords[v, 0], mesh.coords[v, 1]))
            else:
                out[v] = float(np.asarray(trace)[v])
            continue
        patch = mesh.vertex_patch(v)
        out[v] = tri_int[patch].sum() / mesh.tri_areas[patch].sum()
    return out


def t_operator_matrix(mesh, kind="clement"):
    """Matrix of the sign-flipping map: identity on the plus side and the
    interface, -I plus twice the lifting on the minus side."""
    in_plus, in_minus = node_sides(mesh)
    pure_minus = in_minus & ~in_plus
    n = mesh.num_vertices
    rh = lifting_matrix(mesh, kind=kind, direction="plus_to_minus")
    d_keep = sp.diags((~pure_minus).astype(float))
    d_minus = sp.diags(pure_minus.astype(float))
    return (d_keep - d_minus + 2.0 * (d_minus @ rh)).tocsr()


def apply_t_operator(mesh, v, kind="clement"):
    """Apply the discrete map: v on the plus side, -v + 2 R_h(v|_Sigma)
    on the minus side; interface nodal values are unchanged."""
    return t_operator_matrix(mesh, kind=kind) @ np.asarray(v, dtype=float)


# -- quadratic forms ---------------------------------------------------------

def subdomain_stiffness(mesh, side):
    """Plain Laplace stiffness restricted to one subdomain's triangles."""
    a = np.where(mesh.subdomain == side, 1.0, 0.0)
    return assemble(mesh, a)


def _dense(m):
    return np.asarray(m.todense())


def _generalized_eig(num, den, which, size_limit=6000):
    """Extreme eigenvalue of the symmetric pencil (num, den), den > 0."""
    n = num.shape[0]
    if n > size_limit:
        raise EigenSolveError(
            f"eigenproblem of size {n} exceeds the dense limit {size_limit}; "
            "use a coarser mesh for the verification run"
        )
    try:
        vals = scipy.linalg.eigh(
            _dense(num), _dense(den), eigvals_only=True,
            subset_by_index=(n - 1, n - 1) if which == "max" else (0, 0),
        )
    except scipy.linalg.LinAlgError as exc:
        raise EigenSolveError(f"dense generalized eigensolve failed: {exc}") from exc
    return float(vals[0])


def estimate_kr(mesh, mu, lifting="nodal", direction="plus_to_minus"):
    """Discrete supremum of the lifting-energy ratio.

    For plus-to-minus the ratio is |mu| |R v|^2 on the minus side over
    |v|^2 on the plus side, maximized over plus-side interior functions;
    the reverse direction swaps the roles and the factor becomes 1/|mu|.
    """
    mu = float(mu)
    if mu == 0.0:
        raise ValueError("mu must be nonzero")
    s_plus = subdomain_stiffness(mesh, 1)
    s_minus = subdomain_stiffness(mesh, -1)
    r = lifting_matrix(mesh, kind=lifting, direction=direction)
    if direction == "plus_to_minus":
        dofs = plus_dofs(mesh)
        num = abs(mu) * (r.T @ s_minus @ r)
        den = s_plus
    else:
        dofs = minus_dofs(mesh)
        num = (1.0 / abs(mu)) * (r.T @ s_plus @ r)
        den = s_minus
    num = num[np.ix_(dofs, dofs)]
    den = den[np.ix_(dofs, dofs)]
    return _generalized_eig(sp.csr_matrix(num), sp.csr_matrix(den), "max")


def min_coercivity_eigenvalue(mesh, mu, lifting="clement"):
    """Smallest eigenvalue of the symmetrized form u -> B(u, T_h u)
    against the H1 inner product, over the interior nodes."""
    from .problem import Coefficient

    a = assemble(mesh, Coefficient(1.0, float(mu)))
    theta = t_operator_matrix(mesh, kind=lifting)
    m = a @ theta
    free = np.flatnonzero(~mesh.vertex_on_boundary)
    m = m[np.ix_(free, free)]
    sym = 0.5 * (m + m.T)
    h = (assemble(mesh, 1.0) + assemble_mass(mesh))[np.ix_(free, free)]
    return _generalized_eig(sp.csr_matrix(sym), sp.csr_matrix(h), "min")


def estimate_kr_and_coercivity(mesh, mu, kr_lifting="nodal", alpha_lifting="clement"):
    """The pair (K_R_h, alpha_min) for one mesh and contrast."""
    kr = estimate_kr(mesh, mu, lifting=kr_lifting)
    alpha = min_coercivity_eigenvalue(mesh, mu, lifting=alpha_lifting)
    return kr, alpha


def harmonic_extension_seminorm(mesh, trace_values):
    """H1 seminorm of the discrete harmonic extension into the minus side.

    This realizes the discrete minimum of the extension energy and
    serves as the computable interface trace norm.
    """
    import scipy.sparse.linalg as spla

    in_plus, in_minus = node_sides(mesh)
    interface = in_plus & in_minus & ~mesh.vertex_on_boundary
    s_minus = subdomain_stiffness(mesh, -1)
    inner = in_minus & ~in_plus & ~mesh.vertex_on_boundary
    idx = np.flatnonzero(inner)
    u = np.zeros(mesh.num_vertices)
    u[interface] = np.asarray(trace_values)[interface]
    if idx.size:
        rhs = -(s_minus[np.ix_(idx, np.flatnonzero(interface))] @ u[interface])
        u[idx] = spla.spsolve(s_minus[np.ix_(idx, idx)].tocsc(), rhs)
    return float(np.sqrt(u @ (s_minus @ u)))


# -- verification driver -----------------------------------------------------

def verify_coercivity(geometry, mu, levels=3, initial_n=2, kr_lifting="nodal"):
    """Run the lifting-contrast and coercivity estimates over refinements.

    Returns a list of per-level dicts with pass/fail against the exact
    reflection bounds (|mu| on the square, 3|mu| on the L-shape) and the
    positivity of the coercivity constant predicted when the bound is
    below one.
    """
    from .mesh import build_structured_mesh, refine_uniform

    if isinstance(geometry, str):
        geometry = GEOMETRIES[geometry]
    expected = abs(mu) if geometry.name == "square" else 3.0 * abs(mu)
    mesh = build_structured_mesh(geometry, initial_n, diagonal="symmetric")
    out = []
    for level in range(levels):
        kr, alpha = estimate_kr_and_coercivity(mesh, mu, kr_lifting=kr_lifting)
        ok_kr = abs(kr - expected) <= 1e-6
        ok_alpha = (alpha > 0.0) if expected < 1.0 else True
        out.append(
            {
                "geometry": geometry.name,
                "mu": float(mu),
                "level": level,
                "dof": mesh.num_vertices,
                "kr": kr,
                "kr_expected": expected,
                "alpha_min": alpha,
                "pass_kr": bool(ok_kr),
                "pass_alpha": bool(ok_alpha),
            }
        )
        if level + 1 < levels:
            mesh = refine_uniform(mesh)
    return out


def write_coercivity_report(path, rows):
    lines = [
        "# geometry mu level dof kr kr_expected alpha_min pass_kr pass_alpha"
    ]
    for r in rows:
        lines.append(
            f"{r['geometry']} {r['mu']!r} {r['level']} {r['dof']} "
            f"{r['kr']:.10e} {r['kr_expected']:.10e} {r['alpha_min']:.10e} "
            f"{'pass' if r['pass_kr'] else 'FAIL'} "
            f"{'pass' if r['pass_alpha'] else 'FAIL'}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
