"""Conforming triangulations of two-subdomain interface geometries.

The two benchmark geometries partition the square (-1,1)^2:

* ``SymmetricSquare``: the right half-plane part (x > 0) carries the
  positive coefficient, the left half the negative one; the interface
  is the segment {0} x (-1,1).
* ``LShapedInterface``: the positive subdomain is the quadrant (0,1)^2,
  the rest of the square is negative; the interface is the L formed by
  {0} x (0,1) and (0,1) x {0}.

Triangles are stored as ordered vertex triples (v0, v1, v2) with
positive signed area; the edge (v0, v1) is the triangle's refinement
edge for newest-vertex bisection.  Structured meshes pick the cell
diagonal according to the quadrant so the triangulation is invariant
under both axis reflections, which the trace-lifting machinery needs.

A finished mesh is immutable (arrays are frozen) and safe to share.
"""

from __future__ import annotations

import numpy as np

GEOM_TOL = 1e-10


class MeshError(ValueError):
    """Inconsistent mesh input or operation."""


class SymmetricSquare:
    """Square split by the vertical line x = 0."""

    name = "square"

    def side_of(self, x, y):
        return np.where(np.asarray(x) > 0.0, 1, -1).astype(np.int8)

    def on_boundary(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return (np.abs(np.abs(x) - 1.0) <= GEOM_TOL) | (
            np.abs(np.abs(y) - 1.0) <= GEOM_TOL
        )

    def on_interface(self, x, y):
        return np.abs(np.asarray(x)) <= GEOM_TOL

    def in_closure(self, side, x, y):
        if side > 0:
            return np.asarray(x) >= -GEOM_TOL
        return np.asarray(x) <= GEOM_TOL

    # reflections used by the trace liftings
    def mirror_into_minus(self, x, y):
        return -x, y

    def minus_lifting_terms(self):
        """Lifting of plus-side functions onto the minus side."""
        return ((1.0, lambda x, y: (-x, y)),)

    def plus_lifting_terms(self):
        """Reverse lifting, minus side onto the plus side."""
        return ((1.0, lambda x, y: (-x, y)),)


class LShapedInterface:
    """Square with the positive subdomain (0,1)^2."""

    name = "lshape"

    def side_of(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return np.where((x > 0.0) & (y > 0.0), 1, -1).astype(np.int8)

    def on_boundary(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return (np.abs(np.abs(x) - 1.0) <= GEOM_TOL) | (
            np.abs(np.abs(y) - 1.0) <= GEOM_TOL
        )

    def on_interface(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        on_vert = (np.abs(x) <= GEOM_TOL) & (y >= -GEOM_TOL) & (y <= 1.0 + GEOM_TOL)
        on_horiz = (np.abs(y) <= GEOM_TOL) & (x >= -GEOM_TOL) & (x <= 1.0 + GEOM_TOL)
        return on_vert | on_horiz

    def in_closure(self, side, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        if side > 0:
            return (x >= -GEOM_TOL) & (y >= -GEOM_TOL)
        return (x <= GEOM_TOL) | (y <= GEOM_TOL)

    def mirror_into_minus(self, x, y):
        # every minus-side point maps back into the closed quadrant [0,1]^2
        return np.abs(x), np.abs(y)

    def minus_lifting_terms(self):
        return ((1.0, lambda x, y: (np.abs(x), np.abs(y))),)

    def plus_lifting_terms(self):
        return (
            (1.0, lambda x, y: (-x, y)),
            (1.0, lambda x, y: (x, -y)),
            (-1.0, lambda x, y: (-x, -y)),
        )


GEOMETRIES = {"square": SymmetricSquare(), "lshape": LShapedInterface()}


class Mesh:
    """Conforming triangulation with subdomain tags and edge adjacency."""

    def __init__(
        self,
        coords,
        triangles,
        subdomain,
        on_boundary,
        on_interface,
        geometry=None,
        generation=0,
        parent=None,
        check=True,
    ):
        self.coords = np.ascontiguousarray(coords, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.subdomain = np.ascontiguousarray(subdomain, dtype=np.int8)
        self.vertex_on_boundary = np.ascontiguousarray(on_boundary, dtype=bool)
        self.vertex_on_interface = np.ascontiguousarray(on_interface, dtype=bool)
        self.geometry = geometry
        self.generation = int(generation)
        self.parent = None if parent is None else np.ascontiguousarray(parent, dtype=np.int64)

        self._build_metrics()
        self._build_edges()
        self._build_vertex_patches()
        if check:
            self._check_basic()
        for a in (
            self.coords,
            self.triangles,
            self.subdomain,
            self.vertex_on_boundary,
            self.vertex_on_interface,
        ):
            a.flags.writeable = False

    # -- basic sizes ----------------------------------------------------
    @property
    def num_vertices(self):
        return self.coords.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def num_edges(self):
        return self.edge_vertices.shape[0]

    def __repr__(self):
        return (
            f"Mesh(gen={self.generation}, vertices={self.num_vertices}, "
            f"triangles={self.num_triangles}, edges={self.num_edges})"
        )

    # -- construction helpers --------------------------------------------
    def _build_metrics(self):
        p = self.coords[self.triangles]  # (Nt, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        self.tri_areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        sides = np.stack(
            [
                np.hypot(*(p[:, 1] - p[:, 0]).T),
                np.hypot(*(p[:, 2] - p[:, 1]).T),
                np.hypot(*(p[:, 0] - p[:, 2]).T),
            ],
            axis=1,
        )
        self.tri_diameters = sides.max(axis=1)
        perim = sides.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.tri_inradius_diam = 4.0 * self.tri_areas / perim
        self.tri_areas.flags.writeable = False
        self.tri_diameters.flags.writeable = False
        self.tri_inradius_diam.flags.writeable = False

    def _build_edges(self):
        tris = self.triangles
        raw = np.stack(
            [tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=1
        ).reshape(-1, 2)
        key = np.sort(raw, axis=1)
        uniq, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        self.edge_vertices = uniq
        self.tri_edges = inverse.reshape(-1, 3)

        counts = np.bincount(inverse, minlength=len(uniq))
        if counts.max(initial=0) > 2:
            raise MeshError("edge shared by more than two triangles")
        order = np.argsort(inverse, kind="stable")
        tri_of = order // 3
        starts = np.concatenate([[0], np.cumsum(counts)])
        edge_tris = np.full((len(uniq), 2), -1, dtype=np.int64)
        edge_tris[:, 0] = tri_of[starts[:-1]]
        has_two = counts == 2
        edge_tris[has_two, 1] = tri_of[starts[:-1][has_two] + 1]
        self.edge_tris = edge_tris

        pa = self.coords[uniq[:, 0]]
        pb = self.coords[uniq[:, 1]]
        tang = pb - pa
        self.edge_lengths = np.hypot(tang[:, 0], tang[:, 1])
        normals = np.column_stack([tang[:, 1], -tang[:, 0]])
        self.edge_normals = normals / self.edge_lengths[:, None]
        for a in (
            self.edge_vertices,
            self.tri_edges,
            self.edge_tris,
            self.edge_lengths,
            self.edge_normals,
        ):
            a.flags.writeable = False

    def _build_vertex_patches(self):
        flat = self.triangles.ravel()
        order = np.argsort(flat, kind="stable")
        self._patch_tris = order // 3
        counts = np.bincount(flat, minlength=self.num_vertices)
        self._patch_ptr = np.concatenate([[0], np.cumsum(counts)])
        self._patch_tris.flags.writeable = False
        self._patch_ptr.flags.writeable = False

    def _check_basic(self):
        if self.tri_areas.min(initial=np.inf) <= 0.0:
            raise MeshError("triangle with non-positive signed area")
        if self.geometry is not None:
            g = self.geometry
            for side in (1, -1):
                sel = self.subdomain == side
                verts = np.unique(self.triangles[sel])
                ok = g.in_closure(side, self.coords[verts, 0], self.coords[verts, 1])
                if not np.all(ok):
                    raise MeshError("triangle crosses the interface")

    # -- queries -----------------------------------------------------------
    @property
    def interior_edge_mask(self):
        return self.edge_tris[:, 1] >= 0

    @property
    def interface_edge_mask(self):
        mask = self.interior_edge_mask.copy()
        t0 = self.edge_tris[:, 0]
        t1 = self.edge_tris[:, 1]
        mask[mask] = self.subdomain[t0[mask]] != self.subdomain[t1[mask]]
        return mask

    @property
    def shape_regularity(self):
        return float(np.max(self.tri_diameters / self.tri_inradius_diam))

    def min_angle(self):
        """Smallest interior angle over all triangles, in radians."""
        p = self.coords[self.triangles]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cosang = (u * v).sum(axis=1) / (
                np.hypot(u[:, 0], u[:, 1]) * np.hypot(v[:, 0], v[:, 1])
            )
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return float(np.min(angles))

    def vertex_patch(self, v):
        """Triangle ids containing vertex v (the patch omega_x)."""
        v = int(v)
        if not 0 <= v < self.num_vertices:
            raise ValueError(f"unknown vertex id {v}")
        return self._patch_tris[self._patch_ptr[v] : self._patch_ptr[v + 1]]

    def edge_patch(self, e):
        """Triangle ids containing edge e (the patch omega_e)."""
        e = int(e)
        if not 0 <= e < self.num_edges:
            raise ValueError(f"unknown edge id {e}")
        pair = self.edge_tris[e]
        return pair[pair >= 0]

    def triangle_patch(self, t):
        """Ids of triangles sharing at least a vertex with t (omega_T)."""
        t = int(t)
        if not 0 <= t < self.num_triangles:
            raise ValueError(f"unknown triangle id {t}")
        return np.unique(
            np.concatenate([self.vertex_patch(v) for v in self.triangles[t]])
        )

    def validate(self):
        """Run the mesh-wide invariant checks; raises MeshError on failure."""
        self._check_basic()
        if self.geometry is not None:
            total = self.tri_areas.sum()
            if abs(total - 4.0) > 1e-12 * 4.0:
                raise MeshError(f"triangle areas sum to {total!r}, expected 4")
        # each interior edge: normal is outward for exactly one neighbour
        mids = 0.5 * (
            self.coords[self.edge_vertices[:, 0]] + self.coords[self.edge_vertices[:, 1]]
        )
        cent = self.coords[self.triangles].mean(axis=1)
        inner = self.interior_edge_mask
        for e in np.flatnonzero(inner):
            s = [
                np.dot(self.edge_normals[e], cent[t] - mids[e])
                for t in self.edge_tris[e]
            ]
            if not (min(s) < 0.0 < max(s)):
                raise MeshError(f"edge {e} normal not outward for exactly one side")
        return True


def _from_arrays(coords, triangles, subdomain, geometry, generation=0, parent=None,
                 on_boundary=None, on_interface=None, normalize=True, check=True):
    coords = np.asarray(coords, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64).copy()
    subdomain = np.asarray(subdomain, dtype=np.int8)
    if normalize:
        p = coords[triangles]
        area2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
            p[:, 1, 1] - p[:, 0, 1]
        ) * (p[:, 2, 0] - p[:, 0, 0])
        flip = area2 < 0
        triangles[flip] = triangles[flip][:, [1, 0, 2]]
        # rotate so the longest edge sits in the (v0, v1) slot
        p = coords[triangles]
        sides = np.stack(
            [
                np.hypot(*(p[:, 1] - p[:, 0]).T),
                np.hypot(*(p[:, 2] - p[:, 1]).T),
                np.hypot(*(p[:, 0] - p[:, 2]).T),
            ],
            axis=1,
        )
        slot = sides.argmax(axis=1)
        for s, perm in ((1, [1, 2, 0]), (2, [2, 0, 1])):
            sel = slot == s
            triangles[sel] = triangles[sel][:, perm]
    if on_boundary is None or on_interface is None:
        if geometry is None:
            raise MeshError("vertex flags required when no geometry is given")
        x, y = coords[:, 0], coords[:, 1]
        on_boundary = geometry.on_boundary(x, y)
        on_interface = geometry.on_interface(x, y)
    return Mesh(
        coords,
        triangles,
        subdomain,
        on_boundary,
        on_interface,
        geometry=geometry,
        generation=generation,
        parent=parent,
        check=check,
    )


def from_arrays(coords, triangles, subdomain, geometry=None,
                on_boundary=None, on_interface=None):
    """Build a mesh from raw arrays; fixes orientation and base edges."""
    return _from_arrays(
        coords, triangles, subdomain, geometry,
        on_boundary=on_boundary, on_interface=on_interface,
    )


def build_structured_mesh(geometry, n, diagonal="aligned"):
    """Structured mesh of (-1,1)^2 with n cells per unit side.

    Every grid cell is split by one diagonal.  With diagonal="aligned"
    all diagonals run bottom-left to top-right (the plain cartesian
    grid the reported tables were computed on).  With
    diagonal="symmetric" the direction follows the quadrant sign, which
    makes the triangulation invariant under both axis reflections; the
    trace-lifting verifiers require this variant.  Vertex count is
    (2n+1)^2 either way.
    """
    if isinstance(geometry, str):
        geometry = GEOMETRIES[geometry]
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if diagonal not in ("aligned", "symmetric"):
        raise ValueError(f"unknown diagonal convention {diagonal!r}")
    w = 2 * n + 1
    axis = (np.arange(w, dtype=float) - n) / n  # exactly symmetric about 0
    xs, ys = np.meshgrid(axis, axis, indexing="xy")
    coords = np.column_stack([xs.ravel(), ys.ravel()])

    ix, iy = np.meshgrid(np.arange(2 * n), np.arange(2 * n), indexing="xy")
    ix = ix.ravel()
    iy = iy.ravel()
    bl = iy * w + ix
    br = bl + 1
    tl = bl + w
    tr = tl + 1
    cx = 0.5 * (axis[ix] + axis[ix + 1])
    cy = 0.5 * (axis[iy] + axis[iy + 1])
    if diagonal == "aligned":
        main = np.ones(bl.size, dtype=bool)  # all bottom-left -> top-right
    else:
        main = cx * cy > 0

    tris = np.empty((bl.size, 2, 3), dtype=np.int64)
    tris[main, 0] = np.column_stack([tr, bl, br])[main]
    tris[main, 1] = np.column_stack([bl, tr, tl])[main]
    flip = ~main
    tris[flip, 0] = np.column_stack([br, tl, bl])[flip]
    tris[flip, 1] = np.column_stack([tl, br, tr])[flip]
    triangles = tris.reshape(-1, 3)
    subdomain = np.repeat(geometry.side_of(cx, cy), 2)

    return _from_arrays(
        coords, triangles, subdomain, geometry, generation=0, normalize=False
    )


def _propagate_flags(mesh, split_edges):
    """Vertex flags for midpoints of the given edges.

    A midpoint is on the outer boundary iff the edge is a boundary edge,
    and on the interface iff the edge separates the two subdomains.
    """
    on_b = mesh.edge_tris[split_edges, 1] < 0
    t0 = mesh.edge_tris[split_edges, 0]
    t1 = mesh.edge_tris[split_edges, 1]
    on_i = (~on_b) & (mesh.subdomain[t0] != mesh.subdomain[np.maximum(t1, 0)])
    return on_b, on_i


def refine_uniform(mesh):
    """Red refinement: every triangle split into four similar children."""
    nv = mesh.num_vertices
    mids = 0.5 * (
        mesh.coords[mesh.edge_vertices[:, 0]] + mesh.coords[mesh.edge_vertices[:, 1]]
    )
    coords = np.vstack([mesh.coords, mids])
    all_edges = np.arange(mesh.num_edges)
    nb, ni = _propagate_flags(mesh, all_edges)
    on_boundary = np.concatenate([mesh.vertex_on_boundary, nb])
    on_interface = np.concatenate([mesh.vertex_on_interface, ni])

    a, b, c = mesh.triangles.T
    mab = nv + mesh.tri_edges[:, 0]
    mbc = nv + mesh.tri_edges[:, 1]
    mca = nv + mesh.tri_edges[:, 2]
    children = np.empty((mesh.num_triangles, 4, 3), dtype=np.int64)
    children[:, 0] = np.column_stack([a, mab, mca])
    children[:, 1] = np.column_stack([mab, b, mbc])
    children[:, 2] = np.column_stack([mca, mbc, c])
    children[:, 3] = np.column_stack([mbc, mca, mab])
    triangles = children.reshape(-1, 3)
    subdomain = np.repeat(mesh.subdomain, 4)
    parent = np.repeat(np.arange(mesh.num_triangles), 4)

    return Mesh(
        coords,
        triangles,
        subdomain,
        on_boundary,
        on_interface,
        geometry=mesh.geometry,
        generation=mesh.generation + 1,
        parent=parent,
    )


def refine_marked(mesh, marked):
    """Newest-vertex bisection of the marked triangles, with closure.

    All marked triangles are bisected at least once; hanging nodes are
    removed by recursively forcing the refinement edge of any triangle
    that lost an edge.  Minimal angles stay bounded below in terms of
    the initial mesh only.
    """
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.num_triangles:
        raise MeshError("marked set contains unknown triangle ids")

    split = np.zeros(mesh.num_edges, dtype=bool)
    split[mesh.tri_edges[marked, 0]] = True
    while True:
        any_split = split[mesh.tri_edges].any(axis=1)
        need = any_split & ~split[mesh.tri_edges[:, 0]]
        if not need.any():
            break
        split[mesh.tri_edges[need, 0]] = True

    split_ids = np.flatnonzero(split)
    new_vid = np.full(mesh.num_edges, -1, dtype=np.int64)
    new_vid[split_ids] = mesh.num_vertices + np.arange(split_ids.size)
    mids = 0.5 * (
        mesh.coords[mesh.edge_vertices[split_ids, 0]]
        + mesh.coords[mesh.edge_vertices[split_ids, 1]]
    )
    coords = np.vstack([mesh.coords, mids])
    nb, ni = _propagate_flags(mesh, split_ids)
    on_boundary = np.concatenate([mesh.vertex_on_boundary, nb])
    on_interface = np.concatenate([mesh.vertex_on_interface, ni])

    tri_rows = []
    sub_rows = []
    parent_rows = []
    tris = mesh.triangles
    tedges = mesh.tri_edges
    for t in range(mesh.num_triangles):
        a, b, c = tris[t]
        e0, e1, e2 = tedges[t]
        tag = mesh.subdomain[t]
        if not split[e0]:
            out = ((a, b, c),)
        else:
            m0 = new_vid[e0]
            left = ((c, a, m0),)  # child owning parent edge (c, a)
            if split[e2]:
                m2 = new_vid[e2]
                left = ((m0, c, m2), (a, m0, m2))
            right = ((b, c, m0),)  # child owning parent edge (b, c)
            if split[e1]:
                m1 = new_vid[e1]
                right = ((m0, b, m1), (c, m0, m1))
            out = left + right
        tri_rows.extend(out)
        sub_rows.extend([tag] * len(out))
        parent_rows.extend([t] * len(out))

    return Mesh(
        coords,
        np.array(tri_rows, dtype=np.int64),
        np.array(sub_rows, dtype=np.int8),
        on_boundary,
        on_interface,
        geometry=mesh.geometry,
        generation=mesh.generation + 1,
        parent=np.array(parent_rows, dtype=np.int64),
    )


# -- plain-text export/import ------------------------------------------------

_SIDE_NAMES = {1: "plus", -1: "minus"}
_SIDE_VALUES = {"plus": 1, "minus": -1}


def write_mesh(mesh, path):
    """Write the mesh in the plain-text exchange format."""
    lines = [
        f"vertices {mesh.num_vertices} triangles {mesh.num_triangles} "
        f"edges {mesh.num_edges}"
    ]
    for i in range(mesh.num_vertices):
        x, y = mesh.coords[i]
        lines.append(
            f"v {i} {float(x)!r} {float(y)!r} {int(mesh.vertex_on_boundary[i])} "
            f"{int(mesh.vertex_on_interface[i])}"
        )
    for t in range(mesh.num_triangles):
        v0, v1, v2 = mesh.triangles[t]
        lines.append(f"t {t} {v0} {v1} {v2} {_SIDE_NAMES[int(mesh.subdomain[t])]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path, geometry=None):
    """Read a mesh written by `write_mesh`; edges are rebuilt and checked."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[0] != "vertices":
            raise MeshError(f"bad mesh header in {path}")
        nv, nt, ne = int(header[1]), int(header[3]), int(header[5])
        coords = np.empty((nv, 2))
        on_b = np.empty(nv, dtype=bool)
        on_i = np.empty(nv, dtype=bool)
        tris = np.empty((nt, 3), dtype=np.int64)
        sub = np.empty(nt, dtype=np.int8)
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                i = int(parts[1])
                coords[i] = (float(parts[2]), float(parts[3]))
                on_b[i] = bool(int(parts[4]))
                on_i[i] = bool(int(parts[5]))
            elif parts[0] == "t":
                t = int(parts[1])
                tris[t] = (int(parts[2]), int(parts[3]), int(parts[4]))
                sub[t] = _SIDE_VALUES[parts[5]]
            else:
                raise MeshError(f"unexpected record {parts[0]!r} in {path}")
    mesh = _from_arrays(
        coords, tris, sub, geometry,
        on_boundary=on_b, on_interface=on_i, normalize=False,
    )
    if mesh.num_edges != ne:
        raise MeshError(
            f"edge count mismatch on import: header {ne}, rebuilt {mesh.num_edges}"
        )
    return mesh
