import numpy as np
import pytest

from signfem import (
    GEOMETRIES,
    MeshError,
    build_structured_mesh,
    from_arrays,
    read_mesh,
    refine_marked,
    refine_uniform,
    write_mesh,
)


def test_structured_counts_n8():
    mesh = build_structured_mesh("square", 8)
    assert mesh.num_vertices == 289
    assert mesh.num_triangles == 512


def test_structured_counts_n1():
    mesh = build_structured_mesh("square", 1)
    assert (mesh.num_vertices, mesh.num_triangles, mesh.num_edges) == (9, 8, 16)


def test_rejects_n0():
    with pytest.raises(ValueError):
        build_structured_mesh("square", 0)


def test_lshape_partition_alignment():
    mesh = build_structured_mesh("lshape", 2)
    for t in range(mesh.num_triangles):
        pts = mesh.coords[mesh.triangles[t]]
        in_plus_closure = np.all(pts[:, 0] >= -1e-12) and np.all(pts[:, 1] >= -1e-12)
        if in_plus_closure:
            assert mesh.subdomain[t] == 1
        else:
            assert mesh.subdomain[t] == -1


@pytest.mark.parametrize("geometry", ["square", "lshape"])
@pytest.mark.parametrize("diagonal", ["aligned", "symmetric"])
def test_structured_validates(geometry, diagonal):
    mesh = build_structured_mesh(geometry, 3, diagonal=diagonal)
    assert mesh.validate()


def test_area_sum():
    mesh = build_structured_mesh("square", 5)
    assert abs(mesh.tri_areas.sum() - 4.0) <= 1e-12 * 4.0


def test_conformity_interior_edges():
    mesh = build_structured_mesh("lshape", 3)
    counts = (mesh.edge_tris >= 0).sum(axis=1)
    assert set(counts.tolist()) == {1, 2}
    # boundary edges lie on the outer boundary
    b_edges = counts == 1
    mids = 0.5 * (
        mesh.coords[mesh.edge_vertices[:, 0]] + mesh.coords[mesh.edge_vertices[:, 1]]
    )
    on_gamma = np.maximum(np.abs(mids[:, 0]), np.abs(mids[:, 1])) > 1.0 - 1e-12
    assert np.array_equal(b_edges, on_gamma)


def test_interface_is_union_of_edges():
    mesh = build_structured_mesh("lshape", 2)
    iface = mesh.interface_edge_mask
    mids = 0.5 * (
        mesh.coords[mesh.edge_vertices[iface, 0]]
        + mesh.coords[mesh.edge_vertices[iface, 1]]
    )
    geom = GEOMETRIES["lshape"]
    assert np.all(geom.on_interface(mids[:, 0], mids[:, 1]))
    # total interface length: two unit segments
    assert abs(mesh.edge_lengths[iface].sum() - 2.0) < 1e-12


def test_refine_uniform_counts_and_h():
    mesh = build_structured_mesh("square", 1)
    fine = refine_uniform(mesh)
    assert fine.num_triangles == 32
    assert fine.tri_diameters.max() == mesh.tri_diameters.max() / 2.0
    assert fine.generation == mesh.generation + 1
    assert abs(fine.shape_regularity - mesh.shape_regularity) < 1e-12
    assert fine.validate()


def test_refine_uniform_subdomain_and_flags():
    mesh = build_structured_mesh("square", 2)
    fine = refine_uniform(mesh)
    geom = GEOMETRIES["square"]
    assert np.array_equal(
        fine.vertex_on_interface, geom.on_interface(fine.coords[:, 0], fine.coords[:, 1])
    )
    assert np.array_equal(
        fine.vertex_on_boundary, geom.on_boundary(fine.coords[:, 0], fine.coords[:, 1])
    )
    cent = fine.coords[fine.triangles].mean(axis=1)
    assert np.array_equal(fine.subdomain, geom.side_of(cent[:, 0], cent[:, 1]))


def test_refine_marked_empty_is_identity():
    mesh = build_structured_mesh("square", 2)
    assert refine_marked(mesh, []) is mesh


def test_refine_marked_all():
    mesh = build_structured_mesh("square", 2)
    fine = refine_marked(mesh, range(mesh.num_triangles))
    counts = np.bincount(fine.parent, minlength=mesh.num_triangles)
    assert counts.min() >= 2
    assert fine.validate()


def test_refine_marked_rejects_unknown_ids():
    mesh = build_structured_mesh("square", 2)
    with pytest.raises(MeshError):
        refine_marked(mesh, [mesh.num_triangles + 3])


def test_bisection_min_angle_bound():
    # ten successive random markings; exhaustive angle scan per generation
    rng = np.random.default_rng(42)
    mesh = build_structured_mesh("square", 2)
    angle0 = mesh.min_angle()
    for _ in range(10):
        marked = rng.choice(
            mesh.num_triangles, size=max(1, mesh.num_triangles // 8), replace=False
        )
        mesh = refine_marked(mesh, marked)
        assert mesh.validate()
        assert mesh.min_angle() >= angle0 / 2.0 - 1e-12


def test_bisection_children_contained_in_parent():
    mesh = build_structured_mesh("lshape", 2)
    rng = np.random.default_rng(3)
    fine = refine_marked(mesh, rng.choice(mesh.num_triangles, 10, replace=False))
    bary = np.array([[1 / 3, 1 / 3, 1 / 3], [0.98, 0.01, 0.01], [0.01, 0.98, 0.01]])
    for child in range(fine.num_triangles):
        pts = bary @ fine.coords[fine.triangles[child]]
        parent = mesh.coords[mesh.triangles[fine.parent[child]]]
        # barycentric coordinates of pts w.r.t. the parent must be in [0,1]
        mat = np.column_stack([parent[1] - parent[0], parent[2] - parent[0]])
        lam = np.linalg.solve(mat, (pts - parent[0]).T).T
        full = np.column_stack([1.0 - lam.sum(axis=1), lam])
        assert np.all(full >= -1e-12)


def test_vertex_patch_valence():
    mesh = build_structured_mesh("square", 2)  # aligned diagonals: valence 6 inside
    interior = ~mesh.vertex_on_boundary
    for v in np.flatnonzero(interior):
        assert len(mesh.vertex_patch(v)) == 6


def test_edge_patch_sizes():
    mesh = build_structured_mesh("square", 2)
    for e in range(mesh.num_edges):
        expected = 2 if mesh.interior_edge_mask[e] else 1
        assert len(mesh.edge_patch(e)) == expected


def test_triangle_patch_brute_force():
    mesh = build_structured_mesh("square", 1)
    # corner triangle: compare against a scan over all triangles
    for t in range(mesh.num_triangles):
        mine = set(mesh.triangle_patch(t).tolist())
        verts = set(mesh.triangles[t].tolist())
        brute = {
            s
            for s in range(mesh.num_triangles)
            if verts & set(mesh.triangles[s].tolist())
        }
        assert mine == brute


def test_patch_unknown_ids():
    mesh = build_structured_mesh("square", 1)
    with pytest.raises(ValueError):
        mesh.vertex_patch(mesh.num_vertices)
    with pytest.raises(ValueError):
        mesh.edge_patch(-1 - mesh.num_edges)
    with pytest.raises(ValueError):
        mesh.triangle_patch(999)


def test_edge_normals_unit_and_outward():
    mesh = build_structured_mesh("lshape", 2)
    norms = np.hypot(mesh.edge_normals[:, 0], mesh.edge_normals[:, 1])
    assert np.allclose(norms, 1.0, atol=1e-14)
    assert mesh.validate()  # includes the outward-for-exactly-one-side check


def test_mesh_immutability():
    mesh = build_structured_mesh("square", 1)
    with pytest.raises(ValueError):
        mesh.coords[0, 0] = 99.0


def test_export_import_roundtrip(tmp_path):
    mesh = refine_marked(build_structured_mesh("lshape", 2), [0, 5, 17])
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    back = read_mesh(path, geometry=GEOMETRIES["lshape"])
    assert np.array_equal(back.coords, mesh.coords)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.subdomain, mesh.subdomain)
    assert np.array_equal(back.vertex_on_boundary, mesh.vertex_on_boundary)
    assert np.array_equal(back.vertex_on_interface, mesh.vertex_on_interface)
    assert back.num_edges == mesh.num_edges


def test_import_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("nonsense 1 2 3\n")
    with pytest.raises(MeshError):
        read_mesh(path)


def test_import_rejects_edge_count_mismatch(tmp_path):
    mesh = build_structured_mesh("square", 1)
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    text = path.read_text().splitlines()
    text[0] = "vertices 9 triangles 8 edges 15"
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(MeshError):
        read_mesh(path)


def test_from_arrays_normalizes_orientation_and_base():
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = from_arrays(
        coords,
        [[0, 2, 1]],  # negatively oriented on purpose
        [1],
        on_boundary=np.ones(3, bool),
        on_interface=np.zeros(3, bool),
    )
    assert mesh.tri_areas[0] > 0
    v0, v1, _ = mesh.triangles[0]
    base = np.linalg.norm(coords[v0] - coords[v1])
    assert base == pytest.approx(np.sqrt(2.0))  # hypotenuse in the base slot
