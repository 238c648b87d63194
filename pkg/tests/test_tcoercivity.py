import numpy as np
import pytest

from signfem import (
    GEOMETRIES,
    apply_t_operator,
    assemble,
    assemble_mass,
    build_structured_mesh,
    clement_interpolate,
    estimate_kr,
    estimate_kr_and_coercivity,
    harmonic_extension_seminorm,
    lift_trace,
    min_coercivity_eigenvalue,
    refine_uniform,
    verify_coercivity,
)
from signfem.tcoercivity import (
    MirrorSymmetryError,
    lifting_matrix,
    minus_dofs,
    node_sides,
    plus_dofs,
    reflection_matrix,
    subdomain_stiffness,
    t_operator_matrix,
)


def symmetric_mesh(geometry="square", n=4):
    return build_structured_mesh(geometry, n, diagonal="symmetric")


class TestLiftTrace:
    def test_square_closed_form(self):
        lifted = lift_trace("square", lambda x, y: x * (1.0 - x))
        xs = np.array([-0.3, -0.7, 0.0])
        ys = np.array([0.1, -0.5, 0.9])
        np.testing.assert_allclose(lifted(xs, ys), -xs * (1.0 + xs), atol=1e-15)

    def test_square_trace_agreement(self):
        v = lambda x, y: np.cos(y) * (1.0 + x)
        lifted = lift_trace("square", v)
        ys = np.linspace(-1, 1, 11)
        np.testing.assert_allclose(
            lifted(np.zeros_like(ys), ys), v(np.zeros_like(ys), ys), atol=1e-15
        )

    def test_lshape_reverse_of_constant(self):
        lifted = lift_trace("lshape", lambda x, y: np.ones_like(x),
                            direction="minus_to_plus")
        xs = np.array([0.2, 0.9])
        ys = np.array([0.4, 0.1])
        np.testing.assert_allclose(lifted(xs, ys), 1.0)  # 1 + 1 - 1

    def test_nodal_vector_lifting(self):
        mesh = symmetric_mesh()
        values = np.cos(mesh.coords[:, 0]) * mesh.coords[:, 1]
        lifted = lift_trace(GEOMETRIES["square"], values, mesh=mesh)
        md = minus_dofs(mesh)
        x, y = mesh.coords[md, 0], mesh.coords[md, 1]
        np.testing.assert_allclose(lifted[md], np.cos(-x) * y, atol=1e-14)

    def test_energy_isometry_on_symmetric_mesh(self):
        mesh = symmetric_mesh()
        g = reflection_matrix(mesh, "plus_to_minus")
        s_plus = subdomain_stiffness(mesh, 1)
        s_minus = subdomain_stiffness(mesh, -1)
        rng = np.random.default_rng(7)
        pd = plus_dofs(mesh)
        for _ in range(5):
            v = np.zeros(mesh.num_vertices)
            v[pd] = rng.standard_normal(pd.size)
            rv = g @ v
            ratio = (rv @ (s_minus @ rv)) / (v @ (s_plus @ v))
            assert ratio == pytest.approx(1.0, abs=1e-12)

    def test_requires_mirror_symmetric_mesh(self):
        mesh = build_structured_mesh("square", 4, diagonal="aligned")
        with pytest.raises(MirrorSymmetryError):
            reflection_matrix(mesh, "plus_to_minus")


class TestClement:
    def test_constant_reproduction(self):
        mesh = symmetric_mesh()
        c = 2.5
        out = clement_interpolate(
            mesh, lambda x, y: np.full_like(x, c), lambda x, y: c
        )
        md = minus_dofs(mesh)
        np.testing.assert_allclose(out[md], c, atol=1e-13)
        outer = np.flatnonzero(mesh.vertex_on_boundary)
        assert np.all(out[outer] == 0.0)

    def test_trace_preservation_every_level(self):
        mesh = symmetric_mesh(n=2)
        for _ in range(3):
            in_plus, in_minus = node_sides(mesh)
            sigma = in_plus & in_minus & ~mesh.vertex_on_boundary
            trace = np.sin(3.0 * mesh.coords[:, 1]) + mesh.coords[:, 0]
            out = clement_interpolate(
                mesh, lambda x, y: np.zeros_like(x), trace
            )
            np.testing.assert_array_equal(out[sigma], trace[sigma])
            mesh = refine_uniform(mesh)

    def test_nodal_input_matches_matrix_action(self):
        mesh = symmetric_mesh()
        rng = np.random.default_rng(0)
        pd = plus_dofs(mesh)
        v = np.zeros(mesh.num_vertices)
        v[pd] = rng.standard_normal(pd.size)
        rh = lifting_matrix(mesh, kind="clement")
        reflected = reflection_matrix(mesh, "plus_to_minus") @ v
        out = clement_interpolate(mesh, reflected, reflected)
        np.testing.assert_allclose(out, rh @ v, atol=1e-13)

    def test_stability_ratio_bounded_across_levels(self):
        # |I_h R(phi)|_1 over (||R(phi)||_1 + |phi|_1/2) stays bounded
        mesh0 = symmetric_mesh(n=2)
        fixed = [
            lambda x, y: x * y + 0.3 * x,
            lambda x, y: np.maximum(x, 0.0) * (1.0 - np.abs(y)),
            lambda x, y: (1.0 - np.abs(x)) * (1.0 - np.abs(y)),
        ]
        for shape in fixed:
            mesh = mesh0
            ratios = []
            for _ in range(4):
                v = np.zeros(mesh.num_vertices)
                free = ~mesh.vertex_on_boundary
                v[free] = shape(mesh.coords[free, 0], mesh.coords[free, 1])
                g = reflection_matrix(mesh, "plus_to_minus")
                rh = lifting_matrix(mesh, kind="clement")
                w = g @ v
                ihw = rh @ v
                s_minus = subdomain_stiffness(mesh, -1)
                m = assemble_mass(mesh)
                num = np.sqrt(ihw @ (s_minus @ ihw))
                norm_w = np.sqrt(w @ (s_minus @ w) + w @ (m @ w))
                trace_norm = harmonic_extension_seminorm(mesh, v)
                ratios.append(num / (norm_w + trace_norm))
                mesh = refine_uniform(mesh)
            assert max(ratios) <= 5.0 * min(ratios)
            assert max(ratios) <= 2.0  # sanity: bounded operator


class TestTOperator:
    def test_minus_supported_zero_trace(self):
        mesh = symmetric_mesh()
        in_plus, in_minus = node_sides(mesh)
        interior_minus = in_minus & ~in_plus & ~mesh.vertex_on_boundary
        rng = np.random.default_rng(1)
        v = np.zeros(mesh.num_vertices)
        v[interior_minus] = rng.standard_normal(int(interior_minus.sum()))
        tv = apply_t_operator(mesh, v)
        np.testing.assert_array_equal(tv[interior_minus], -v[interior_minus])
        assert np.all(tv[in_plus] == 0.0)

    def test_interface_values_unchanged(self):
        mesh = symmetric_mesh()
        in_plus, in_minus = node_sides(mesh)
        sigma = in_plus & in_minus & ~mesh.vertex_on_boundary
        rng = np.random.default_rng(2)
        free = ~mesh.vertex_on_boundary
        v = np.zeros(mesh.num_vertices)
        v[free] = rng.standard_normal(int(free.sum()))
        for kind in ("clement", "nodal"):
            tv = apply_t_operator(mesh, v, kind=kind)
            np.testing.assert_allclose(tv[sigma], v[sigma], atol=1e-14)

    def test_involution_with_exact_reflection(self):
        # with the nodal reflection the map is its own inverse, the
        # discrete counterpart of the sign-flip being an isomorphism
        mesh = symmetric_mesh()
        th = t_operator_matrix(mesh, kind="nodal")
        rng = np.random.default_rng(3)
        free = ~mesh.vertex_on_boundary
        for _ in range(5):
            v = np.zeros(mesh.num_vertices)
            v[free] = rng.standard_normal(int(free.sum()))
            w = th @ (th @ v)
            assert np.abs(w - v).max() <= 1e-12


class TestEigenEstimates:
    def test_kr_square_matches_reflection_contrast(self):
        mesh = symmetric_mesh()
        assert estimate_kr(mesh, -0.5, lifting="nodal") == pytest.approx(0.5, abs=1e-8)

    def test_kr_square_reverse_direction(self):
        mesh = symmetric_mesh()
        kr = estimate_kr(mesh, -3.0, lifting="nodal", direction="minus_to_plus")
        assert kr == pytest.approx(1.0 / 3.0, abs=1e-8)

    def test_kr_lshape_triple_reflection_bound(self):
        mesh = symmetric_mesh("lshape", 4)
        kr = estimate_kr(mesh, -0.2, lifting="nodal")
        assert kr <= 0.6 + 1e-8
        assert kr >= 0.5  # nontrivial: the bound is attained

    def test_alpha_positive_across_levels(self):
        mesh = symmetric_mesh(n=2)
        alphas = []
        for _ in range(3):
            kr, alpha = estimate_kr_and_coercivity(mesh, -0.5)
            assert kr == pytest.approx(0.5, abs=1e-8)
            assert alpha > 0.0
            alphas.append(alpha)
            mesh = refine_uniform(mesh)
        assert min(alphas) >= 0.5 * alphas[0]

    def test_alpha_degenerates_at_critical_contrast(self):
        mesh = symmetric_mesh()
        assert min_coercivity_eigenvalue(mesh, -1.0) <= 1e-8

    def test_rejects_zero_mu(self):
        with pytest.raises(ValueError):
            estimate_kr(symmetric_mesh(n=2), 0.0)


class TestHarmonicExtension:
    def test_minimal_energy_among_extensions(self):
        mesh = symmetric_mesh()
        v = np.zeros(mesh.num_vertices)
        free = ~mesh.vertex_on_boundary
        v[free] = np.sin(2.0 * mesh.coords[free, 1]) * (1.0 + mesh.coords[free, 0])
        best = harmonic_extension_seminorm(mesh, v)
        s_minus = subdomain_stiffness(mesh, -1)
        g = reflection_matrix(mesh, "plus_to_minus")
        rh = lifting_matrix(mesh, kind="clement")
        for other in (g @ v, rh @ v):
            energy = np.sqrt(other @ (s_minus @ other))
            assert best <= energy + 1e-12


class TestVerifyDriver:
    def test_square_report_rows(self):
        rows = verify_coercivity("square", -0.5, levels=2, initial_n=2)
        assert len(rows) == 2
        for r in rows:
            assert r["pass_kr"] and r["pass_alpha"]
            assert r["kr_expected"] == 0.5

    def test_lshape_report(self):
        rows = verify_coercivity("lshape", -0.2, levels=1, initial_n=2)
        assert rows[0]["kr_expected"] == pytest.approx(0.6)
        assert rows[0]["pass_kr"]
