import math

import numpy as np
import pytest

from epiflow import assembly as fem
from epiflow.linalg import csr_from_triplets, solve_direct
from epiflow.mesh import TriMesh, build_unit_square_mesh


def reference_monomial_integral(a, b):
    """Exact integral of x^a y^b over the reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def single_right_triangle():
    return TriMesh(
        vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        triangles=np.array([[0, 1, 2]]),
        boundary_edges=np.array([[0, 1], [1, 2], [2, 0]]),
        boundary_tags=np.array(["bottom", "right", "left"]),
    )


class TestQuadrature:
    @pytest.mark.parametrize("degree", sorted(fem.QUADRATURE_RULES))
    def test_weights_positive_and_sum_to_area(self, degree):
        rule = fem.QUADRATURE_RULES[degree]
        assert (rule.w > 0).all()
        assert abs(rule.w.sum() - 0.5) <= 1e-14

    @pytest.mark.parametrize("degree", sorted(fem.QUADRATURE_RULES))
    def test_monomial_exactness(self, degree):
        rule = fem.QUADRATURE_RULES[degree]
        lam = rule.lam
        x, y = lam[:, 1], lam[:, 2]  # reference coordinates
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                approx = float((rule.w * x**a * y**b).sum())
                exact = reference_monomial_integral(a, b)
                assert abs(approx - exact) <= 1e-14 * max(1.0, abs(exact)), (degree, a, b)

    def test_rule_selection(self):
        assert fem.quadrature_rule(3).degree == 4
        assert fem.quadrature_rule(6).degree == 6
        with pytest.raises(ValueError):
            fem.quadrature_rule(9)

    def test_partition_of_unity_at_quadrature_points(self):
        mesh = build_unit_square_mesh(3, 3)
        geo = fem._geometry(mesh)
        for degree in (2, 4, 6):
            tab = geo.tables(degree)
            assert np.abs(tab["phi"].sum(axis=1) - 1.0).max() <= 1e-14

    def test_bubble_vanishes_on_edges(self):
        ts = np.linspace(0.0, 1.0, 10)
        for t in ts:
            for lam in ((0.0, t, 1 - t), (t, 0.0, 1 - t), (t, 1 - t, 0.0)):
                val = fem.BUBBLE_SCALE * lam[0] * lam[1] * lam[2]
                assert abs(val) <= 1e-14

    def test_bubble_unit_peak_at_barycenter(self):
        assert fem.BUBBLE_SCALE * (1 / 3) ** 3 == pytest.approx(1.0, rel=1e-14)


class TestDofLayout:
    def test_counts(self):
        mesh = build_unit_square_mesh(4, 4)
        p1 = fem.DofLayout.p1_scalar(mesh)
        mini = fem.DofLayout.mini_velocity(mesh)
        assert p1.dof_count == mesh.n_vertices
        assert mini.dof_count == 2 * (mesh.n_vertices + mesh.n_triangles)
        dofs = np.concatenate([
            mini.vertex_dofs(0), mini.bubble_dofs(0),
            mini.vertex_dofs(1), mini.bubble_dofs(1),
        ])
        assert np.array_equal(np.sort(dofs), np.arange(mini.dof_count))


class TestMass:
    def test_local_mass_single_triangle(self):
        mesh = single_right_triangle()
        m = fem.assemble_mass_p1(mesh).toarray()
        expected = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0
        assert np.allclose(m, expected, atol=1e-15)

    @pytest.mark.parametrize("n", [1, 3, 8])
    def test_entry_sum_is_domain_area(self, n):
        m = fem.assemble_mass_p1(build_unit_square_mesh(n, n))
        assert abs(m.sum() - 1.0) <= 1e-12

    def test_row_sums_are_incident_area_thirds(self):
        mesh = build_unit_square_mesh(3, 2)
        m = fem.assemble_mass_p1(mesh)
        row_sums = np.asarray(m @ np.ones(mesh.n_vertices))
        incident = np.zeros(mesh.n_vertices)
        for tri, area in zip(mesh.triangles, mesh.signed_areas()):
            incident[tri] += area / 3.0
        assert np.allclose(row_sums, incident, atol=1e-14)

    def test_spd(self):
        m = fem.assemble_mass_p1(build_unit_square_mesh(5, 5)).toarray()
        assert np.allclose(m, m.T, atol=1e-15)
        np.linalg.cholesky(m)  # raises if not positive definite


class TestStiffness:
    def test_local_stiffness_single_triangle(self):
        mesh = single_right_triangle()
        k = fem.assemble_stiffness_p1(mesh, 1.0).toarray()
        expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
        assert np.allclose(k, expected, atol=1e-15)

    def test_constants_in_kernel(self):
        mesh = build_unit_square_mesh(8, 8)
        k = fem.assemble_stiffness_p1(mesh, 1.0)
        assert np.abs(k @ np.ones(mesh.n_vertices)).max() <= 1e-13

    def test_positive_semidefinite(self):
        k = fem.assemble_stiffness_p1(build_unit_square_mesh(4, 4), 2.0).toarray()
        w = np.linalg.eigvalsh(0.5 * (k + k.T))
        assert w.min() >= -1e-12

    def test_negative_coefficient_rejected(self):
        with pytest.raises(ValueError):
            fem.assemble_stiffness_p1(build_unit_square_mesh(2, 2), -1.0)

    def test_per_element_coefficient_scaling(self):
        mesh = build_unit_square_mesh(3, 3)
        k1 = fem.assemble_stiffness_p1(mesh, 1.0)
        k2 = fem.assemble_stiffness_p1(mesh, np.full(mesh.n_triangles, 2.0))
        assert np.allclose(k2.toarray(), 2.0 * k1.toarray(), atol=1e-14)

    def test_poisson_convergence_rate(self):
        # -lap u = 2 pi^2 sin(pi x) sin(pi y), u = sin(pi x) sin(pi y) on the square
        pi = np.pi
        exact = lambda x, y: np.sin(pi * x) * np.sin(pi * y)
        errors = {}
        for n in (16, 32):
            mesh = build_unit_square_mesh(n, n)
            k = fem.assemble_stiffness_p1(mesh, 1.0)
            b = fem.assemble_p1_load(mesh, lambda x, y: 2 * pi * pi * exact(x, y))
            a, b = fem.apply_dirichlet(k, b, fem.boundary_dofs_scalar(mesh), 0.0)
            u = solve_direct(a, b)
            geo = fem._geometry(mesh)
            tab = geo.tables(6)
            uh = fem.p1_values_at_qp(mesh, u, 6)
            diff = uh - exact(tab["xq"][..., 0], tab["xq"][..., 1])
            errors[n] = np.sqrt((tab["jw"] * diff**2).sum())
        rate = np.log2(errors[16] / errors[32])
        assert rate >= 1.9


class TestReactionWeightedMass:
    def test_zero_weight(self):
        mesh = build_unit_square_mesh(2, 2)
        w = fem.assemble_reaction_weighted_mass(mesh, 0.0)
        assert abs(w.toarray()).max() == 0.0

    def test_unit_weight_equals_mass(self):
        mesh = build_unit_square_mesh(3, 3)
        w = fem.assemble_reaction_weighted_mass(mesh, 1.0)
        m = fem.assemble_mass_p1(mesh)
        assert np.abs((w - m).toarray()).max() <= 1e-13

    def test_constant_weight_scales(self):
        mesh = build_unit_square_mesh(2, 2)
        w = fem.assemble_reaction_weighted_mass(mesh, 2.0)
        m = fem.assemble_mass_p1(mesh)
        assert np.abs((w - 2.0 * m).toarray()).max() <= 1e-13

    def test_linearity_in_weight(self):
        mesh = build_unit_square_mesh(4, 4)
        rng = np.random.default_rng(1)
        w1 = rng.random(mesh.n_vertices)
        w2 = rng.random(mesh.n_vertices)
        lhs = fem.assemble_reaction_weighted_mass(mesh, w1 + w2)
        rhs = (fem.assemble_reaction_weighted_mass(mesh, w1)
               + fem.assemble_reaction_weighted_mass(mesh, w2))
        assert np.abs((lhs - rhs).toarray()).max() <= 1e-12

    def test_non_finite_weight_reports_element(self):
        mesh = build_unit_square_mesh(2, 2)
        w = np.ones((mesh.n_triangles, 6))
        w[3, 2] = np.nan
        with pytest.raises(FloatingPointError, match="element 3"):
            fem.assemble_reaction_weighted_mass(mesh, w)


class TestScalarConvection:
    def test_zero_velocity(self):
        mesh = build_unit_square_mesh(3, 3)
        mini = fem.DofLayout.mini_velocity(mesh)
        c = np.random.default_rng(0).random(mesh.n_vertices)
        b = fem.assemble_scalar_convection(mesh, np.zeros(mini.dof_count), c)
        assert np.abs(b).max() == 0.0

    def test_constant_scalar(self):
        mesh = build_unit_square_mesh(3, 3)
        mini = fem.DofLayout.mini_velocity(mesh)
        u = np.random.default_rng(0).random(mini.dof_count)
        b = fem.assemble_scalar_convection(mesh, u, np.ones(mesh.n_vertices))
        assert np.abs(b).max() <= 1e-14

    def test_unit_velocity_linear_scalar(self):
        # U = (1, 0), C = x: the load reduces to the mass-matrix row sums
        mesh = build_unit_square_mesh(4, 4)
        mini = fem.DofLayout.mini_velocity(mesh)
        u = fem.interpolate(lambda x, y: (np.ones_like(x), np.zeros_like(x)), mini, mesh)
        c = mesh.vertices[:, 0].copy()
        b = fem.assemble_scalar_convection(mesh, u, c)
        m = fem.assemble_mass_p1(mesh)
        assert np.allclose(b, np.asarray(m @ np.ones(mesh.n_vertices)), atol=1e-13)

    def test_layout_mismatch(self):
        mesh = build_unit_square_mesh(2, 2)
        with pytest.raises(ValueError):
            fem.assemble_scalar_convection(mesh, np.zeros(5), np.zeros(mesh.n_vertices))


class TestMomentumBlock:
    def test_zero_lag_symmetric(self):
        mesh = build_unit_square_mesh(3, 3)
        mini = fem.DofLayout.mini_velocity(mesh)
        a = fem.assemble_mini_momentum_block(mesh, 0.5, np.zeros(mini.dof_count), 0.1)
        diff = (a - a.T).toarray()
        assert np.abs(diff).max() <= 1e-13

    def test_large_dt_limit_is_stiffness(self):
        mesh = build_unit_square_mesh(2, 2)
        mini = fem.DofLayout.mini_velocity(mesh)
        a = fem.assemble_mini_momentum_block(mesh, 1.0, np.zeros(mini.dof_count), 1e14)
        k = fem.assemble_mini_stiffness(mesh, 1.0)
        assert np.abs((a - k).toarray()).max() <= 1e-10

    def test_constant_lag_gives_zero_convection(self):
        mesh = build_unit_square_mesh(3, 3)
        mini = fem.DofLayout.mini_velocity(mesh)
        const = fem.interpolate(lambda x, y: (np.full_like(x, 0.7), np.full_like(x, -0.3)),
                                mini, mesh)
        n = fem.assemble_mini_convection(mesh, const)
        assert np.abs(n.toarray()).max() <= 1e-13

    def test_invalid_dt(self):
        mesh = build_unit_square_mesh(2, 2)
        mini = fem.DofLayout.mini_velocity(mesh)
        with pytest.raises(ValueError):
            fem.assemble_mini_momentum_block(mesh, 1.0, np.zeros(mini.dof_count), 0.0)

    def test_fused_equals_sum_of_parts(self):
        mesh = build_unit_square_mesh(3, 3)
        mini = fem.DofLayout.mini_velocity(mesh)
        rng = np.random.default_rng(2)
        lag = rng.standard_normal(mini.dof_count) * 0.1
        dt = 0.05
        fused = fem.assemble_mini_momentum_block(mesh, 0.3, lag, dt)
        parts = (fem.assemble_mini_mass(mesh) * (1.0 / dt)
                 + fem.assemble_mini_stiffness(mesh, 0.3)
                 + fem.assemble_mini_convection(mesh, lag))
        assert np.abs((fused - parts).toarray()).max() <= 1e-12

    def test_nonpositive_viscosity_rejected(self):
        mesh = build_unit_square_mesh(2, 2)
        mini = fem.DofLayout.mini_velocity(mesh)
        with pytest.raises(ValueError):
            fem.assemble_mini_momentum_block(mesh, 0.0, np.zeros(mini.dof_count), 0.1)


def interpolated_vortex(mesh):
    from epiflow.model import _vortex

    mini = fem.DofLayout.mini_velocity(mesh)
    return fem.interpolate(_vortex, mini, mesh)


class TestDivergenceBlock:
    def test_zero_velocity(self):
        mesh = build_unit_square_mesh(3, 3)
        b = fem.assemble_divergence_block(mesh)
        mini = fem.DofLayout.mini_velocity(mesh)
        assert np.abs(b @ np.zeros(mini.dof_count)).max() == 0.0

    def test_uniform_pressure_row_sum_vanishes_for_zero_trace(self):
        # sum over pressure rows of B u equals the boundary flux of u_h,
        # which vanishes when u_h has zero trace
        mesh = build_unit_square_mesh(4, 4)
        b = fem.assemble_divergence_block(mesh)
        u = interpolated_vortex(mesh)
        assert abs(np.ones(mesh.n_vertices) @ (b @ u)) <= 1e-13

    def test_interpolated_divergence_free_field_refinement(self):
        # the vortex is analytically divergence-free; the interpolant's weak
        # divergence must vanish under refinement at first order or better
        residuals = []
        for n in (8, 16, 32):
            mesh = build_unit_square_mesh(n, n)
            b = fem.assemble_divergence_block(mesh)
            res = np.abs(b @ interpolated_vortex(mesh)).max()
            residuals.append(res)
        assert residuals[1] <= 0.55 * residuals[0]
        assert residuals[2] <= 0.55 * residuals[1]


class TestApplyDirichlet:
    def test_empty_set_is_identity_operation(self):
        mesh = build_unit_square_mesh(2, 2)
        k = fem.assemble_stiffness_p1(mesh, 1.0)
        b = np.arange(mesh.n_vertices, dtype=float)
        a2, b2 = fem.apply_dirichlet(k, b, np.array([], dtype=int))
        assert np.abs((a2 - k).toarray()).max() == 0.0
        assert np.array_equal(b2, b)

    def test_all_dofs_constrained_to_zero(self):
        mesh = build_unit_square_mesh(3, 3)
        k = fem.assemble_stiffness_p1(mesh, 1.0) + fem.assemble_mass_p1(mesh)
        b = np.ones(mesh.n_vertices)
        a2, b2 = fem.apply_dirichlet(k, b, np.arange(mesh.n_vertices), 0.0)
        x = solve_direct(a2, b2)
        assert np.abs(x).max() == 0.0

    def test_linear_solution_reproduced_exactly(self):
        # 1D-like Poisson on a strip: ends pinned at 0 and 1 recover u = x
        mesh = build_unit_square_mesh(8, 1)
        k = fem.assemble_stiffness_p1(mesh, 1.0)
        bdofs = fem.boundary_dofs_scalar(mesh)
        values = mesh.vertices[bdofs, 0]
        a, b = fem.apply_dirichlet(k, np.zeros(mesh.n_vertices), bdofs, values)
        u = solve_direct(a, b)
        assert np.allclose(u, mesh.vertices[:, 0], atol=1e-12)

    def test_duplicate_conflicting_values(self):
        mesh = build_unit_square_mesh(2, 2)
        k = fem.assemble_stiffness_p1(mesh, 1.0)
        with pytest.raises(ValueError):
            fem.apply_dirichlet(k, np.zeros(mesh.n_vertices), [1, 1], [0.0, 1.0])

    def test_duplicate_consistent_values_allowed(self):
        mesh = build_unit_square_mesh(2, 2)
        k = fem.assemble_stiffness_p1(mesh, 1.0)
        a, b = fem.apply_dirichlet(k, np.zeros(mesh.n_vertices), [1, 1], [0.5, 0.5])
        assert b[1] == 0.5

    def test_symmetric_elimination_preserves_symmetry_and_solution(self):
        mesh = build_unit_square_mesh(4, 4)
        k = fem.assemble_stiffness_p1(mesh, 1.0) + fem.assemble_mass_p1(mesh)
        rng = np.random.default_rng(0)
        b = rng.standard_normal(mesh.n_vertices)
        bdofs = fem.boundary_dofs_scalar(mesh)
        vals = rng.standard_normal(bdofs.size)
        a1, b1 = fem.apply_dirichlet(k, b, bdofs, vals)
        a2, b2 = fem.apply_dirichlet(k, b, bdofs, vals, symmetric=True)
        assert np.abs((a2 - a2.T).toarray()).max() <= 1e-14
        assert np.allclose(solve_direct(a1, b1), solve_direct(a2, b2), atol=1e-11)


class TestInterpolate:
    def test_constant_on_p1(self):
        mesh = build_unit_square_mesh(3, 3)
        p1 = fem.DofLayout.p1_scalar(mesh)
        v = fem.interpolate(lambda x, y: 1.0, p1, mesh)
        assert np.array_equal(v, np.ones(mesh.n_vertices))

    def test_coordinate_function(self):
        mesh = build_unit_square_mesh(4, 4)
        p1 = fem.DofLayout.p1_scalar(mesh)
        v = fem.interpolate(lambda x, y: x, p1, mesh)
        idx = np.where((mesh.vertices[:, 0] == 0.25))[0]
        assert np.allclose(v[idx], 0.25)

    def test_mini_bubbles_zero(self):
        mesh = build_unit_square_mesh(2, 2)
        mini = fem.DofLayout.mini_velocity(mesh)
        v = fem.interpolate(lambda x, y: (x, -y), mini, mesh)
        assert np.abs(v[mini.bubble_dofs(0)]).max() == 0.0
        assert np.abs(v[mini.bubble_dofs(1)]).max() == 0.0
        assert np.allclose(v[mini.vertex_dofs(0)], mesh.vertices[:, 0])

    def test_non_finite_reports_location(self):
        mesh = build_unit_square_mesh(2, 2)
        p1 = fem.DofLayout.p1_scalar(mesh)
        with pytest.raises(FloatingPointError, match="vertex"):
            fem.interpolate(lambda x, y: np.where(x == 0.5, np.nan, 1.0), p1, mesh)


class TestPatternFastPath:
    def test_pattern_matches_triplet_assembly(self):
        rng = np.random.default_rng(4)
        rows = rng.integers(0, 20, 200)
        cols = rng.integers(0, 20, 200)
        vals = rng.standard_normal(200)
        pattern = fem._Pattern(rows, cols, (20, 20))
        a1 = pattern.build(vals)
        a2 = csr_from_triplets(rows, cols, vals, (20, 20))
        assert np.abs((a1 - a2).toarray()).max() <= 1e-15
