import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import edge_abs_power_integral
from robinfem.assembly import (
    AssemblyError,
    BoundaryField,
    _edge_abs_power,
    _edge_cube_grad,
    assemble_boundary_load,
    assemble_boundary_mass,
    assemble_stiffness,
    boundary_field_extrema,
    boundary_field_l2_norm,
    boundary_l3_cubed,
    boundary_lp_norm,
    build_dof_map,
    p1_gradients,
    v_norm,
)
from robinfem.geometry import BoundaryTag, Mesh, boundary_measure, build_half_disk_mesh

R, N = BoundaryTag.ROBIN, BoundaryTag.NEUMANN
finite = st.floats(-5, 5, allow_nan=False)


@pytest.fixture(scope="module")
def mesh():
    return build_half_disk_mesh(1.0, math.pi / 2, 1)


class TestBoundaryField:
    def test_constant(self):
        f = BoundaryField.constant(2.5)
        assert f.value == 2.5
        assert f(np.zeros((3, 2))).tolist() == [2.5] * 3
        assert not f.is_zero and BoundaryField.constant(0.0).is_zero

    def test_non_finite_rejected(self):
        f = BoundaryField.from_function(lambda p: np.full(len(p), np.nan))
        with pytest.raises(AssemblyError, match="not finite"):
            f(np.zeros((1, 2)))


class TestDofMap:
    def test_roundtrip(self, mesh):
        d = build_dof_map(mesh)
        u = np.arange(d.n_free, dtype=float)
        full = d.expand(u)
        assert np.all(full[d.constrained] == 0)
        assert np.array_equal(d.restrict(full), u)
        assert d.n_free + len(d.constrained) == mesh.n_nodes

    def test_dirichlet_nodes_constrained(self, mesh):
        d = build_dof_map(mesh)
        assert set(mesh.tag_nodes(BoundaryTag.DIRICHLET)) == set(d.constrained)

    def test_no_dirichlet(self, mesh):
        tags = np.where(mesh.boundary_tags == 0, 1, mesh.boundary_tags)
        m = Mesh(mesh.nodes, mesh.triangles, mesh.boundary_edges, tags, mesh.curved, 1.0)
        with pytest.raises(AssemblyError):
            build_dof_map(m)


class TestStiffness:
    def test_symmetric_and_kernel(self, mesh):
        K = assemble_stiffness(mesh, None)
        assert abs(K - K.T).max() < 1e-14
        assert np.abs(K @ np.ones(mesh.n_nodes)).max() < 1e-12

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=20, deadline=None)
    def test_linear_field_energy(self, a, bx, by):
        m = build_half_disk_mesh(1.0, 1.0, 0)
        K = assemble_stiffness(m, None)
        u = a + bx * m.nodes[:, 0] + by * m.nodes[:, 1]
        area = m.signed_areas().sum()
        assert u @ (K @ u) == pytest.approx((bx**2 + by**2) * area, rel=1e-12, abs=1e-12)

    def test_restricted_positive_definite(self, mesh):
        K = assemble_stiffness(mesh, build_dof_map(mesh)).toarray()
        assert np.linalg.eigvalsh(K).min() > 0

    def test_degenerate_triangle(self, mesh):
        nodes = mesh.nodes.copy()
        t = mesh.triangles[0]
        nodes[t[2]] = 0.5 * (nodes[t[0]] + nodes[t[1]])
        m = Mesh(nodes, mesh.triangles, mesh.boundary_edges, mesh.boundary_tags, mesh.curved, 1.0)
        with pytest.raises(AssemblyError):
            p1_gradients(m)


class TestBoundaryForms:
    def test_mass_total(self, mesh):
        M = assemble_boundary_mass(mesh, None, R)
        one = np.ones(mesh.n_nodes)
        assert one @ (M @ one) == pytest.approx(boundary_measure(mesh, R), rel=1e-14)
        M3 = assemble_boundary_mass(mesh, None, R, BoundaryField.constant(3.0))
        assert abs(M3 - 3 * M).max() < 1e-15

    def test_load_total(self, mesh):
        b = assemble_boundary_load(mesh, None, N, BoundaryField.constant(2.0))
        assert b.sum() == pytest.approx(2.0 * boundary_measure(mesh, N), rel=1e-14)

    def test_mass_matches_l2_norm(self, mesh):
        u = np.random.default_rng(0).standard_normal(mesh.n_nodes)
        M = assemble_boundary_mass(mesh, None, R)
        assert boundary_lp_norm(mesh, R, u, 2) == pytest.approx(math.sqrt(u @ (M @ u)), rel=1e-13)

    def test_nodal_factor(self, mesh):
        rng = np.random.default_rng(1)
        f, u, v = rng.standard_normal((3, mesh.n_nodes))
        Mf = assemble_boundary_mass(mesh, None, R, nodal_factor=f)
        # int f u v is a cubic per edge: 2-point Gauss integrates it exactly
        exact = 0.0
        t, w = np.polynomial.legendre.leggauss(4)
        t, w = 0.5 * (t + 1), 0.5 * w
        for i, j in mesh.edges_with_tag(R):
            L = math.dist(mesh.nodes[i], mesh.nodes[j])
            tr = lambda x: x[i] * (1 - t) + x[j] * t  # noqa: E731
            exact += L * np.sum(w * tr(f) * tr(u) * tr(v))
        assert u @ (Mf @ v) == pytest.approx(exact, rel=1e-12)

    def test_field_norm_and_extrema(self, mesh):
        f = BoundaryField.from_function(lambda p: p[:, 0])
        lo, hi = boundary_field_extrema(mesh, R, f)
        assert lo == pytest.approx(-1.0)
        assert hi == pytest.approx(0.0, abs=1e-12)
        c = BoundaryField.constant(-2.0)
        assert boundary_field_l2_norm(mesh, R, c) == pytest.approx(2 * math.sqrt(boundary_measure(mesh, R)))


class TestEdgeIntegrals:
    @given(finite, finite, st.sampled_from([2, 3]))
    @settings(max_examples=200, deadline=None)
    def test_closed_form_matches_split_gauss(self, a, b, p):
        got = float(_edge_abs_power(np.array([a]), np.array([b]), p)[0])
        assert got == pytest.approx(edge_abs_power_integral(a, b, 1.0, p), rel=1e-12, abs=1e-14)

    @given(finite, finite)
    @settings(max_examples=200, deadline=None)
    def test_gradient_finite_difference(self, a, b):
        h = 1e-6
        f = lambda x: float(_edge_abs_power(np.array([x]), np.array([b]), 3)[0])  # noqa: E731
        fd = (f(a + h) - f(a - h)) / (2 * h)
        assert float(_edge_cube_grad(np.array([a]), np.array([b]))[0]) == pytest.approx(fd, rel=1e-5, abs=1e-6)

    def test_gradient_at_zero_endpoint(self):
        for b in (-2.0, 3.0):
            h = 1e-7
            f = lambda x: float(_edge_abs_power(np.array([x]), np.array([b]), 3)[0])  # noqa: E731
            fd = (f(h) - f(-h)) / (2 * h)
            assert float(_edge_cube_grad(np.array([0.0]), np.array([b]))[0]) == pytest.approx(fd, rel=1e-6)

    def test_mesh_gradient(self, mesh):
        rng = np.random.default_rng(2)
        u = rng.standard_normal(mesh.n_nodes)
        G, grad = boundary_l3_cubed(mesh, R, u)
        d = rng.standard_normal(mesh.n_nodes)
        h = 1e-6
        fd = (boundary_l3_cubed(mesh, R, u + h * d)[0] - boundary_l3_cubed(mesh, R, u - h * d)[0]) / (2 * h)
        assert grad @ d == pytest.approx(fd, rel=1e-7)
        assert G ** (1 / 3) == pytest.approx(boundary_lp_norm(mesh, R, u, 3), rel=1e-14)


class TestNorms:
    @given(arrays(float, 85, elements=finite))
    @settings(max_examples=60, deadline=None)
    def test_holder(self, u):
        m = build_half_disk_mesh(1.0, math.pi / 2, 1)
        meas = boundary_measure(m, R)
        l2, l3 = boundary_lp_norm(m, R, u, 2), boundary_lp_norm(m, R, u, 3)
        linf = boundary_lp_norm(m, R, u, math.inf)
        assert l2 <= l3 * meas ** (1 / 6) * (1 + 1e-12) + 1e-300
        assert l3 <= linf * meas ** (1 / 3) * (1 + 1e-12) + 1e-300

    @pytest.mark.parametrize("scale", [1e-150, 1e150])
    def test_extreme_scales(self, mesh, scale):
        u = np.random.default_rng(6).standard_normal(mesh.n_nodes)
        for p in (2, 3):
            assert boundary_lp_norm(mesh, R, scale * u, p) == pytest.approx(
                scale * boundary_lp_norm(mesh, R, u, p), rel=1e-13)

    def test_l3_against_fine_quadrature(self, mesh):
        u = np.random.default_rng(5).standard_normal(mesh.n_nodes)
        total = 0.0
        for i, j in mesh.edges_with_tag(R):
            L = math.dist(mesh.nodes[i], mesh.nodes[j])
            s = (np.arange(20000) + 0.5) / 20000
            total += L * np.mean(np.abs(u[i] * (1 - s) + u[j] * s) ** 3)
        assert boundary_lp_norm(mesh, R, u, 3) ** 3 == pytest.approx(total, rel=1e-7)

    def test_unsupported_p(self, mesh):
        with pytest.raises(AssemblyError):
            boundary_lp_norm(mesh, R, np.zeros(mesh.n_nodes), 4)

    def test_v_norm_shape(self, mesh):
        K = assemble_stiffness(mesh, build_dof_map(mesh))
        with pytest.raises(AssemblyError):
            v_norm(np.zeros(3), K)
