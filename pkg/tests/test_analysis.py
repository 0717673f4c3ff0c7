import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_beta2, dense_beta1
from robinfem.analysis import (
    AdmissibilityError,
    TraceConstants,
    compute_constants,
    corrosion_to_coefficients,
    estimate_beta1,
    estimate_beta2,
    estimate_trace_constants,
    maximize_l3_ratio,
)
from robinfem.assembly import (
    BoundaryField,
    assemble_boundary_mass,
    assemble_stiffness,
    boundary_lp_norm,
    build_dof_map,
    v_norm,
)
from robinfem.geometry import BoundaryTag, Mesh, boundary_measure, build_half_disk_mesh

R, N = BoundaryTag.ROBIN, BoundaryTag.NEUMANN
const = BoundaryField.constant


def setup(level, radius=1.0):
    m = build_half_disk_mesh(radius, math.pi / 2, level)
    d = build_dof_map(m)
    return m, d, assemble_stiffness(m, d)


@pytest.fixture(scope="module")
def level1():
    m, d, K = setup(1)
    return m, d, K, estimate_trace_constants(m, d, K)


class TestBeta1:
    def test_dense_oracle(self, level1):
        m, d, K, tc = level1
        ref = dense_beta1(assemble_boundary_mass(m, d, R), K)
        assert tc.beta1 == pytest.approx(ref, rel=1e-8)

    def test_refinement_monotone(self):
        vals = [estimate_beta1(*setup(k)) for k in range(3)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_radius_scaling(self):
        b1 = estimate_beta1(*setup(1, 1.0))
        b2 = estimate_beta1(*setup(1, 2.0))
        assert b2 == pytest.approx(math.sqrt(2) * b1, rel=1e-9)

    def test_empty_robin(self):
        m, d, K = setup(0)
        tags = np.where(m.boundary_tags == 2, 1, m.boundary_tags)
        m2 = Mesh(m.nodes, m.triangles, m.boundary_edges, tags, m.curved, 1.0)
        with pytest.raises(ValueError, match="Robin part is empty"):
            estimate_beta1(m2, d, K)


class TestBeta2:
    def test_brute_force_oracle(self, level1):
        m, d, K, tc = level1
        ref = brute_force_beta2(m.nodes, m.edges_with_tag(R), d.free, K, starts=200)
        assert tc.beta2 == pytest.approx(ref, rel=1e-4)

    def test_dominates_single_edge_probes(self, level1):
        m, d, K, tc = level1
        for i, j in m.edges_with_tag(R):
            full = np.zeros(m.n_nodes)
            full[[i, j]] = 1.0
            u = d.restrict(full)
            L = math.dist(m.nodes[i], m.nodes[j])
            # constant trace c = 1 on this edge, plus whatever leaks onto the neighbours
            assert tc.beta2 >= L ** (1 / 3) / v_norm(u, K)
            assert tc.beta2 >= boundary_lp_norm(m, R, full, 3) / v_norm(u, K)

    def test_refinement_monotone(self):
        vals = [estimate_beta2(*setup(k), restarts=3) for k in range(3)]
        assert all(b >= a - 1e-6 for a, b in zip(vals, vals[1:]))

    def test_neumann_equals_robin_on_symmetric_mesh(self):
        m, d, K = setup(1)
        assert estimate_beta2(m, d, K, N, restarts=2) == pytest.approx(
            estimate_beta2(m, d, K, R, restarts=2), rel=1e-8)

    def test_unconverged_warns(self):
        m, d, K = setup(0)
        with pytest.warns(RuntimeWarning, match="max_iter"):
            asc = maximize_l3_ratio(m, d, K, restarts=1, max_iter=1)
        assert not asc.converged

    def test_trace_inequalities_random_fields(self, level1):
        m, d, K, tc = level1
        rng = np.random.default_rng(11)
        for _ in range(200):
            u = rng.standard_normal(d.n_free) * rng.uniform(0.01, 100)
            full = d.expand(u)
            vn = v_norm(u, K)
            assert boundary_lp_norm(m, R, full, 2) <= tc.beta1 * vn * (1 + 1e-12)
            assert boundary_lp_norm(m, R, full, 3) <= tc.beta2 * vn + 1e-6 * vn


def fake_tc(beta1, beta2):
    return TraceConstants(beta1, beta2, R, 0)


class TestComputeConstants:
    mesh = build_half_disk_mesh(1.0, math.pi / 2, 0)

    def unit_norm(self, tag):
        return const(1.0 / math.sqrt(boundary_measure(self.mesh, tag)))

    def test_zero_data(self):
        z = const(0.0)
        rep = compute_constants(z, z, z, const(0.1), fake_tc(0.5, 1.0), self.mesh)
        assert rep.C0 == 0 and rep.M0 == 0
        assert rep.thresholds["eps2_max"] == math.inf
        assert rep.admissible

    def test_M0_arithmetic(self):
        z = const(0.0)
        rep = compute_constants(self.unit_norm(N), self.unit_norm(R), z, z, fake_tc(0.5, 1.0), self.mesh)
        assert rep.C0 == pytest.approx(2.0, rel=1e-14)
        assert rep.M0 == pytest.approx(2.0, rel=1e-14)

    def test_K_arithmetic(self):
        z = const(0.0)
        rep = compute_constants(self.unit_norm(N), self.unit_norm(R), z, const(0.1), fake_tc(0.5, 1.0), self.mesh)
        assert rep.K_derivation == pytest.approx(0.4, rel=1e-12)
        assert rep.K_paper == pytest.approx(2 * 0.25 * 0.1 * 2, rel=1e-12)
        assert rep.thresholds["eps2_max"] == pytest.approx(0.125)
        assert rep.eps2 > 0.1 and rep.admissible

    @pytest.mark.parametrize("v, c", [(-0.3, -0.3), (0.3, 0.0)])
    def test_C_phi(self, v, c):
        z = const(0.0)
        assert compute_constants(z, z, const(v), z, fake_tc(0.5, 1.0), self.mesh).C_phi == c

    def test_violation_names_threshold(self):
        rep = compute_constants(self.unit_norm(N), self.unit_norm(R), const(0.0), const(0.2),
                                fake_tc(0.5, 1.0), self.mesh)
        assert not rep.admissible
        assert "1/(4*beta2^3*M0)" in rep.violations[0]
        with pytest.raises(AdmissibilityError, match="psi too large"):
            rep.require()
        rep = compute_constants(const(0), const(0), const(-1.5), const(0), fake_tc(0.5, 1.0), self.mesh)
        assert "1/(4*beta1^2)" in rep.violations[0]

    def test_strict_threshold(self):
        # psi exactly at the threshold is rejected: eps2 sits strictly above ||psi||
        z = const(0.0)
        rep = compute_constants(self.unit_norm(N), self.unit_norm(R), z, const(0.125), fake_tc(0.5, 1.0),
                                self.mesh)
        assert not rep.admissible

    def test_quadratic_condition(self):
        tc = fake_tc(0.5, 1.0)
        args = (self.unit_norm(N), self.unit_norm(R), const(0.3), const(0.01), tc, self.mesh)
        assert compute_constants(*args).admissible
        rep = compute_constants(*args, quadratic_robin=True)
        assert not rep.admissible  # 0.3 >= min(1, 1/(2*2)) = 0.25

    @given(st.floats(-2, 2), st.floats(-0.5, 0.5))
    @settings(max_examples=100, deadline=None)
    def test_admissible_implies_margin(self, v, p):
        rep = compute_constants(self.unit_norm(N), self.unit_norm(R), const(v), const(p),
                                fake_tc(0.8, 0.9), self.mesh)
        if rep.admissible:
            assert rep.coercivity_margin >= 0.5
            assert rep.K_derivation < 0.5
        assert rep.C_phi <= 0
        assert set(rep.to_dict()) == set(rep.__dataclass_fields__)


class TestCorrosion:
    def test_linear_case(self):
        varphi, psi = corrosion_to_coefficients(2.0, 0.5)
        assert psi.value == 0.0 and psi.is_zero and varphi.value == 2.0

    def test_arithmetic(self):
        assert corrosion_to_coefficients(1.0, 0.75)[1].value == 0.25

    def test_zero_lambda(self):
        assert [f.value for f in corrosion_to_coefficients(0.0, 0.3)] == [0.0, 0.0]

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            corrosion_to_coefficients(1.0, alpha)
