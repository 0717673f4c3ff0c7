import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from robinfem.linalg import SolverError, generalized_rayleigh_max, solve_spd


def random_spd(n, seed, cond=1e3):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.geomspace(1.0, cond, n)
    return sp.csr_matrix(Q @ np.diag(eig) @ Q.T)


class TestSolveSPD:
    @given(st.integers(2, 40), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_matches_dense(self, n, seed):
        A = random_spd(n, seed)
        b = np.random.default_rng(seed + 1).standard_normal(n)
        x, stats = solve_spd(A, b)
        assert stats.converged
        assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) * (1 + 1e-9)
        xd = np.linalg.solve(A.toarray(), b)
        assert np.linalg.norm(x - xd) <= 1e-8 * np.linalg.norm(xd)

    def test_zero_rhs(self):
        x, stats = solve_spd(random_spd(5, 0), np.zeros(5))
        assert not x.any() and stats.iterations == 0

    def test_warm_start_exact(self):
        A = random_spd(6, 1)
        b = np.ones(6)
        x, _ = solve_spd(A, b)
        _, stats = solve_spd(A, b, x0=x)
        assert stats.iterations <= 1

    def test_indefinite(self):
        A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(SolverError, match="not SPD"):
            solve_spd(A, np.array([1.0, -1.0]))

    def test_bad_diagonal(self):
        with pytest.raises(SolverError, match="diagonal"):
            solve_spd(sp.csr_matrix(np.diag([1.0, 0.0])), np.ones(2))

    def test_iteration_cap(self):
        A = random_spd(50, 3, cond=1e8)
        with pytest.raises(SolverError) as info:
            solve_spd(A, np.ones(50), max_iter=3)
        assert not info.value.stats.converged

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            solve_spd(random_spd(3, 0), np.ones(4))


class TestRayleigh:
    @given(st.integers(3, 30), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_matches_dense_eigh(self, n, seed):
        A = random_spd(n, seed, cond=50)
        rng = np.random.default_rng(seed + 7)
        C = rng.standard_normal((n, 2))
        B = sp.csr_matrix(C @ C.T)  # rank 2, PSD
        lam, v = generalized_rayleigh_max(B, A, tol=1e-13)
        ref = sla.eigh(B.toarray(), A.toarray(), eigvals_only=True)[-1]
        assert lam == pytest.approx(ref, rel=1e-9)
        assert v @ (A @ v) == pytest.approx(1.0, rel=1e-12)
        assert v[np.argmax(np.abs(v))] > 0

    def test_zero_B(self):
        A = random_spd(4, 0)
        lam, v = generalized_rayleigh_max(sp.csr_matrix((4, 4)), A)
        assert lam == 0.0
        assert v @ (A @ v) == pytest.approx(1.0)

    def test_deterministic(self):
        A = random_spd(10, 2)
        B = sp.csr_matrix(np.diag(np.arange(10.0)))
        assert generalized_rayleigh_max(B, A)[0] == generalized_rayleigh_max(B, A)[0]

    def test_start_in_kernel(self):
        A = sp.identity(3, format="csr")
        B = sp.csr_matrix(np.diag([0.0, 0.0, 2.0]))
        lam, _ = generalized_rayleigh_max(B, A, x0=np.array([1.0, 0.0, 0.0]))
        assert lam == pytest.approx(2.0)
