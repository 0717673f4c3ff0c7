"""SPD solves and generalized Rayleigh-quotient maximization."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

DEFAULT_CG_TOL = 1e-12
DEFAULT_POWER_TOL = 1e-10
_MAX_RESTARTS = 20


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    final_residual: float
    converged: bool


class SolverError(RuntimeError):
    """CG failure; ``stats`` holds the state when it stopped."""

    def __init__(self, message: str, stats: SolveStats):
        super().__init__(message)
        self.stats = stats


def solve_spd(A, b, rel_tol: float = DEFAULT_CG_TOL, max_iter: int | None = None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Returns ``(x, stats)`` with ``||A x - b|| <= rel_tol * ||b||`` on the true
    residual. Raises :class:`SolverError` on non-convergence, or as soon as a
    search direction with ``p^T A p <= 0`` shows ``A`` is not positive definite.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match rhs length {n}")
    if max_iter is None:
        max_iter = max(10 * n, 100)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveStats(0, 0.0, True)
    diag = np.asarray(A.diagonal(), dtype=float)
    if np.any(diag <= 0):
        raise SolverError("matrix has a non-positive diagonal entry: not SPD", SolveStats(0, 1.0, False))
    inv_diag = 1.0 / diag
    target = rel_tol * bnorm

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    rnorm = float(np.linalg.norm(r))
    it = 0
    restarts = 0
    # the outer loop restarts from the true residual if the recursive one drifted
    while rnorm > target:
        if restarts > _MAX_RESTARTS or it >= max_iter:
            raise SolverError(
                f"CG stalled at relative residual {rnorm / bnorm:.3g} after {it} iterations",
                SolveStats(it, rnorm / bnorm, False),
            )
        restarts += 1
        z = inv_diag * r
        p = z.copy()
        rz = float(r @ z)
        while it < max_iter:
            Ap = A @ p
            curv = float(p @ Ap)
            if curv <= 0.0:
                raise SolverError(
                    f"non-positive curvature p^T A p = {curv:.3g} at iteration {it}: matrix is not SPD",
                    SolveStats(it, rnorm / bnorm, False),
                )
            alpha = rz / curv
            x += alpha * p
            r -= alpha * Ap
            it += 1
            if float(np.linalg.norm(r)) <= target:
                break
            z = inv_diag * r
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        r = b - A @ x
        rnorm = float(np.linalg.norm(r))
    return x, SolveStats(it, rnorm / bnorm, True)


def generalized_rayleigh_max(B, A, tol: float = DEFAULT_POWER_TOL, max_iter: int = 20000,
                             x0=None, cg_tol: float = DEFAULT_CG_TOL):
    """Largest ``u^T B u / u^T A u`` for SPD ``A`` and symmetric PSD ``B``.

    Power iteration on ``A^{-1} B``, each application a CG solve. Stops when
    two successive Rayleigh quotients agree to ``tol`` relative. Returns
    ``(lam, v)`` with ``v^T A v = 1`` and its largest entry positive.
    """
    n = A.shape[0]
    if x0 is None:
        v = np.random.default_rng(0).standard_normal(n)
    else:
        v = np.array(x0, dtype=float)
    if n == 0:
        return 0.0, v
    Bmax = abs(B).max() if sp.issparse(B) else np.abs(B).max()
    if Bmax == 0:
        return 0.0, _normalize(v, A)
    v = _normalize(v, A)
    lam = float(v @ (B @ v))
    for _ in range(max_iter):
        Bv = B @ v
        if not np.any(Bv):
            # start vector in the kernel of B; perturb deterministically
            v = _normalize(v + np.linspace(1.0, 2.0, n), A)
            continue
        y, _ = solve_spd(A, Bv, rel_tol=cg_tol, x0=v * lam)
        v = _normalize(y, A)
        lam_new = float(v @ (B @ v))
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    else:
        raise SolverError(
            f"power iteration did not reach relative change {tol:g} in {max_iter} steps",
            SolveStats(max_iter, math.nan, False),
        )
    return lam, v


def _normalize(v, A):
    nrm = math.sqrt(float(v @ (A @ v)))
    v = v / nrm
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v
