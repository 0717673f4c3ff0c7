"""Independent reference computations used by the tests.

Nothing here calls the package's quadrature, CG or power-iteration code: the
oracles use dense linear algebra, Gauss-Legendre rules split at sign changes
and scipy's L-BFGS.
"""
import math

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

GL_T, GL_W = np.polynomial.legendre.leggauss(6)
GL_T = 0.5 * (GL_T + 1.0)
GL_W = 0.5 * GL_W


def edge_abs_power_integral(a, b, length, p):
    """int_0^L |a (1-s) + b s|^p ds, exact for p in {2, 3} (split at the root)."""
    pieces = [(0.0, 1.0)]
    if a * b < 0:
        r = a / (a - b)
        pieces = [(0.0, r), (r, 1.0)]
    total = 0.0
    for s0, s1 in pieces:
        s = s0 + (s1 - s0) * GL_T
        total += (s1 - s0) * np.sum(GL_W * np.abs(a * (1 - s) + b * s) ** p)
    return length * total


def l3_cubed_and_grad(nodes, edges, u):
    """G(u) = sum over edges of int |u|^3 and its gradient, piecewise-exact quadrature."""
    G = 0.0
    grad = np.zeros_like(u)
    for i, j in edges:
        a, b = u[i], u[j]
        L = math.dist(nodes[i], nodes[j])
        pieces = [(0.0, 1.0)]
        if a * b < 0:
            r = a / (a - b)
            pieces = [(0.0, r), (r, 1.0)]
        for s0, s1 in pieces:
            s = s0 + (s1 - s0) * GL_T
            w = L * (s1 - s0) * GL_W
            v = a * (1 - s) + b * s
            G += np.sum(w * np.abs(v) ** 3)
            d = 3.0 * np.abs(v) * v
            grad[i] += np.sum(w * d * (1 - s))
            grad[j] += np.sum(w * d * s)
    return G, grad


def dense_beta1(B, K):
    """sqrt of the largest eigenvalue of B v = lam K v, via LAPACK."""
    lam = sla.eigh(B.toarray(), K.toarray(), eigvals_only=True)
    return math.sqrt(lam[-1])


def brute_force_beta2(nodes, edges, free, K, starts=200, seed=1234):
    """max ||u||_{L3} / ||u||_V by L-BFGS from many random starts.

    Works in whitened coordinates u = W z with W^T K W = I, so the ratio is
    G(Wz)^{1/3} / |z| and the sphere constraint disappears.
    """
    Kd = K.toarray()
    L = np.linalg.cholesky(Kd)
    W = sla.solve_triangular(L, np.eye(len(Kd)), lower=True).T   # K = L L^T, W = L^{-T}
    n_nodes = len(nodes)

    def f(z):
        full = np.zeros(n_nodes)
        full[free] = W @ z
        G, g_full = l3_cubed_and_grad(nodes, edges, full)
        zz = float(z @ z)
        # maximize G / |z|^3  ->  minimize its negative
        val = -G / zz**1.5
        grad = -(W.T @ g_full[free]) / zz**1.5 + 3.0 * G * z / zz**2.5
        return val, grad

    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(starts):
        z0 = rng.standard_normal(len(Kd))
        res = minimize(f, z0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15})
        best = max(best, (-res.fun) ** (1.0 / 3.0))
    return best
