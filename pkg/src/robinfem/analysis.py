"""Trace constants, a-priori bounds and admissibility of Robin coefficients.

All constants are computed on the discrete space V_h (P1 functions vanishing
on the Dirichlet part), so the inequalities they certify hold exactly for
discrete fields:

* ``beta1``: sup of ``||u||_{L2(Robin)} / ||u||_V``,
* ``beta2``: sup of ``||u||_{L3(tag)} / ||u||_V`` (Robin part by default),
* ``M0 = 2 beta1 (||phi||_{L2(N)} + ||g||_{L2(R)})``, the energy bound,
* the smallness thresholds on ``varphi`` and ``psi`` and the contraction factor.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    BoundaryField,
    DofMap,
    assemble_boundary_mass,
    boundary_field_extrema,
    boundary_field_l2_norm,
    boundary_l3_cubed,
)
from .geometry import BoundaryTag, Mesh
from .linalg import DEFAULT_POWER_TOL, generalized_rayleigh_max, solve_spd

log = logging.getLogger(__name__)

DEFAULT_SEED = 42
DEFAULT_RESTARTS = 8


class AdmissibilityError(ValueError):
    """Coefficients outside the set where existence and uniqueness are guaranteed."""


@dataclass(frozen=True)
class TraceConstants:
    beta1: float
    beta2: float
    beta2_tag: BoundaryTag
    mesh_level: int
    beta2_converged: bool = True
    beta1_vector: np.ndarray | None = field(default=None, repr=False, compare=False)


def estimate_beta1(mesh: Mesh, dofs: DofMap, K, tol: float = DEFAULT_POWER_TOL, return_vector=False):
    """Discrete L2 trace constant of the Robin part."""
    B = assemble_boundary_mass(mesh, dofs, BoundaryTag.ROBIN)
    if B.nnz == 0 or abs(B).max() == 0:
        raise ValueError("Robin part is empty: beta1 undefined")
    lam, v = generalized_rayleigh_max(B, K, tol=tol)
    beta1 = math.sqrt(lam)
    return (beta1, v) if return_vector else beta1


@dataclass
class L3Ascent:
    value: float
    vector: np.ndarray
    converged: bool
    ratios: list


def maximize_l3_ratio(mesh: Mesh, dofs: DofMap, K, tag: BoundaryTag = BoundaryTag.ROBIN,
                      restarts: int = DEFAULT_RESTARTS, seed: int = DEFAULT_SEED,
                      starts=(), tol: float = 1e-13, max_iter: int = 3000) -> L3Ascent:
    """Maximize ``||u||_{L3(tag)} / ||u||_V`` over free-dof vectors.

    Projected gradient ascent on the sphere ``||u||_V = 1``, taking the full
    step in the V inner product: ``u <- normalize(K^{-1} grad G(u))`` with
    ``G(u) = int |u|^3``. Because ``G`` is convex this step never decreases
    ``G`` on the sphere. Each restart stops once its relative gain drops below
    ``tol``; the best restart wins, ties going to the lowest index.
    """
    tag = BoundaryTag.parse(tag)
    edges = mesh.edges_with_tag(tag)
    if len(edges) == 0:
        raise ValueError(f"{tag.name} part is empty: beta2 undefined")
    lengths = mesh.edge_lengths(edges)
    free = dofs.free

    def objective(u):
        full = dofs.expand(u)
        G, grad = boundary_l3_cubed(mesh, tag, full, edges, lengths)
        return G, grad[free]

    def normalize(u):
        return u / math.sqrt(float(u @ (K @ u)))

    rng = np.random.default_rng(seed)
    seeds = [np.asarray(s, dtype=float) for s in starts]
    seeds += [rng.standard_normal(dofs.n_free) for _ in range(restarts)]

    best, all_converged = None, True
    ratios = []
    for start in seeds:
        u = normalize(start)
        G, grad = objective(u)
        converged = False
        for _ in range(max_iter):
            d, _ = solve_spd(K, grad, x0=3.0 * G * u)
            u_new = normalize(d)
            G_new, grad_new = objective(u_new)
            gain = G_new - G
            u, G, grad = u_new, G_new, grad_new
            if gain <= tol * G:
                converged = True
                break
        all_converged &= converged
        r = G ** (1.0 / 3.0)
        ratios.append(r)
        if best is None or r > best[0]:
            best = (r, u)
    if not all_converged:
        warnings.warn("L3 trace ascent hit max_iter in some restarts; beta2 may be underestimated",
                      RuntimeWarning, stacklevel=2)
    return L3Ascent(best[0], best[1], all_converged, ratios)


def estimate_beta2(mesh: Mesh, dofs: DofMap, K, tag: BoundaryTag = BoundaryTag.ROBIN,
                   restarts: int = DEFAULT_RESTARTS, seed: int = DEFAULT_SEED, starts=()) -> float:
    """Discrete L3 trace constant of ``tag``; see :func:`maximize_l3_ratio`."""
    return maximize_l3_ratio(mesh, dofs, K, tag, restarts, seed, starts).value


def estimate_trace_constants(mesh: Mesh, dofs: DofMap, K, beta2_tag: BoundaryTag = BoundaryTag.ROBIN,
                             restarts: int = DEFAULT_RESTARTS, seed: int = DEFAULT_SEED) -> TraceConstants:
    beta1, v1 = estimate_beta1(mesh, dofs, K, return_vector=True)
    ascent = maximize_l3_ratio(mesh, dofs, K, beta2_tag, restarts, seed, starts=(v1,))
    return TraceConstants(beta1, ascent.value, BoundaryTag.parse(beta2_tag), mesh.level,
                          ascent.converged, v1)


# --------------------------------------------------------------------------
# admissibility
# --------------------------------------------------------------------------

REPORT_FIELDS = (
    "beta1", "beta2", "beta2_tag", "M0", "C0", "C2", "C_phi", "eps", "eps1", "eps2",
    "thresholds", "distances", "K_derivation", "K_paper", "coercivity_margin",
    "admissible", "violations",
)


@dataclass(frozen=True)
class AdmissibilityReport:
    beta1: float
    beta2: float
    beta2_tag: str
    M0: float
    C0: float
    C2: float
    C_phi: float
    eps: float
    eps1: float
    eps2: float
    thresholds: dict
    distances: dict
    K_derivation: float
    K_paper: float
    coercivity_margin: float
    admissible: bool
    violations: tuple = ()

    def to_dict(self) -> dict:
        out = {}
        for name in REPORT_FIELDS:
            val = getattr(self, name)
            out[name] = list(val) if isinstance(val, tuple) else val
        return out

    def require(self):
        if not self.admissible:
            raise AdmissibilityError("; ".join(self.violations))


def _inv(x: float) -> float:
    return math.inf if x == 0 else 1.0 / x


def _exceed(x: float) -> float:
    """Smallest float strictly above ``max(x, 0)``."""
    return float(np.nextafter(max(x, 0.0), math.inf))


def compute_constants(phi: BoundaryField, g: BoundaryField, varphi: BoundaryField, psi: BoundaryField,
                      tc: TraceConstants, mesh: Mesh, quadratic_robin: bool = False) -> AdmissibilityReport:
    """Every constant of the existence theory, and whether ``(varphi, psi)`` is admissible.

    ``eps1`` and ``eps2`` are the tightest values with ``inf varphi > -eps1`` and
    ``||psi||_inf < eps2``; admissibility requires ``eps1 < 1/(4 beta1^2)`` and
    ``eps2 < 1/(4 beta2^3 M0)``. With ``quadratic_robin`` (coefficients coming
    from ``varphi (u + c u^2)``) it also requires
    ``||varphi||_inf < min(1/(4 beta1^2), 1/(2 beta2^3 M0))``.
    """
    b1, b2 = tc.beta1, tc.beta2
    R, N = BoundaryTag.ROBIN, BoundaryTag.NEUMANN
    C0 = boundary_field_l2_norm(mesh, N, phi) + boundary_field_l2_norm(mesh, R, g)
    M0 = 2.0 * b1 * C0
    vmin, vmax = boundary_field_extrema(mesh, R, varphi)
    pmin, pmax = boundary_field_extrema(mesh, R, psi)
    varphi_inf = max(abs(vmin), abs(vmax))
    psi_inf = max(abs(pmin), abs(pmax))
    C_phi = min(vmin, 0.0)
    C2 = 1.0 + b1**2 * varphi_inf + b2**3 * M0 * psi_inf

    eps = _exceed(varphi_inf)
    eps1 = _exceed(-vmin)
    eps2 = _exceed(psi_inf)
    t_eps1 = 1.0 / (4.0 * b1**2)
    t_eps2 = _inv(4.0 * b2**3 * M0)
    t_eps = min(t_eps1, _inv(2.0 * b2**3 * M0))
    thresholds = {
        "eps1_max": t_eps1,
        "eps2_max": t_eps2,
        "eps_max": t_eps,
        "varphi_inf_min_linear": -1.0 / b1**2,
    }
    distances = {
        "eps1": t_eps1 - eps1,
        "eps2": t_eps2 - eps2,
        "eps": t_eps - eps,
        "varphi_inf_linear": vmin + 1.0 / b1**2,
    }
    violations = []
    if not eps1 < t_eps1:
        violations.append(
            f"eps1 = {eps1:.6g} >= 1/(4*beta1^2) = {t_eps1:.6g}: varphi too negative on the Robin part")
    if not eps2 < t_eps2:
        violations.append(
            f"eps2 = {eps2:.6g} >= 1/(4*beta2^3*M0) = {t_eps2:.6g}: psi too large on the Robin part")
    if quadratic_robin and not eps < t_eps:
        violations.append(
            f"||varphi||_inf = {varphi_inf:.6g} >= min(1/(4*beta1^2), 1/(2*beta2^3*M0)) = {t_eps:.6g}")

    return AdmissibilityReport(
        beta1=b1, beta2=b2, beta2_tag=tc.beta2_tag.value, M0=M0, C0=C0, C2=C2, C_phi=C_phi,
        eps=eps, eps1=eps1, eps2=eps2, thresholds=thresholds, distances=distances,
        K_derivation=2.0 * b2**3 * eps2 * M0, K_paper=2.0 * b1**2 * eps2 * M0,
        coercivity_margin=1.0 - eps1 * b1**2 - eps2 * b2**3 * M0,
        admissible=not violations, violations=tuple(violations),
    )


def corrosion_to_coefficients(lam: float, alpha: float):
    """Robin coefficients of the second-order expansion of the exchange law.

    ``lam (e^{alpha u} - e^{-(1-alpha) u}) ~ lam (u + (2 alpha - 1)/2 u^2)``,
    so ``varphi = lam`` and ``psi = lam (2 alpha - 1) / 2``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return BoundaryField.constant(lam), BoundaryField.constant(lam * (2.0 * alpha - 1.0) / 2.0)
