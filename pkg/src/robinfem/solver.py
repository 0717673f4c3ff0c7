"""Linear, linearized and nonlinear Robin solves.

The nonlinear problem

    -Laplace u = 0                      in the domain
    u = 0                               on the Dirichlet part
    du/dn = phi                         on the Neumann part
    du/dn + varphi u + psi u^2 = g      on the Robin part

is solved by Picard iteration: ``u_{k+1}`` solves the linear problem in which
``psi u^2`` is replaced by ``psi u_k u``. Vectors returned by this module live
on the free dofs; use ``spec.dofs.expand`` for nodal values.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .analysis import (
    DEFAULT_RESTARTS,
    DEFAULT_SEED,
    AdmissibilityError,
    AdmissibilityReport,
    TraceConstants,
    compute_constants,
    estimate_beta1,
    maximize_l3_ratio,
)
from .assembly import (
    BoundaryField,
    assemble_boundary_load,
    assemble_boundary_mass,
    assemble_stiffness,
    boundary_field_extrema,
    build_dof_map,
    edge_quadrature,
    v_norm,
)
from .geometry import BoundaryTag, Mesh, validate_partition
from .linalg import solve_spd

log = logging.getLogger(__name__)

ROBIN = BoundaryTag.ROBIN
NEUMANN = BoundaryTag.NEUMANN
BALL_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Mesh plus Robin coefficients and boundary data.

    ``trace`` may carry precomputed trace constants for this mesh; otherwise
    they are estimated on first use. ``quadratic_robin`` marks coefficients of
    the form ``varphi (u + c u^2)``, which adds the smallness condition on
    ``||varphi||_inf`` to the admissibility check.
    """

    mesh: Mesh
    varphi: BoundaryField
    psi: BoundaryField
    phi: BoundaryField
    g: BoundaryField
    trace: TraceConstants | None = None
    quadratic_robin: bool = False
    beta2_restarts: int = DEFAULT_RESTARTS
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        problems = validate_partition(self.mesh)
        if problems:
            raise ValueError("invalid mesh: " + "; ".join(problems))

    @cached_property
    def dofs(self):
        return build_dof_map(self.mesh)

    @cached_property
    def stiffness(self):
        return assemble_stiffness(self.mesh, self.dofs)

    @cached_property
    def robin_mass(self):
        return assemble_boundary_mass(self.mesh, self.dofs, ROBIN, self.varphi)

    @cached_property
    def load(self):
        return (assemble_boundary_load(self.mesh, self.dofs, NEUMANN, self.phi)
                + assemble_boundary_load(self.mesh, self.dofs, ROBIN, self.g))

    @cached_property
    def linear_matrix(self):
        return (self.stiffness + self.robin_mass).tocsr()

    @cached_property
    def beta1(self) -> float:
        if self.trace is not None:
            return self.trace.beta1
        return self._beta1_pair[0]

    @cached_property
    def _beta1_pair(self):
        return estimate_beta1(self.mesh, self.dofs, self.stiffness, return_vector=True)

    @cached_property
    def trace_constants(self) -> TraceConstants:
        if self.trace is not None:
            return self.trace
        b1, v1 = self._beta1_pair
        asc = maximize_l3_ratio(self.mesh, self.dofs, self.stiffness, ROBIN,
                                self.beta2_restarts, self.seed, starts=(v1,))
        return TraceConstants(b1, asc.value, ROBIN, self.mesh.level, asc.converged, v1)

    @cached_property
    def admissibility(self) -> AdmissibilityReport:
        return compute_constants(self.phi, self.g, self.varphi, self.psi, self.trace_constants,
                                 self.mesh, self.quadratic_robin)

    def norm(self, u) -> float:
        return v_norm(u, self.stiffness)

    def psi_mass(self, f):
        """Matrix of ``int_R psi f u v`` for a free-dof vector ``f``."""
        return assemble_boundary_mass(self.mesh, self.dofs, ROBIN, self.psi,
                                      nodal_factor=self.dofs.expand(f))

    def intermediate_matrix(self, f):
        if self.psi.is_zero:
            return self.linear_matrix
        return (self.linear_matrix + self.psi_mass(f)).tocsr()

    def with_coefficients(self, **changes) -> "ProblemSpec":
        """Copy with some fields replaced, reusing the trace constants if the mesh is kept."""
        kw = dict(mesh=self.mesh, varphi=self.varphi, psi=self.psi, phi=self.phi, g=self.g,
                  trace=self.trace, quadratic_robin=self.quadratic_robin,
                  beta2_restarts=self.beta2_restarts, seed=self.seed)
        if "mesh" not in changes and "trace" not in changes and "trace_constants" in self.__dict__:
            kw["trace"] = self.trace_constants
        kw.update(changes)
        return ProblemSpec(**kw)


def _check_admissible(spec: ProblemSpec, allow_inadmissible: bool) -> AdmissibilityReport:
    report = spec.admissibility
    if not report.admissible and not allow_inadmissible:
        raise AdmissibilityError("; ".join(report.violations))
    return report


def solve_linear_robin(spec: ProblemSpec) -> np.ndarray:
    """Solve the linear Robin problem (``psi`` is ignored)."""
    C_phi = min(boundary_field_extrema(spec.mesh, ROBIN, spec.varphi)[0], 0.0)
    coercivity = 1.0 + C_phi * spec.beta1**2
    if coercivity <= 0:
        raise AdmissibilityError(
            f"1 + C_phi*beta1^2 = {coercivity:.6g} <= 0 (C_phi = {C_phi:.6g}, beta1 = {spec.beta1:.6g}): "
            "the Robin bilinear form is not coercive")
    u, _ = solve_spd(spec.linear_matrix, spec.load)
    return u


def solve_intermediate(spec: ProblemSpec, f, *, allow_inadmissible: bool = False,
                       check_ball: bool = True, x0=None) -> np.ndarray:
    """Solve the Robin problem linearized about ``f``: ``psi u^2`` becomes ``psi f u``.

    Requires admissible coefficients and ``||f||_V <= M0``. With ``x0`` the
    system is solved for the correction ``u - x0``, so the CG tolerance is
    relative to how far ``x0`` is from the answer.
    """
    report = _check_admissible(spec, allow_inadmissible)
    f = np.asarray(f, dtype=float)
    fn = spec.norm(f)
    if check_ball and fn > report.M0 + BALL_SLACK:
        raise ValueError(f"||f||_V = {fn:.6g} exceeds the energy bound M0 = {report.M0:.6g}")
    A = spec.intermediate_matrix(f)
    if x0 is None or spec.psi.is_zero:
        u, _ = solve_spd(A, spec.load)
    else:
        x0 = np.asarray(x0, dtype=float)
        du, _ = solve_spd(A, spec.load - A @ x0)
        u = x0 + du
    if report.admissible:
        un = spec.norm(u)
        if un > report.M0 * (1 + BALL_SLACK) + 1e-300:
            log.warning("||u||_V = %.12g exceeds M0 = %.12g", un, report.M0)
    return u


@dataclass
class PicardReport:
    iterates_norms: list
    increment_norms: list
    ratios: list
    K_derivation: float
    K_paper: float
    converged: bool
    iterations: int
    boundary_residual: float
    supported_by_theory: bool = True
    iterates: list = field(default_factory=list, repr=False)

    FIELDS = ("iterates_norms", "increment_norms", "ratios", "K_derivation", "K_paper",
              "converged", "iterations", "boundary_residual", "supported_by_theory")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}


def boundary_residual(spec: ProblemSpec, u) -> float:
    """Euclidean norm of the assembled nonlinear residual, divided by sqrt(n_free).

    The residual vector tests ``-Laplace u = 0`` together with both boundary
    relations against every discrete test function.
    """
    r = spec.linear_matrix @ u - spec.load
    if not spec.psi.is_zero:
        r = r + spec.psi_mass(u) @ u
    return float(np.linalg.norm(r)) / math.sqrt(max(spec.dofs.n_free, 1))


def picard_solve(spec: ProblemSpec, tol: float = 1e-10, max_iter: int = 200, u_init=None,
                 allow_inadmissible: bool = False, keep_iterates: bool = False):
    """Picard iteration from ``u_init`` (default: the linear solution).

    Stops once ``||u_{k+1} - u_k||_V <= tol * max(1, ||u_{k+1}||_V)``. Returns
    ``(u, report)``; a run that hits ``max_iter`` is returned with
    ``converged=False`` rather than raised.
    """
    report = _check_admissible(spec, allow_inadmissible)
    in_theory = report.admissible
    if u_init is None:
        u = solve_linear_robin(spec)
    else:
        u = np.array(u_init, dtype=float)
        if in_theory and spec.norm(u) > report.M0 + BALL_SLACK:
            raise ValueError(f"||u_init||_V = {spec.norm(u):.6g} exceeds M0 = {report.M0:.6g}")
    norms = [spec.norm(u)]
    increments, ratios = [], []
    iterates = [u] if keep_iterates else []
    converged = False
    it = 0
    while it < max_iter:
        u_next = solve_intermediate(spec, u, allow_inadmissible=allow_inadmissible,
                                    check_ball=in_theory, x0=u)
        it += 1
        inc = spec.norm(u_next - u)
        if increments:
            ratios.append(inc / increments[-1] if increments[-1] > 0 else 0.0)
        increments.append(inc)
        u = u_next
        norms.append(spec.norm(u))
        if keep_iterates:
            iterates.append(u)
        if inc <= tol * max(1.0, norms[-1]):
            converged = True
            break
    res = boundary_residual(spec, u)
    if converged and in_theory and norms[-1] > report.M0 * (1 + BALL_SLACK):
        log.warning("converged solution violates the energy bound: %.12g > %.12g", norms[-1], report.M0)
    return u, PicardReport(norms, increments, ratios, report.K_derivation, report.K_paper,
                           converged, it, res, in_theory, iterates)


@dataclass
class Verification:
    energy_norm: float
    M0: float
    fixed_point_gap: float
    residual: float
    failures: list

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"energy_norm": self.energy_norm, "M0": self.M0, "fixed_point_gap": self.fixed_point_gap,
                "residual": self.residual, "passed": self.passed, "failures": list(self.failures)}


def verify_solution(spec: ProblemSpec, u, report: AdmissibilityReport | None = None,
                    tol: float = 1e-10) -> Verification:
    """Energy bound, fixed-point property and residual checks; never raises."""
    report = spec.admissibility if report is None else report
    u = np.asarray(u, dtype=float)
    failures = []
    un = spec.norm(u)
    if not un <= report.M0 * (1 + BALL_SLACK):
        failures.append(f"energy bound: ||u||_V = {un:.6g} > M0 = {report.M0:.6g}")
    try:
        u1 = solve_intermediate(spec, u, allow_inadmissible=True, check_ball=False)
        gap = spec.norm(u1 - u)
    except Exception as exc:  # any solver breakdown is a failed check here
        gap = math.inf
        failures.append(f"fixed point: linearized solve failed ({exc})")
    if gap > 10 * tol and math.isfinite(gap):
        failures.append(f"fixed point: ||T(u) - u||_V = {gap:.3g} > {10 * tol:.3g}")
    res = boundary_residual(spec, u)
    if not res <= 10 * tol:
        failures.append(f"residual: {res:.3g} > {10 * tol:.3g}")
    return Verification(un, report.M0, gap, res, failures)


def nonlinear_defect(spec: ProblemSpec, u, u_prev, u_cur, n_points: int = 12) -> float:
    """``int_R |psi (u^2 - u_prev u_cur)|`` by Gauss-Legendre quadrature per edge."""
    quad = edge_quadrature(spec.mesh, ROBIN)
    t, w = np.polynomial.legendre.leggauss(n_points)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    e = quad.edges
    p0 = spec.mesh.nodes[e[:, 0]]
    p1 = spec.mesh.nodes[e[:, 1]]
    pts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
    psi = spec.psi(pts.reshape(-1, 2)).reshape(len(e), n_points)

    def trace(v):
        full = spec.dofs.expand(v)
        return full[e[:, 0], None] * (1 - t) + full[e[:, 1], None] * t

    tu, ta, tb = trace(u), trace(u_prev), trace(u_cur)
    vals = np.abs(psi * (tu * tu - ta * tb))
    return float(np.sum(quad.lengths[:, None] * w[None, :] * vals))
