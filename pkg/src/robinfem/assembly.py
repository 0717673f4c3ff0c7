"""P1 assembly of the bilinear and linear forms, and discrete norms.

Matrices are ``scipy.sparse.csr_matrix``. Passing a :class:`DofMap` restricts
a matrix or vector to the free (non-Dirichlet) nodes; passing ``None`` keeps
every node, which is handy for checks such as ``K @ 1 == 0``.

Boundary integrals use the two-point Gauss rule on every (straight) edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .geometry import BoundaryTag, Mesh

_GAUSS_T = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])
_GAUSS_W = np.array([0.5, 0.5])


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryField:
    """A scalar function on boundary points.

    ``func`` maps an ``(k, 2)`` array of points to ``k`` values. ``value`` is set
    for constant fields and is what gets serialized.
    """

    func: Callable[[np.ndarray], np.ndarray]
    label: str = "function"
    value: float | None = None

    @classmethod
    def constant(cls, value: float) -> "BoundaryField":
        v = float(value)
        return cls(lambda pts, v=v: np.full(len(pts), v), f"constant({v!r})", v)

    @classmethod
    def from_function(cls, func, label: str = "function") -> "BoundaryField":
        return cls(func, label)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        vals = np.broadcast_to(np.asarray(self.func(points), dtype=float), (len(points),))
        if not np.all(np.isfinite(vals)):
            raise AssemblyError(f"boundary field {self.label} is not finite at some points")
        return np.array(vals)

    @property
    def is_zero(self) -> bool:
        return self.value == 0.0


ZERO = BoundaryField.constant(0.0)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Free/constrained split of the mesh nodes; Dirichlet nodes are constrained."""

    n_nodes: int
    free: np.ndarray
    constrained: np.ndarray
    node_to_dof: np.ndarray

    @property
    def n_free(self) -> int:
        return len(self.free)

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Free-dof vector -> nodal vector, zero on Dirichlet nodes."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_free,):
            raise AssemblyError(f"expected {self.n_free} free values, got shape {u.shape}")
        full = np.zeros(self.n_nodes)
        full[self.free] = u
        return full

    def restrict(self, full: np.ndarray) -> np.ndarray:
        full = np.asarray(full, dtype=float)
        if full.shape != (self.n_nodes,):
            raise AssemblyError(f"expected {self.n_nodes} nodal values, got shape {full.shape}")
        return full[self.free].copy()


def build_dof_map(mesh: Mesh) -> DofMap:
    constrained = mesh.tag_nodes(BoundaryTag.DIRICHLET)
    if len(constrained) == 0:
        raise AssemblyError("mesh has no Dirichlet edge: the V-norm would not be a norm")
    mask = np.ones(mesh.n_nodes, bool)
    mask[constrained] = False
    free = np.flatnonzero(mask)
    node_to_dof = np.full(mesh.n_nodes, -1, dtype=np.int64)
    node_to_dof[free] = np.arange(len(free))
    for arr in (free, constrained, node_to_dof):
        arr.setflags(write=False)
    return DofMap(mesh.n_nodes, free, constrained, node_to_dof)


def _restrict_matrix(A: sp.spmatrix, dofs: DofMap | None) -> sp.csr_matrix:
    A = A.tocsr()
    if dofs is None:
        return A
    return A[dofs.free][:, dofs.free].tocsr()


def _restrict_vector(b: np.ndarray, dofs: DofMap | None) -> np.ndarray:
    return b if dofs is None else b[dofs.free]


# --------------------------------------------------------------------------
# domain forms
# --------------------------------------------------------------------------

def p1_gradients(mesh: Mesh):
    """Per-triangle basis gradients, shape (m, 3, 2), and areas."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas()
    if np.any(area <= 0):
        bad = int(np.flatnonzero(area <= 0)[0])
        raise AssemblyError(f"degenerate or clockwise triangle {bad} (area {area[bad]:.3g})")
    x, y = p[..., 0], p[..., 1]
    grads = np.empty((len(p), 3, 2))
    for i, (j, k) in enumerate(((1, 2), (2, 0), (0, 1))):
        grads[:, i, 0] = y[:, j] - y[:, k]
        grads[:, i, 1] = x[:, k] - x[:, j]
    grads /= (2.0 * area)[:, None, None]
    return grads, area


def assemble_stiffness(mesh: Mesh, dofs: DofMap | None) -> sp.csr_matrix:
    """Matrix of the V inner product, ``int grad u . grad v``."""
    grads, area = p1_gradients(mesh)
    ke = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2)
    return _restrict_matrix(K, dofs)


# --------------------------------------------------------------------------
# boundary forms
# --------------------------------------------------------------------------

class EdgeQuadrature(NamedTuple):
    edges: np.ndarray    # (k, 2) node indices
    lengths: np.ndarray  # (k,)
    points: np.ndarray   # (k, 2, 2) Gauss points per edge
    weights: np.ndarray  # (k, 2) physical weights
    shape: np.ndarray    # (2, 2) basis values: shape[q, a]


def edge_quadrature(mesh: Mesh, tag: BoundaryTag) -> EdgeQuadrature:
    edges = mesh.edges_with_tag(BoundaryTag.parse(tag))
    p0 = mesh.nodes[edges[:, 0]]
    p1 = mesh.nodes[edges[:, 1]]
    lengths = mesh.edge_lengths(edges)
    pts = p0[:, None, :] + _GAUSS_T[None, :, None] * (p1 - p0)[:, None, :]
    weights = lengths[:, None] * _GAUSS_W[None, :]
    shape = np.column_stack([1.0 - _GAUSS_T, _GAUSS_T])
    return EdgeQuadrature(edges, lengths, pts, weights, shape)


def _weight_at_points(quad: EdgeQuadrature, weight) -> np.ndarray:
    """Weight values at Gauss points, shape (k, 2)."""
    k = len(quad.edges)
    if weight is None:
        return np.ones((k, 2))
    if isinstance(weight, BoundaryField):
        return weight(quad.points.reshape(-1, 2)).reshape(k, 2)
    if np.isscalar(weight):
        return np.full((k, 2), float(weight))
    nodal = np.asarray(weight, dtype=float)
    # piecewise-linear trace of a nodal field
    return nodal[quad.edges] @ quad.shape.T


def assemble_boundary_mass(mesh: Mesh, dofs: DofMap | None, tag: BoundaryTag, weight=None,
                           nodal_factor=None) -> sp.csr_matrix:
    """Matrix of ``int_tag w u v``.

    ``weight`` may be ``None`` (w = 1), a scalar, a :class:`BoundaryField`, or a
    nodal array over all mesh nodes whose piecewise-linear trace is used.
    ``nodal_factor``, a nodal array, multiplies the weight by its trace; this
    is how ``psi * f`` enters the linearized Robin term.
    """
    quad = edge_quadrature(mesh, tag)
    w = _weight_at_points(quad, weight) * quad.weights
    if nodal_factor is not None:
        w = w * _weight_at_points(quad, np.asarray(nodal_factor, dtype=float))
    me = np.einsum("eq,qa,qb->eab", w, quad.shape, quad.shape)
    e = quad.edges
    rows = np.repeat(e, 2, axis=1).ravel()
    cols = np.tile(e, (1, 2)).ravel()
    M = sp.coo_matrix((me.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2)
    return _restrict_matrix(M, dofs)


def assemble_boundary_load(mesh: Mesh, dofs: DofMap | None, tag: BoundaryTag, data) -> np.ndarray:
    """Vector of ``int_tag data * phi_i``."""
    quad = edge_quadrature(mesh, tag)
    f = _weight_at_points(quad, data) * quad.weights
    be = f @ quad.shape
    b = np.bincount(quad.edges.ravel(), weights=be.ravel(), minlength=mesh.n_nodes)
    return _restrict_vector(b, dofs)


def boundary_field_l2_norm(mesh: Mesh, tag: BoundaryTag, data) -> float:
    """``sqrt(sum_q w_q data(x_q)^2)`` with the same rule used for loads."""
    quad = edge_quadrature(mesh, tag)
    f = _weight_at_points(quad, data)
    return math.sqrt(float(np.sum(quad.weights * f * f)))


def boundary_field_extrema(mesh: Mesh, tag: BoundaryTag, data) -> tuple[float, float]:
    """(min, max) of a field over Gauss points and vertices of the tagged part."""
    quad = edge_quadrature(mesh, tag)
    if len(quad.edges) == 0:
        return 0.0, 0.0
    nodes = mesh.nodes[np.unique(quad.edges)]
    if isinstance(data, BoundaryField):
        vals = np.concatenate([data(quad.points.reshape(-1, 2)), data(nodes)])
    else:
        vals = _weight_at_points(quad, data).ravel()
    return float(vals.min()), float(vals.max())


# --------------------------------------------------------------------------
# norms
# --------------------------------------------------------------------------

def v_norm(u: np.ndarray, K: sp.spmatrix) -> float:
    """``sqrt(u^T K u)``, the discrete V-norm."""
    u = np.asarray(u, dtype=float)
    if u.shape != (K.shape[0],):
        raise AssemblyError(f"vector of shape {u.shape} does not match matrix of size {K.shape[0]}")
    return math.sqrt(max(float(u @ (K @ u)), 0.0))


def _edge_abs_power(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    """``int_0^1 |a + (b - a) t|^p dt`` for p in {2, 3}, edgewise."""
    if p == 2:
        return (a * a + a * b + b * b) / 3.0
    aa, bb = np.abs(a), np.abs(b)
    same = a * b >= 0
    out = np.empty_like(aa)
    out[same] = (aa**3 + aa**2 * bb + aa * bb**2 + bb**3)[same] / 4.0
    opp = ~same
    out[opp] = (aa**4 + bb**4)[opp] / (4.0 * (aa + bb)[opp])
    return out


def boundary_lp_norm(mesh: Mesh, tag: BoundaryTag, u: np.ndarray, p) -> float:
    """L^p norm (p = 2, 3 or inf) of the piecewise-linear trace of nodal ``u``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise AssemblyError(f"expected nodal vector of length {mesh.n_nodes}")
    edges = mesh.edges_with_tag(BoundaryTag.parse(tag))
    if p in (math.inf, "inf", np.inf):
        return float(np.max(np.abs(u[np.unique(edges)]), initial=0.0))
    if p not in (2, 3):
        raise AssemblyError(f"unsupported exponent p={p!r}; use 2, 3 or inf")
    lengths = mesh.edge_lengths(edges)
    # scale out max |u| so tiny or huge fields neither underflow nor overflow
    scale = float(np.max(np.abs(u[np.unique(edges)]), initial=0.0))
    if scale == 0.0:
        return 0.0
    a, b = u[edges[:, 0]] / scale, u[edges[:, 1]] / scale
    total = float(np.sum(lengths * _edge_abs_power(a, b, p)))
    return scale * total ** (1.0 / p)


def boundary_l3_cubed(mesh: Mesh, tag: BoundaryTag, u: np.ndarray, edges=None, lengths=None):
    """``int_tag |u|^3`` and its gradient with respect to the nodal values."""
    if edges is None:
        edges = mesh.edges_with_tag(BoundaryTag.parse(tag))
        lengths = mesh.edge_lengths(edges)
    a, b = u[edges[:, 0]], u[edges[:, 1]]
    value = float(np.sum(lengths * _edge_abs_power(a, b, 3)))
    ga = _edge_cube_grad(a, b)
    gb = _edge_cube_grad(b, a)
    grad = np.bincount(edges[:, 0], weights=lengths * ga, minlength=len(u))
    grad += np.bincount(edges[:, 1], weights=lengths * gb, minlength=len(u))
    return value, grad


def _edge_cube_grad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """d/da of ``int_0^1 |a + (b - a) t|^3 dt``."""
    aa, bb = np.abs(a), np.abs(b)
    # at a == 0 the one-sided derivatives agree and carry the sign of b
    s = np.where(a != 0, np.sign(a), np.sign(b))
    same = a * b >= 0
    out = np.empty_like(aa)
    out[same] = (s * (3 * aa**2 + 2 * aa * bb + bb**2))[same] / 4.0
    opp = ~same
    den = (aa + bb)[opp]
    out[opp] = (s[opp] * (4 * aa[opp] ** 3 * den - (aa[opp] ** 4 + bb[opp] ** 4))) / (4.0 * den**2)
    return out


def write_coo(A: sp.spmatrix, path) -> None:
    """Write ``<row> <col> <value>`` lines for debugging."""
    C = A.tocoo()
    with open(path, "w") as fh:
        for r, c, v in zip(C.row, C.col, C.data):
            fh.write(f"{r} {c} {v!r}\n")
