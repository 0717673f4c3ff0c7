"""Triangular meshes of disks and half-disks with a tagged boundary.

The boundary of every mesh is split into Dirichlet, Neumann and Robin parts.
Meshes are built from an :class:`AngularPartition` of the circle (or of the
upper arc for the half-disk) and refined uniformly, with new boundary
midpoints pushed back onto the circle.

Example
-------
>>> part = AngularPartition.from_breakpoints(1.0, [0, 1.0, 2.5, 2 * np.pi], "DNR")
>>> mesh = refine_uniform(build_disk_mesh(part, 0))
>>> sorted(t.value for t in BoundaryTag if boundary_measure(mesh, t) > 0)
['D', 'N', 'R']
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
MIN_ARC_LENGTH = 1e-12
_ANGLE_TOL = 1e-12


class BoundaryTag(str, enum.Enum):
    DIRICHLET = "D"
    NEUMANN = "N"
    ROBIN = "R"

    @classmethod
    def parse(cls, value) -> "BoundaryTag":
        if isinstance(value, cls):
            return value
        key = str(value).strip()
        for tag in cls:
            if key.upper() in (tag.value, tag.name):
                return tag
        lowered = key.lower()
        for tag in cls:
            if tag.name.lower() == lowered:
                return tag
        raise ValueError(f"unknown boundary tag {value!r}")


TAG_CODES = {BoundaryTag.DIRICHLET: 0, BoundaryTag.NEUMANN: 1, BoundaryTag.ROBIN: 2}
CODE_TAGS = {v: k for k, v in TAG_CODES.items()}


class PartitionError(ValueError):
    """Raised for an angular partition that does not split the boundary properly."""


class Arc(NamedTuple):
    tag: BoundaryTag
    start: float
    end: float

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class AngularPartition:
    """Ordered arcs ``(tag, start, end)`` covering ``(0, span)`` of a circle.

    ``span`` is ``2*pi`` for a full disk and ``pi`` for the curved part of the
    upper half-disk. Construction validates the partition and raises
    :class:`PartitionError` with a description of the first problem found.
    """

    radius: float
    arcs: tuple
    span: float = TWO_PI

    def __post_init__(self):
        arcs = tuple(Arc(BoundaryTag.parse(a[0]), float(a[1]), float(a[2])) for a in self.arcs)
        object.__setattr__(self, "arcs", arcs)
        self._check()

    def _check(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise PartitionError(f"radius must be positive and finite, got {self.radius}")
        if not self.arcs:
            raise PartitionError("partition has no arcs")
        for i, arc in enumerate(self.arcs):
            if not (math.isfinite(arc.start) and math.isfinite(arc.end)):
                raise PartitionError(f"arc {i} has non-finite endpoints")
            if arc.length < MIN_ARC_LENGTH:
                raise PartitionError(
                    f"arc {i} ({arc.tag.name}) has angular length {arc.length:.3g} < {MIN_ARC_LENGTH:g}"
                )
        if abs(self.arcs[0].start) > _ANGLE_TOL:
            raise PartitionError(f"first arc must start at 0, starts at {self.arcs[0].start!r}")
        if abs(self.arcs[-1].end - self.span) > _ANGLE_TOL:
            raise PartitionError(f"last arc must end at {self.span!r}, ends at {self.arcs[-1].end!r}")
        for i in range(len(self.arcs) - 1):
            gap = self.arcs[i + 1].start - self.arcs[i].end
            if gap < -_ANGLE_TOL:
                raise PartitionError(f"arcs {i} and {i + 1} overlap")
            if gap > _ANGLE_TOL:
                raise PartitionError(f"gap between arcs {i} and {i + 1}")
        missing = {t for t in BoundaryTag} - {a.tag for a in self.arcs}
        if self.span == TWO_PI and missing:
            names = ", ".join(sorted(t.name for t in missing))
            raise PartitionError(f"tags missing from partition: {names}")

    @classmethod
    def from_breakpoints(cls, radius: float, breakpoints: Sequence[float], tags, span: float = TWO_PI):
        """Partition with arcs ``(breakpoints[i], breakpoints[i+1])`` tagged ``tags[i]``.

        ``breakpoints`` runs from 0 to ``span``. A finite angular partition
        ``0 < t_1 < ... < t_n = 2*pi`` whose last arc wraps around through 0
        is written here as ``[0, t_1, ..., t_n]`` with the wrap arc first.
        """
        bp = [float(b) for b in breakpoints]
        tags = [BoundaryTag.parse(t) for t in tags]
        if len(tags) != len(bp) - 1:
            raise PartitionError(f"need {len(bp) - 1} tags for {len(bp)} breakpoints, got {len(tags)}")
        return cls(radius, tuple(Arc(t, a, b) for t, a, b in zip(tags, bp[:-1], bp[1:])), span)

    def tag_at(self, theta: np.ndarray) -> np.ndarray:
        """Tag codes of the arcs containing the angles ``theta`` (taken mod span)."""
        theta = np.mod(np.asarray(theta, dtype=float), self.span) if self.span == TWO_PI else np.asarray(theta)
        ends = np.array([a.end for a in self.arcs])
        idx = np.searchsorted(ends, theta, side="left")
        idx = np.clip(idx, 0, len(self.arcs) - 1)
        codes = np.array([TAG_CODES[a.tag] for a in self.arcs])
        return codes[idx]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with tagged boundary edges.

    Attributes
    ----------
    nodes : (n, 2) float array
    triangles : (m, 3) int array, counter-clockwise
    boundary_edges : (k, 2) int array, oriented with the domain on the left
    boundary_tags : (k,) int array of tag codes (see ``TAG_CODES``)
    curved : (k,) bool array, True for edges approximating the circle
    radius : radius of the circle the curved edges live on
    level : refinement depth
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    curved: np.ndarray
    radius: float
    level: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name, dtype in (("nodes", float), ("triangles", np.int64), ("boundary_edges", np.int64),
                            ("boundary_tags", np.int64), ("curved", bool)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def tag_mask(self, tag: BoundaryTag) -> np.ndarray:
        return self.boundary_tags == TAG_CODES[BoundaryTag.parse(tag)]

    def edges_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        return self.boundary_edges[self.tag_mask(tag)]

    def tag_nodes(self, tag: BoundaryTag) -> np.ndarray:
        """Sorted node indices on the closure of the tagged boundary part."""
        return np.unique(self.edges_with_tag(tag))

    def edge_lengths(self, edges: np.ndarray | None = None) -> np.ndarray:
        edges = self.boundary_edges if edges is None else edges
        d = self.nodes[edges[:, 1]] - self.nodes[edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def max_diameter(self) -> float:
        """Largest triangle edge length (the mesh size h)."""
        p = self.nodes[self.triangles]
        d = np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return float(np.max(np.hypot(d[:, 0], d[:, 1])))

    def edges(self):
        """Unique undirected edges and, for each, the number of triangles using it."""
        if "edges" not in self._cache:
            t = self.triangles
            all_edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
            uniq, counts = np.unique(all_edges, axis=0, return_counts=True)
            self._cache["edges"] = (uniq, counts)
        return self._cache["edges"]


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def _segment_counts(lengths: np.ndarray, n_target: int) -> np.ndarray:
    """Segments per arc: proportional to length, at least one, even total."""
    h = lengths.sum() / n_target
    counts = np.maximum(1, np.rint(lengths / h).astype(int))
    if counts.sum() % 2:
        counts[np.argmax(lengths / counts)] += 1
    return counts


def _arc_angles(arcs: Sequence[Arc], n_target: int, closed: bool) -> np.ndarray:
    lengths = np.array([a.length for a in arcs])
    counts = _segment_counts(lengths, n_target)
    pieces = [np.linspace(a.start, a.end, c + 1)[:-1] for a, c in zip(arcs, counts)]
    if not closed:
        pieces.append([arcs[-1].end])
    return np.concatenate(pieces)


def _fan_mesh(radius: float, angles: np.ndarray, closed: bool):
    """Centre node, one ring at half radius on every other boundary angle, outer layer."""
    nb = len(angles)
    boundary = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    ring_idx = np.arange(0, nb, 2)
    ring = 0.5 * boundary[ring_idx]
    nodes = np.vstack([[0.0, 0.0], ring, boundary])
    nr = len(ring)
    centre = 0
    r = lambda j: 1 + (j % nr)  # noqa: E731
    b = lambda i: 1 + nr + (i % nb)  # noqa: E731
    n_sectors = nr if closed else nr - 1
    tris = []
    for j in range(n_sectors):
        tris.append((centre, r(j), r(j + 1)))
        tris.append((r(j), b(2 * j), b(2 * j + 1)))
        tris.append((r(j), b(2 * j + 1), r(j + 1)))
        tris.append((r(j + 1), b(2 * j + 1), b(2 * j + 2)))
    n_arc_edges = nb if closed else nb - 1
    arc_edges = np.array([(b(i), b(i + 1)) for i in range(n_arc_edges)])
    return nodes, np.array(tris), arc_edges, r, b, nr


def _default_target(n_arcs: int) -> int:
    return 2 * max(8, n_arcs)


def build_disk_mesh(partition: AngularPartition, level: int = 0) -> Mesh:
    """Mesh of the disk of radius ``partition.radius`` refined ``level`` times.

    All arc endpoints are boundary vertices; each boundary edge takes the tag of
    the arc containing its midpoint angle.
    """
    if partition.span != TWO_PI:
        raise PartitionError("disk partitions must cover (0, 2*pi)")
    if level < 0:
        raise ValueError("level must be >= 0")
    angles = _arc_angles(partition.arcs, _default_target(len(partition.arcs)), closed=True)
    nodes, tris, edges, _, _, _ = _fan_mesh(partition.radius, angles, closed=True)
    a0 = angles
    a1 = np.append(angles[1:], TWO_PI)
    tags = partition.tag_at(0.5 * (a0 + a1))
    mesh = Mesh(nodes, tris, edges, tags, np.ones(len(edges), bool), partition.radius, 0)
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def build_half_disk_mesh(radius: float, split_angle: float, level: int = 0) -> Mesh:
    """Upper half-disk: Dirichlet diameter, Neumann arc ``(0, split)``, Robin arc ``(split, pi)``."""
    if not (0.0 < split_angle < math.pi):
        raise PartitionError(f"split_angle must lie in (0, pi), got {split_angle!r}")
    if level < 0:
        raise ValueError("level must be >= 0")
    arc_part = AngularPartition(
        radius, ((BoundaryTag.NEUMANN, 0.0, split_angle), (BoundaryTag.ROBIN, split_angle, math.pi)), math.pi
    )
    angles = _arc_angles(arc_part.arcs, _default_target(4), closed=False)
    nodes, tris, arc_edges, r, b, nr = _fan_mesh(radius, angles, closed=False)
    nb = len(angles)
    # diameter from (-R, 0) back to (R, 0), keeping the domain on the left
    diameter = np.array([(b(nb - 1), r(nr - 1)), (r(nr - 1), 0), (0, r(0)), (r(0), b(0))])
    edges = np.vstack([arc_edges, diameter])
    arc_tags = arc_part.tag_at(0.5 * (angles[:-1] + angles[1:]))
    tags = np.concatenate([arc_tags, np.full(4, TAG_CODES[BoundaryTag.DIRICHLET])])
    curved = np.concatenate([np.ones(len(arc_edges), bool), np.zeros(4, bool)])
    mesh = Mesh(nodes, tris, edges, tags, curved, radius, 0)
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four through its edge midpoints.

    Midpoints of curved boundary edges are projected radially onto the circle.
    """
    t = mesh.triangles
    n = mesh.n_nodes
    all_edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    uniq, inverse = np.unique(np.sort(all_edges, axis=1), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])

    # locate boundary edges among the unique edges
    be_sorted = np.sort(mesh.boundary_edges, axis=1)
    key = uniq[:, 0] * n + uniq[:, 1]
    order = np.argsort(key)
    pos = order[np.searchsorted(key, be_sorted[:, 0] * n + be_sorted[:, 1], sorter=order)]
    curved_pos = pos[mesh.curved]
    if len(curved_pos):
        m = mids[curved_pos]
        mids[curved_pos] = m * (mesh.radius / np.hypot(m[:, 0], m[:, 1]))[:, None]

    nodes = np.vstack([mesh.nodes, mids])
    m = len(t)
    e01, e12, e20 = (n + inverse[:m], n + inverse[m:2 * m], n + inverse[2 * m:])
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    tris = np.concatenate([
        np.column_stack([a, e01, e20]),
        np.column_stack([e01, b, e12]),
        np.column_stack([e20, e12, c]),
        np.column_stack([e01, e12, e20]),
    ])
    mid_b = n + pos
    be = mesh.boundary_edges
    new_edges = np.empty((2 * len(be), 2), dtype=np.int64)
    new_edges[0::2] = np.column_stack([be[:, 0], mid_b])
    new_edges[1::2] = np.column_stack([mid_b, be[:, 1]])
    return Mesh(
        nodes, tris, new_edges,
        np.repeat(mesh.boundary_tags, 2), np.repeat(mesh.curved, 2),
        mesh.radius, mesh.level + 1,
    )


# --------------------------------------------------------------------------
# queries
# --------------------------------------------------------------------------

def boundary_measure(mesh: Mesh, tag: BoundaryTag) -> float:
    """Total length of the boundary edges carrying ``tag``."""
    return float(mesh.edge_lengths(mesh.edges_with_tag(tag)).sum())


def count_chains(mesh: Mesh, tag: BoundaryTag) -> int:
    """Number of connected chains formed by the edges carrying ``tag``."""
    edges = mesh.edges_with_tag(tag)
    if len(edges) == 0:
        return 0
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
    return len({find(int(v)) for v in np.unique(edges)})


def validate_partition(mesh: Mesh) -> list[str]:
    """Check the boundary tagging; returns a list of violations (empty if valid)."""
    problems = []
    if np.any(mesh.signed_areas() <= 0):
        problems.append("non-positive triangle area")
    uniq, counts = mesh.edges()
    if np.any(counts > 2):
        problems.append("edge shared by more than two triangles")
    topo = {tuple(e) for e in uniq[counts == 1]}

    tagged = {}
    for (a, b), code in zip(np.sort(mesh.boundary_edges, axis=1), mesh.boundary_tags):
        key = (int(a), int(b))
        if key in tagged and tagged[key] != code:
            problems.append(f"edge {key} carries two tags")
        tagged.setdefault(key, int(code))
    if set(tagged) - topo:
        problems.append("tagged edge is not on the mesh boundary")
    if topo - set(tagged):
        problems.append("untagged boundary edge")

    degree = np.bincount(mesh.boundary_edges.ravel(), minlength=mesh.n_nodes)
    if np.any((degree != 0) & (degree != 2)):
        problems.append("boundary not closed")

    for tag in BoundaryTag:
        if boundary_measure(mesh, tag) <= 0:
            problems.append(f"zero measure: {tag.name}")
    return problems


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def format_mesh(mesh: Mesh) -> str:
    lines = ["$Nodes", str(mesh.n_nodes)]
    lines += [f"{i} {_fmt(x)} {_fmt(y)}" for i, (x, y) in enumerate(mesh.nodes)]
    lines += ["$Triangles", str(mesh.n_triangles)]
    lines += [f"{i} {a} {b} {c}" for i, (a, b, c) in enumerate(mesh.triangles)]
    lines += ["$BoundaryEdges", str(len(mesh.boundary_edges))]
    lines += [
        f"{i} {a} {b} {CODE_TAGS[int(code)].value}"
        for i, ((a, b), code) in enumerate(zip(mesh.boundary_edges, mesh.boundary_tags))
    ]
    lines.append("$End")
    return "\n".join(lines) + "\n"


def write_mesh(mesh: Mesh, path) -> None:
    Path(path).write_text(format_mesh(mesh))


def parse_mesh(text: str) -> Mesh:
    """Inverse of :func:`format_mesh`.

    The format carries no radius, curvature or level: the radius is taken as
    the largest node distance from the origin, an edge is curved when both its
    endpoints lie on that circle, and the level is 0.
    """
    tokens = text.split()
    pos = 0

    def expect(word):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != word:
            found = tokens[pos] if pos < len(tokens) else "end of file"
            raise ValueError(f"mesh format: expected {word}, found {found}")
        pos += 1

    def section(word, width):
        nonlocal pos
        expect(word)
        count = int(tokens[pos])
        pos += 1
        rows = tokens[pos:pos + count * width]
        if len(rows) != count * width:
            raise ValueError(f"mesh format: truncated {word} section")
        pos += count * width
        return [rows[i * width:(i + 1) * width] for i in range(count)]

    node_rows = section("$Nodes", 3)
    tri_rows = section("$Triangles", 4)
    edge_rows = section("$BoundaryEdges", 4)
    expect("$End")
    for rows, name in ((node_rows, "node"), (tri_rows, "triangle"), (edge_rows, "edge")):
        if [int(r[0]) for r in rows] != list(range(len(rows))):
            raise ValueError(f"mesh format: {name} ids must be 0..n-1 in order")
    nodes = np.array([[float(r[1]), float(r[2])] for r in node_rows])
    tris = np.array([[int(v) for v in r[1:]] for r in tri_rows], dtype=np.int64)
    edges = np.array([[int(r[1]), int(r[2])] for r in edge_rows], dtype=np.int64).reshape(-1, 2)
    tags = np.array([TAG_CODES[BoundaryTag.parse(r[3])] for r in edge_rows], dtype=np.int64)
    rad = np.hypot(nodes[:, 0], nodes[:, 1])
    radius = float(rad.max())
    on_circle = np.abs(rad - radius) <= 1e-12 * radius
    curved = on_circle[edges[:, 0]] & on_circle[edges[:, 1]] if len(edges) else np.zeros(0, bool)
    return Mesh(nodes, tris, edges, tags, curved, radius, 0)


def read_mesh(path) -> Mesh:
    return parse_mesh(Path(path).read_text())
