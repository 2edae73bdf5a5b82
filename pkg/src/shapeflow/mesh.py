"""Triangular meshes with boundary/interface markers.

A mesh is the discrete shape iterate: nodes, counterclockwise triangles,
a per-cell region label (inside/outside a closed interface, or bulk), and
marked edges.  Marked edges carry one of four markers:

* ``OUTER``        -- fixed outer boundary,
* ``DIRICHLET``    -- fixed boundary with homogeneous displacement,
* ``NEUMANN_LOAD`` -- fixed boundary carrying a surface load,
* ``SHAPE``        -- the movable shape (closed loops).

Markers live on explicit edge lists plus a per-node shape flag, so they
survive arbitrary node motion.  Meshes are immutable value objects; every
operation returns a new mesh.
"""

from __future__ import annotations

import numpy as np

from dataclasses import dataclass, field
from functools import cached_property

OUTER = 0
DIRICHLET = 1
NEUMANN_LOAD = 2
SHAPE = 3

MARKER_NAMES = {OUTER: "outer", DIRICHLET: "dirichlet",
                NEUMANN_LOAD: "neumann", SHAPE: "shape"}
MARKER_IDS = {v: k for k, v in MARKER_NAMES.items()}


class MeshValidationError(ValueError):
    """Mesh data violates a structural invariant."""


class InvertedElement(RuntimeError):
    """A deformation produced a triangle with non-positive signed area."""


class MeshFileError(ValueError):
    """Mesh file is malformed or internally inconsistent."""


@dataclass(frozen=True)
class Mesh:
    """Immutable 2D triangular mesh with markers.

    Parameters
    ----------
    nodes : (N, 2) float array
        Node coordinates.
    triangles : (M, 3) int array
        Node indices per triangle, counterclockwise.
    cell_region : (M,) int array
        Region label per cell (1 inside the shape, 0 outside/bulk).
    boundary_edges : (B, 2) int array
        Node pairs of marked edges (outer boundary plus shape polylines).
    boundary_markers : (B,) int array
        Marker per marked edge, one of OUTER/DIRICHLET/NEUMANN_LOAD/SHAPE.
    node_is_shape : (N,) bool array
        True for nodes lying on the movable shape boundary.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    cell_region: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: np.ndarray
    node_is_shape: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes",
                           np.ascontiguousarray(self.nodes, dtype=float))
        object.__setattr__(self, "triangles",
                           np.ascontiguousarray(self.triangles, dtype=np.int64))
        object.__setattr__(self, "cell_region",
                           np.ascontiguousarray(self.cell_region, dtype=np.int64))
        edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64)
        object.__setattr__(self, "boundary_edges", edges.reshape(-1, 2))
        object.__setattr__(self, "boundary_markers",
                           np.ascontiguousarray(self.boundary_markers, dtype=np.int64))
        object.__setattr__(self, "node_is_shape",
                           np.ascontiguousarray(self.node_is_shape, dtype=bool))
        for arr in (self.nodes, self.triangles, self.cell_region,
                    self.boundary_edges, self.boundary_markers, self.node_is_shape):
            arr.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_cells(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        """Signed area per triangle (positive for CCW orientation)."""
        return signed_areas(self.nodes, self.triangles)

    @cached_property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    def edges_with(self, marker: int) -> np.ndarray:
        """Marked edges with the given marker, as an (E, 2) index array."""
        return self.boundary_edges[self.boundary_markers == marker]

    def nodes_with(self, marker: int) -> np.ndarray:
        """Sorted node indices incident to edges carrying the marker."""
        return np.unique(self.edges_with(marker))

    @cached_property
    def fixed_boundary_nodes(self) -> np.ndarray:
        """Nodes on non-SHAPE marked edges; deformation fields vanish here."""
        return np.unique(self.boundary_edges[self.boundary_markers != SHAPE])

    def with_nodes(self, nodes: np.ndarray) -> "Mesh":
        """Copy of the mesh with new node positions, same connectivity."""
        return Mesh(nodes, self.triangles, self.cell_region,
                    self.boundary_edges, self.boundary_markers, self.node_is_shape)


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def triangle_quality(p0, p1, p2) -> float:
    """Quality 2*inradius/circumradius of a single triangle, in [0, 1].

    Equals 1 exactly for equilateral triangles and tends to 0 as the
    triangle degenerates; collinear points give 0 (not an error).
    Negative-area input is clamped via the absolute area.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    a = np.hypot(*(p1 - p0))
    b = np.hypot(*(p2 - p1))
    c = np.hypot(*(p0 - p2))
    if a == 0.0 or b == 0.0 or c == 0.0:
        return 0.0
    cross = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
    area = 0.5 * abs(cross)
    if area == 0.0:
        return 0.0
    # 2r/R with r = area/s and R = abc/(4 area)
    q = 16.0 * area * area / ((a + b + c) * a * b * c)
    return min(q, 1.0)


def triangle_qualities(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Vectorized 2*inradius/circumradius for every triangle."""
    p = nodes[triangles]
    a = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    area = np.abs(signed_areas(nodes, triangles))
    denom = (a + b + c) * a * b * c
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(denom > 0.0, 16.0 * area * area / denom, 0.0)
    return np.minimum(q, 1.0)


def mesh_quality(mesh: Mesh) -> float:
    """Minimum triangle quality over the mesh."""
    if mesh.n_cells == 0:
        raise MeshValidationError("mesh has no triangles")
    return float(triangle_qualities(mesh.nodes, mesh.triangles).min())


def deform(mesh: Mesh, values: np.ndarray, t: float) -> Mesh:
    """Move nodes to ``x + t * field(x)``, keeping connectivity and markers.

    Raises
    ------
    InvertedElement
        If any triangle's signed area becomes non-positive.  The caller is
        expected to react by reducing the stepsize.
    """
    if hasattr(values, "values"):
        values = values.values
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_nodes, 2):
        raise ValueError(f"deformation field must have shape {(mesh.n_nodes, 2)}")
    if t == 0.0:
        return mesh
    new_nodes = mesh.nodes + t * values
    areas = signed_areas(new_nodes, mesh.triangles)
    worst = int(np.argmin(areas))
    if areas[worst] <= 0.0:
        raise InvertedElement(
            f"triangle {worst} has signed area {areas[worst]:.3e} after step t={t:g}")
    return mesh.with_nodes(new_nodes)


def shape_perimeter(mesh: Mesh) -> float:
    """Total length of the SHAPE-marked polylines."""
    edges = mesh.edges_with(SHAPE)
    if edges.size == 0:
        return 0.0
    d = mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]]
    return float(np.linalg.norm(d, axis=1).sum())


def marked_length(mesh: Mesh) -> float:
    """Total length of all marked edges."""
    d = mesh.nodes[mesh.boundary_edges[:, 1]] - mesh.nodes[mesh.boundary_edges[:, 0]]
    return float(np.linalg.norm(d, axis=1).sum())


def _edge_incidence(triangles: np.ndarray) -> dict:
    """Map sorted node pair -> list of incident triangle indices."""
    inc: dict = {}
    t = np.asarray(triangles)
    for k in range(3):
        i = t[:, k]
        j = t[:, (k + 1) % 3]
        lo = np.minimum(i, j)
        hi = np.maximum(i, j)
        for idx in range(t.shape[0]):
            inc.setdefault((int(lo[idx]), int(hi[idx])), []).append(idx)
    return inc


def validate(mesh: Mesh) -> None:
    """Check the structural invariants; raise MeshValidationError on failure.

    Checks positive areas, two-triangle interior edges, consistency of the
    marked edge lists with the triangulation, closed shape loops, region
    consistency across the interface, and the node_is_shape flags.
    """
    if mesh.n_cells == 0:
        raise MeshValidationError("empty mesh")
    if mesh.triangles.min() < 0 or mesh.triangles.max() >= mesh.n_nodes:
        raise MeshValidationError("triangle index out of range")
    if mesh.boundary_edges.size and (mesh.boundary_edges.min() < 0
                                     or mesh.boundary_edges.max() >= mesh.n_nodes):
        raise MeshValidationError("boundary edge index out of range")
    areas = mesh.signed_areas
    if areas.min() <= 0.0:
        raise MeshValidationError(
            f"triangle {int(np.argmin(areas))} is not counterclockwise "
            f"(signed area {areas.min():.3e})")

    inc = _edge_incidence(mesh.triangles)
    over = [e for e, tris in inc.items() if len(tris) > 2]
    if over:
        raise MeshValidationError(f"edge {over[0]} shared by more than two triangles")

    marked = {}
    for (i, j), m in zip(mesh.boundary_edges, mesh.boundary_markers):
        key = (int(min(i, j)), int(max(i, j)))
        if key in marked:
            raise MeshFileError(f"duplicated boundary edge {key}")
        marked[key] = int(m)

    hull = {e for e, tris in inc.items() if len(tris) == 1}
    missing = hull - set(marked)
    if missing:
        raise MeshValidationError(f"unmarked hull edge {sorted(missing)[0]}")
    for key, m in marked.items():
        if key not in inc:
            raise MeshValidationError(f"marked edge {key} is not a mesh edge")
        if len(inc[key]) == 2:
            # only SHAPE polylines may run through the interior, and they
            # must separate different regions
            if m != SHAPE:
                raise MeshValidationError(f"interior edge {key} carries marker {m}")
            r = mesh.cell_region[inc[key]]
            if r[0] == r[1]:
                raise MeshValidationError(f"interface edge {key} does not separate regions")

    shape_nodes = np.unique(mesh.edges_with(SHAPE))
    flags = np.zeros(mesh.n_nodes, dtype=bool)
    flags[shape_nodes] = True
    if not np.array_equal(flags, mesh.node_is_shape):
        raise MeshValidationError("node_is_shape inconsistent with SHAPE edges")

    # shape edges form closed loops: every shape node has exactly two
    # incident shape edges
    se = mesh.edges_with(SHAPE)
    if se.size:
        counts = np.bincount(se.ravel(), minlength=mesh.n_nodes)
        bad = np.nonzero((counts != 0) & (counts != 2))[0]
        if bad.size:
            raise MeshValidationError(f"shape polyline not closed at node {int(bad[0])}")
        if np.intersect1d(shape_nodes, mesh.fixed_boundary_nodes).size:
            raise MeshValidationError("shape loop touches the fixed boundary")


def write_mesh(mesh: Mesh, path, fields: dict | None = None) -> None:
    """Write a mesh (and optional nodal fields) to the plain-text format.

    Format: header ``mesh2d v1``; ``nodes N`` then N lines ``x y shape_flag``;
    ``triangles M`` then M lines ``i j k region``; ``boundary B`` then B lines
    ``i j marker``.  Floats use 17 significant digits so round-trips are exact.
    """
    lines = ["mesh2d v1", f"nodes {mesh.n_nodes}"]
    for (x, y), s in zip(mesh.nodes, mesh.node_is_shape):
        lines.append(f"{x:.17g} {y:.17g} {int(s)}")
    lines.append(f"triangles {mesh.n_cells}")
    for (i, j, k), r in zip(mesh.triangles, mesh.cell_region):
        lines.append(f"{i} {j} {k} {r}")
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    for (i, j), m in zip(mesh.boundary_edges, mesh.boundary_markers):
        lines.append(f"{i} {j} {MARKER_NAMES[int(m)]}")
    if fields:
        for name, values in fields.items():
            values = np.asarray(values, dtype=float)
            arity = 1 if values.ndim == 1 else values.shape[1]
            lines.append(f"field {name} {arity}")
            for row in np.atleast_2d(values.reshape(mesh.n_nodes, -1)):
                lines.append(" ".join(f"{v:.17g}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_tokens(path):
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line:
                yield ln, line.split()


def read_mesh(path) -> Mesh:
    """Read a mesh written by :func:`write_mesh`; field sections are skipped."""
    mesh, _ = _read_mesh_and_fields(path)
    return mesh


def read_fields(path) -> dict:
    """Read the nodal field sections of a mesh file."""
    _, fields = _read_mesh_and_fields(path)
    return fields


def _read_mesh_and_fields(path):
    tokens = _read_tokens(path)

    def next_tokens(expect=None):
        try:
            ln, tok = next(tokens)
        except StopIteration:
            raise MeshFileError(f"{path}: unexpected end of file") from None
        if expect is not None and tok[0] != expect:
            raise MeshFileError(f"{path}:{ln}: expected '{expect}', got '{tok[0]}'")
        return ln, tok

    _, header = next_tokens()
    if header != ["mesh2d", "v1"]:
        raise MeshFileError(f"{path}: bad header {' '.join(header)!r}")

    _, tok = next_tokens("nodes")
    n = int(tok[1])
    nodes = np.empty((n, 2))
    flags = np.empty(n, dtype=bool)
    for i in range(n):
        ln, tok = next_tokens()
        if len(tok) != 3:
            raise MeshFileError(f"{path}:{ln}: node line needs 'x y shape_flag'")
        nodes[i] = (float(tok[0]), float(tok[1]))
        flags[i] = bool(int(tok[2]))

    _, tok = next_tokens("triangles")
    m = int(tok[1])
    tris = np.empty((m, 3), dtype=np.int64)
    region = np.empty(m, dtype=np.int64)
    for i in range(m):
        ln, tok = next_tokens()
        if len(tok) != 4:
            raise MeshFileError(f"{path}:{ln}: triangle line needs 'i j k region'")
        tris[i] = (int(tok[0]), int(tok[1]), int(tok[2]))
        region[i] = int(tok[3])

    _, tok = next_tokens("boundary")
    b = int(tok[1])
    edges = np.empty((b, 2), dtype=np.int64)
    markers = np.empty(b, dtype=np.int64)
    for i in range(b):
        ln, tok = next_tokens()
        if len(tok) != 3 or tok[2] not in MARKER_IDS:
            raise MeshFileError(f"{path}:{ln}: boundary line needs 'i j marker'")
        edges[i] = (int(tok[0]), int(tok[1]))
        markers[i] = MARKER_IDS[tok[2]]

    fields = {}
    while True:
        try:
            ln, tok = next(tokens)
        except StopIteration:
            break
        if tok[0] != "field":
            raise MeshFileError(f"{path}:{ln}: unexpected line after boundary section")
        name, arity = tok[1], int(tok[2])
        vals = np.empty((n, arity))
        for i in range(n):
            ln, row = next_tokens()
            if len(row) != arity:
                raise MeshFileError(f"{path}:{ln}: field row has wrong arity")
            vals[i] = [float(v) for v in row]
        fields[name] = vals[:, 0] if arity == 1 else vals

    if m and (tris.min() < 0 or tris.max() >= n):
        raise MeshFileError(f"{path}: triangle index out of range")
    if b and (edges.min() < 0 or edges.max() >= n):
        raise MeshFileError(f"{path}: boundary edge index out of range")
    seen = set()
    for i, j in edges:
        key = (int(min(i, j)), int(max(i, j)))
        if key in seen:
            raise MeshFileError(f"{path}: duplicated boundary edge {key}")
        seen.add(key)

    return Mesh(nodes, tris, region, edges, markers, flags), fields
