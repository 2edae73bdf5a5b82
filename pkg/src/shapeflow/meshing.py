"""Mesh generation and re-triangulation for the two model geometries.

Generators discretize constraint polylines at the target spacing and hand
off to the constrained-Delaunay engine; interior point density is tied to
the boundary spacing through a fixed grading factor.  Remeshing rebuilds
the interior while preserving the marked polylines: node positions are
kept verbatim whenever the quality floor is attainable that way, and
over-stretched segments are only ever subdivided collinearly.
"""

from __future__ import annotations

import numpy as np

from . import _delaunay as cdt
from .mesh import (DIRICHLET, NEUMANN_LOAD, OUTER, SHAPE, Mesh,
                   MeshValidationError, validate)

# interior lattice spacing relative to boundary spacing; calibrated so the
# reference resolutions reproduce the expected node counts
INTERIOR_GRADING = 1.45

BRIDGE_OUTLINE = ((0.0, 0.0), (0.0, 1.0), (2.5, 4.0), (5.0, 5.0), (7.5, 4.0),
                  (10.0, 1.0), (10.0, 0.0), (9.0, 0.0), (5.5, 0.0),
                  (4.5, 0.0), (1.0, 0.0))
BRIDGE_HOLES = (((2.5, 1.0), 0.5), ((3.5, 3.0), 0.5),
                ((6.5, 3.0), 0.5), ((7.5, 1.0), 0.5))
BRIDGE_DIRICHLET = (((0.0, 0.0), (1.0, 0.0)), ((9.0, 0.0), (10.0, 0.0)))
BRIDGE_NEUMANN = (((4.5, 0.0), (5.5, 0.0)),)


def circle_loop(center, radius: float, spacing: float) -> np.ndarray:
    """Counterclockwise polygonal approximation of a circle."""
    n = max(12, int(round(2.0 * np.pi * radius / spacing)))
    theta = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(theta),
                            center[1] + radius * np.sin(theta)])


def _subdivide_loop(vertices: np.ndarray, spacing: float,
                    edge_markers=None):
    """Insert points along each polygon edge at roughly the given spacing."""
    vertices = np.asarray(vertices, dtype=float)
    pts = []
    markers = []
    n = len(vertices)
    for k in range(n):
        p = vertices[k]
        q = vertices[(k + 1) % n]
        m = OUTER if edge_markers is None else edge_markers[k]
        nseg = max(1, int(round(np.linalg.norm(q - p) / spacing)))
        for i in range(nseg):
            pts.append(p + (q - p) * (i / nseg))
            markers.append(m)
    return np.asarray(pts), np.asarray(markers, dtype=np.int64)


def _loop_segments(start: int, count: int) -> np.ndarray:
    idx = start + np.arange(count)
    return np.column_stack([idx, np.roll(idx, -1)])


def _build_mesh(points, tris, region, segments, seg_markers) -> Mesh:
    flags = np.zeros(len(points), dtype=bool)
    flags[np.unique(segments[seg_markers == SHAPE])] = True
    mesh = Mesh(points, tris, region, segments, seg_markers, flags)
    validate(mesh)
    return mesh


def interface_mesh_from_loop(bounds, loop: np.ndarray, target_h: float) -> Mesh:
    """Triangulate a rectangle containing a closed SHAPE loop (interface).

    The loop becomes an internal constrained polyline marked SHAPE, and
    cells are labelled region 1 inside it, region 0 outside.
    """
    if target_h <= 0.0:
        raise ValueError("target_h must be positive")
    (xmin, ymin), (xmax, ymax) = np.asarray(bounds, dtype=float)
    loop = np.asarray(loop, dtype=float)
    if (loop[:, 0].min() - xmin < target_h or xmax - loop[:, 0].max() < target_h
            or loop[:, 1].min() - ymin < target_h or ymax - loop[:, 1].max() < target_h):
        raise ValueError("shape loop must lie strictly inside the rectangle "
                         "with clearance >= target_h")
    rect = np.array([(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)])
    rect_pts, rect_markers = _subdivide_loop(rect, target_h)
    pts = np.vstack([rect_pts, loop])
    segments = np.vstack([_loop_segments(0, len(rect_pts)),
                          _loop_segments(len(rect_pts), len(loop))])
    markers = np.concatenate([rect_markers, np.full(len(loop), SHAPE)])
    outer = np.arange(len(rect_pts))
    shape = len(rect_pts) + np.arange(len(loop))
    domain = cdt.Domain(pts, segments, outer_loops=[outer],
                        region_loops=[shape])
    points, tris, region = cdt.triangulate_domain(
        domain, target_h, interior_factor=INTERIOR_GRADING)
    return _build_mesh(points, tris, region, segments, markers)


def generate_interface_mesh(bounds, circle_center, circle_radius: float,
                            target_h: float) -> Mesh:
    """Mesh a rectangle with an interior circular interface marked SHAPE."""
    if target_h <= 0.0:
        raise ValueError("target_h must be positive")
    if circle_radius <= 0.0:
        raise ValueError("circle_radius must be positive")
    (xmin, ymin), (xmax, ymax) = np.asarray(bounds, dtype=float)
    cx, cy = circle_center
    clearance = min(cx - circle_radius - xmin, xmax - cx - circle_radius,
                    cy - circle_radius - ymin, ymax - cy - circle_radius)
    if clearance < target_h:
        raise ValueError("circle must lie strictly inside the rectangle "
                         "with clearance >= target_h")
    return interface_mesh_from_loop(
        bounds, circle_loop(circle_center, circle_radius, target_h), target_h)


def generate_bridge_mesh(outline, holes, target_h: float, *,
                         dirichlet_segments=BRIDGE_DIRICHLET,
                         neumann_segments=BRIDGE_NEUMANN) -> Mesh:
    """Mesh a polygon with circular holes; hole boundaries are the shape.

    Outline edges matching ``dirichlet_segments`` / ``neumann_segments``
    (by endpoint coordinates) carry the DIRICHLET / NEUMANN_LOAD markers,
    every other outline edge is OUTER.
    """
    if target_h <= 0.0:
        raise ValueError("target_h must be positive")
    outline = np.asarray(outline, dtype=float)
    holes = [((float(c[0]), float(c[1])), float(r)) for c, r in holes]
    for i in range(len(holes)):
        (ci, ri) = holes[i]
        for j in range(i + 1, len(holes)):
            (cj, rj) = holes[j]
            if np.hypot(ci[0] - cj[0], ci[1] - cj[1]) <= ri + rj:
                raise ValueError(f"holes {i} and {j} intersect")

    def matches(p, q, pairs):
        for a, b in pairs:
            a = np.asarray(a, dtype=float)
            b = np.asarray(b, dtype=float)
            if ((np.allclose(p, a) and np.allclose(q, b))
                    or (np.allclose(p, b) and np.allclose(q, a))):
                return True
        return False

    n = len(outline)
    edge_markers = []
    for k in range(n):
        p, q = outline[k], outline[(k + 1) % n]
        if matches(p, q, dirichlet_segments):
            edge_markers.append(DIRICHLET)
        elif matches(p, q, neumann_segments):
            edge_markers.append(NEUMANN_LOAD)
        else:
            edge_markers.append(OUTER)

    out_pts, out_markers = _subdivide_loop(outline, target_h, edge_markers)
    pts = [out_pts]
    segments = [_loop_segments(0, len(out_pts))]
    markers = [out_markers]
    hole_loops = []
    offset = len(out_pts)
    for (c, r) in holes:
        if not cdt.points_in_loop(np.array([c]), outline)[0]:
            raise ValueError(f"hole at {c} lies outside the outline")
        dmin = cdt.distance_to_segments(
            np.array([c]), outline, np.roll(outline, -1, axis=0)).min()
        if dmin <= r:
            raise ValueError(f"hole at {c} touches the outline")
        loop = circle_loop(c, r, target_h)
        pts.append(loop)
        segments.append(_loop_segments(offset, len(loop)))
        markers.append(np.full(len(loop), SHAPE))
        hole_loops.append(offset + np.arange(len(loop)))
        offset += len(loop)

    pts = np.vstack(pts)
    segments = np.vstack(segments)
    markers = np.concatenate(markers)
    outer = np.arange(len(out_pts))
    domain = cdt.Domain(pts, segments, outer_loops=[outer],
                        hole_loops=hole_loops)
    points, tris, region = cdt.triangulate_domain(
        domain, target_h, interior_factor=INTERIOR_GRADING)
    return _build_mesh(points, tris, region, segments, markers)


def _marked_loops(mesh: Mesh):
    """Ordered node loops of the marked-edge graph, with loop kind.

    Returns a list of (loop_nodes, is_shape_loop, is_interior_loop); the
    last flag distinguishes internal interfaces from hole boundaries.
    """
    edges = mesh.boundary_edges
    markers = mesh.boundary_markers
    incidence: dict = {}
    for eid, (i, j) in enumerate(edges):
        incidence.setdefault(int(i), []).append(eid)
        incidence.setdefault(int(j), []).append(eid)
    for node, eids in incidence.items():
        if len(eids) != 2:
            raise MeshValidationError(
                f"marked edges do not form closed loops at node {node}")

    hull = {e for e, tids in
            (lambda inc: inc.items())(_edge_incidence_counts(mesh))
            if tids == 1}

    seen_edges = np.zeros(len(edges), dtype=bool)
    loops = []
    for start_eid in range(len(edges)):
        if seen_edges[start_eid]:
            continue
        loop = [int(edges[start_eid, 0])]
        node = int(edges[start_eid, 1])
        eid = start_eid
        seen_edges[eid] = True
        loop_markers = {int(markers[eid])}
        loop_hull = {(min(loop[0], node), max(loop[0], node)) in hull}
        while node != loop[0]:
            loop.append(node)
            nxt = [e for e in incidence[node] if not seen_edges[e]]
            if not nxt:
                raise MeshValidationError("open marked polyline")
            eid = nxt[0]
            seen_edges[eid] = True
            loop_markers.add(int(markers[eid]))
            a, b = int(edges[eid, 0]), int(edges[eid, 1])
            node = b if a == node else a
            loop_hull.add((min(a, b), max(a, b)) in hull)
        is_shape = loop_markers == {SHAPE}
        if not is_shape and SHAPE in loop_markers:
            raise MeshValidationError("loop mixes SHAPE and fixed markers")
        if len(loop_hull) != 1:
            raise MeshValidationError("loop mixes interior and hull edges")
        loops.append((np.array(loop, dtype=np.int64), is_shape,
                      not loop_hull.pop()))
    return loops


def _edge_incidence_counts(mesh: Mesh) -> dict:
    counts: dict = {}
    t = mesh.triangles
    for k in range(3):
        i = t[:, k]
        j = t[:, (k + 1) % 3]
        lo = np.minimum(i, j)
        hi = np.maximum(i, j)
        for a, b in zip(lo, hi):
            key = (int(a), int(b))
            counts[key] = counts.get(key, 0) + 1
    return counts


def remesh(mesh: Mesh, target_h: float) -> Mesh:
    """Re-triangulate the interior, preserving every marked polyline.

    Marked-edge node positions are copied verbatim and interior nodes are
    regenerated to the target spacing.  If no interior placement can reach
    the quality floor (shape segments stretched far beyond nearby gaps),
    over-long marked segments are subdivided by collinear points, which
    leaves the polylines, their length, and the enclosed area unchanged.
    Raises BoundaryIntersectionError if the polylines self-intersect, which
    signals irrecoverable shape degeneration.
    """
    if target_h <= 0.0:
        raise ValueError("target_h must be positive")
    loops = _marked_loops(mesh)

    old_ids = np.unique(mesh.boundary_edges)
    remap = -np.ones(mesh.n_nodes, dtype=np.int64)
    remap[old_ids] = np.arange(len(old_ids))
    pts = mesh.nodes[old_ids]
    segments = remap[mesh.boundary_edges]
    markers = mesh.boundary_markers.copy()

    outer_loops = []
    hole_loops = []
    region_loops = []
    for loop, is_shape, is_interior in loops:
        loop = remap[loop]
        if not is_shape:
            outer_loops.append(loop)
        elif is_interior:
            region_loops.append(loop)
        else:
            hole_loops.append(loop)
    if not outer_loops:
        raise MeshValidationError("mesh has no outer boundary loop")

    # Attempt ladder: first with the marked nodes kept verbatim at a few
    # spacings, then with over-stretched marked segments split by collinear
    # points.  Splitting changes only the combinatorics: the polylines, and
    # with them length and enclosed area, are preserved to rounding.  It is
    # needed once the flow stretches shape segments far beyond the width of
    # the material between them, where no interior point placement can
    # reach the quality floor.
    attempts = ((1.0, None), (0.75, None), (1.0, 2.2), (0.7, 2.2), (0.5, 2.2))
    error: cdt.TriangulationError | None = None
    for factor, split in attempts:
        if split is None:
            a_pts, a_segs, a_marks = pts, segments, markers
        else:
            a_pts, a_segs, a_marks = _split_long_segments(
                pts, segments, markers, split * target_h, target_h)
        domain = cdt.Domain(a_pts, a_segs, outer_loops=outer_loops,
                            hole_loops=hole_loops, region_loops=region_loops)
        try:
            points, tris, region = cdt.triangulate_domain(
                domain, factor * target_h, interior_factor=INTERIOR_GRADING)
            return _build_mesh(points, tris, region, a_segs, a_marks)
        except cdt.BoundaryIntersectionError:
            raise
        except cdt.TriangulationError as exc:
            error = exc
    raise error


def _split_long_segments(points, segments, markers, max_len, target_h):
    """Subdivide marked segments longer than max_len with collinear points."""
    new_pts = [points]
    offset = len(points)
    out_segs = []
    out_marks = []
    for (i, j), m in zip(segments, markers):
        p, q = points[i], points[j]
        length = float(np.hypot(*(q - p)))
        if length <= max_len:
            out_segs.append((i, j))
            out_marks.append(m)
            continue
        n = int(np.ceil(length / (1.4 * target_h)))
        inner = p + (q - p) * (np.arange(1, n) / n)[:, None]
        ids = [i] + list(range(offset, offset + n - 1)) + [j]
        new_pts.append(inner)
        offset += n - 1
        for a, b in zip(ids[:-1], ids[1:]):
            out_segs.append((a, b))
            out_marks.append(m)
    return (np.vstack(new_pts), np.asarray(out_segs, dtype=np.int64),
            np.asarray(out_marks, dtype=np.int64))
