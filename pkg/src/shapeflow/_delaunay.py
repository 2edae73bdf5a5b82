"""Constrained Delaunay triangulation with interior Steiner refinement.

The strategy is batch-oriented rather than incremental: seed the interior
with a hexagonal lattice sized to the target spacing, Delaunay-triangulate
the full point cloud (scipy/Qhull), recover any missing constraint segments
by cavity retriangulation, trim cells outside the domain, then alternate
Laplacian smoothing and circumcenter insertion until every triangle meets
the quality target.  Constraint polyline nodes are never moved, split, or
dropped, which is what the mesh-deformation retraction contract requires.
"""

from __future__ import annotations

import numpy as np

from scipy.spatial import Delaunay, cKDTree

from .mesh import signed_areas, triangle_qualities


class TriangulationError(RuntimeError):
    """Triangulation could not satisfy its contract."""


class BoundaryIntersectionError(TriangulationError):
    """Constraint polylines intersect each other (degenerate shape)."""


# ---------------------------------------------------------------------------
# geometric helpers


def _orient(pa, pb, pc):
    return (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])


def _in_circumcircle(pa, pb, pc, pd):
    # (pa, pb, pc) counterclockwise; positive determinant means pd inside
    adx, ady = pa[0] - pd[0], pa[1] - pd[1]
    bdx, bdy = pb[0] - pd[0], pb[1] - pd[1]
    cdx, cdy = pc[0] - pd[0], pc[1] - pd[1]
    return (
        (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        - (bdx * bdx + bdy * bdy) * (adx * cdy - cdx * ady)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
    ) > 0.0


def points_in_loop(points: np.ndarray, loop: np.ndarray) -> np.ndarray:
    """Crossing-number point-in-polygon test; loop given as (L, 2) vertices."""
    x = points[:, 0][:, None]
    y = points[:, 1][:, None]
    x0 = loop[:, 0][None, :]
    y0 = loop[:, 1][None, :]
    x1 = np.roll(loop[:, 0], -1)[None, :]
    y1 = np.roll(loop[:, 1], -1)[None, :]
    straddle = (y0 <= y) != (y1 <= y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    crossings = np.sum(straddle & (x < xint), axis=1)
    return (crossings % 2) == 1


def distance_to_segments(points: np.ndarray, seg_a: np.ndarray,
                         seg_b: np.ndarray) -> np.ndarray:
    """Distance from each point to each segment, as a (Q, S) array."""
    d = seg_b - seg_a
    len2 = np.einsum("ij,ij->i", d, d)
    len2 = np.where(len2 > 0.0, len2, 1.0)
    rel = points[:, None, :] - seg_a[None, :, :]
    t = np.clip(np.einsum("qsj,sj->qs", rel, d) / len2[None, :], 0.0, 1.0)
    proj = seg_a[None, :, :] + t[:, :, None] * d[None, :, :]
    return np.linalg.norm(points[:, None, :] - proj, axis=2)


def segments_properly_intersect(points: np.ndarray, segments: np.ndarray) -> bool:
    """True if any two constraint segments cross away from shared endpoints."""
    n = len(segments)
    if n < 2:
        return False
    a = points[segments[:, 0]]
    b = points[segments[:, 1]]
    scale = max(np.ptp(points[:, 0]), np.ptp(points[:, 1]), 1e-30)
    eps = 1e-12 * scale * scale

    def cross(o, p, q):
        return ((p[..., 0] - o[..., 0]) * (q[..., 1] - o[..., 1])
                - (p[..., 1] - o[..., 1]) * (q[..., 0] - o[..., 0]))

    ii, jj = np.triu_indices(n, k=1)
    share = ((segments[ii, 0][:, None] == segments[jj][:, :]).any(axis=1)
             | (segments[ii, 1][:, None] == segments[jj][:, :]).any(axis=1))
    ii, jj = ii[~share], jj[~share]
    if ii.size == 0:
        return False
    d1 = cross(a[ii], b[ii], a[jj])
    d2 = cross(a[ii], b[ii], b[jj])
    d3 = cross(a[jj], b[jj], a[ii])
    d4 = cross(a[jj], b[jj], b[ii])
    proper = (d1 * d2 < -eps) & (d3 * d4 < -eps)
    return bool(proper.any())


def hex_lattice(bounds, spacing: float) -> np.ndarray:
    """Hexagonal point lattice covering an axis-aligned bounding box."""
    (xmin, ymin), (xmax, ymax) = bounds
    dy = spacing * np.sqrt(3.0) / 2.0
    nrow = max(int(np.ceil((ymax - ymin) / dy)) + 1, 2)
    ncol = max(int(np.ceil((xmax - xmin) / spacing)) + 2, 2)
    rows = []
    for r in range(nrow):
        y = ymin + r * dy
        x = xmin + (0.5 * spacing if r % 2 else 0.0) + np.arange(ncol) * spacing
        rows.append(np.column_stack([x, np.full(ncol, y)]))
    pts = np.concatenate(rows)
    keep = (pts[:, 0] <= xmax + 0.5 * spacing) & (pts[:, 1] <= ymax + 0.5 * dy)
    return pts[keep]


def circumcenters(points: np.ndarray, tris: np.ndarray):
    """Circumcenters and circumradii for every triangle."""
    p = points[tris]
    ax, ay = p[:, 0, 0], p[:, 0, 1]
    bx, by = p[:, 1, 0], p[:, 1, 1]
    cx, cy = p[:, 2, 0], p[:, 2, 1]
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    d = np.where(np.abs(d) > 0.0, d, 1e-300)
    a2 = ax * ax + ay * ay
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    centers = np.column_stack([ux, uy])
    radii = np.linalg.norm(centers - p[:, 0, :], axis=1)
    return centers, radii


# ---------------------------------------------------------------------------
# Delaunay + constraint recovery


def delaunay_ccw(points: np.ndarray) -> np.ndarray:
    tris = Delaunay(points).simplices.astype(np.int64)
    areas = signed_areas(points, tris)
    flip = areas < 0.0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _edge_key(i, j):
    return (i, j) if i < j else (j, i)


def enforce_segments(points: np.ndarray, tris: np.ndarray,
                     segments: np.ndarray) -> np.ndarray:
    """Retriangulate cavities so every constraint segment is a mesh edge."""
    edge_tris: dict = {}
    vert_tris: dict = {}
    tri_list = [tuple(int(v) for v in t) for t in tris]
    alive = [True] * len(tri_list)

    def link(tid):
        a, b, c = tri_list[tid]
        for u, v in ((a, b), (b, c), (c, a)):
            edge_tris.setdefault(_edge_key(u, v), set()).add(tid)
        for u in (a, b, c):
            vert_tris.setdefault(u, set()).add(tid)

    def unlink(tid):
        a, b, c = tri_list[tid]
        for u, v in ((a, b), (b, c), (c, a)):
            edge_tris[_edge_key(u, v)].discard(tid)
        for u in (a, b, c):
            vert_tris[u].discard(tid)
        alive[tid] = False

    def add_tri(t):
        tri_list.append(t)
        alive.append(True)
        link(len(tri_list) - 1)

    missing = [tuple(int(v) for v in s) for s in segments]
    missing = [s for s in missing if s[0] != s[1]]
    pending = []
    for tid in range(len(tri_list)):
        link(tid)
    for a, b in missing:
        if _edge_key(a, b) not in edge_tris or not edge_tris[_edge_key(a, b)]:
            pending.append((a, b))
    if not pending:
        return tris

    scale = max(np.ptp(points[:, 0]), np.ptp(points[:, 1]), 1e-30)
    eps = 1e-12 * scale * scale

    def orient(i, j, k):
        return _orient(points[i], points[j], points[k])

    for a, b in pending:
        if edge_tris.get(_edge_key(a, b)):
            continue  # recovered as a side effect of an earlier cavity
        # walk the pipe of triangles crossed by segment a->b
        start = None
        for tid in vert_tris[a]:
            u, v = [w for w in tri_list[tid] if w != a]
            ou = orient(a, b, u)
            ov = orient(a, b, v)
            if ou > eps and ov < -eps:
                left, right = u, v
            elif ou < -eps and ov > eps:
                left, right = v, u
            else:
                continue
            oa = orient(left, right, a)
            ob = orient(left, right, b)
            if (oa > eps and ob < -eps) or (oa < -eps and ob > eps):
                start = tid
                break
        if start is None:
            raise TriangulationError(
                f"cannot start constraint recovery for segment ({a},{b})")
        crossed = [start]
        left_chain = [left]
        right_chain = [right]
        entry = _edge_key(left, right)
        while True:
            nxt = [t for t in edge_tris[entry] if alive[t] and t not in crossed]
            if not nxt:
                raise TriangulationError(
                    f"constraint walk left the triangulation at segment ({a},{b})")
            cur = nxt[0]
            crossed.append(cur)
            w = [x for x in tri_list[cur] if x not in entry][0]
            if w == b:
                break
            ow = orient(a, b, w)
            if abs(ow) <= eps:
                raise TriangulationError(
                    f"vertex {w} lies on constraint segment ({a},{b})")
            if ow > 0.0:
                left_chain.append(w)
                entry = _edge_key(w, right_chain[-1])
            else:
                right_chain.append(w)
                entry = _edge_key(left_chain[-1], w)

        for tid in crossed:
            unlink(tid)

        def fill(chain, u, v):
            # triangulate the pseudo-polygon between chain and segment u->v;
            # chain vertices lie strictly left of u->v in boundary order
            if not chain:
                return
            ci = 0
            for i in range(1, len(chain)):
                if _in_circumcircle(points[u], points[v], points[chain[ci]],
                                    points[chain[i]]):
                    ci = i
            c = chain[ci]
            add_tri((u, v, c))
            fill(chain[:ci], u, c)
            fill(chain[ci + 1:], c, v)

        fill(left_chain, a, b)
        fill(list(reversed(right_chain)), b, a)

    out = np.array([tri_list[i] for i in range(len(tri_list)) if alive[i]],
                   dtype=np.int64)
    areas = signed_areas(points, out)
    bad = areas <= 0.0
    if bad.any():
        out[bad] = out[bad][:, [0, 2, 1]]
    return out


# ---------------------------------------------------------------------------
# domain description and the main driver


class Domain:
    """Planar straight-line graph plus containment rules for trimming.

    ``outer_loops`` bound the meshed region, ``hole_loops`` are excluded,
    ``region_loops`` label enclosed cells with region 1 (both sides meshed).
    Loops are index arrays into the fixed constraint points.
    """

    def __init__(self, points, segments, outer_loops, hole_loops=(),
                 region_loops=()):
        self.points = np.asarray(points, dtype=float)
        self.segments = np.asarray(segments, dtype=np.int64).reshape(-1, 2)
        self.outer_loops = [np.asarray(l, dtype=np.int64) for l in outer_loops]
        self.hole_loops = [np.asarray(l, dtype=np.int64) for l in hole_loops]
        self.region_loops = [np.asarray(l, dtype=np.int64) for l in region_loops]

    def contains(self, pts: np.ndarray) -> np.ndarray:
        inside = np.zeros(len(pts), dtype=bool)
        for loop in self.outer_loops:
            inside |= points_in_loop(pts, self.points[loop])
        for loop in self.hole_loops:
            inside &= ~points_in_loop(pts, self.points[loop])
        return inside

    def region_of(self, pts: np.ndarray) -> np.ndarray:
        region = np.zeros(len(pts), dtype=np.int64)
        for loop in self.region_loops:
            region[points_in_loop(pts, self.points[loop])] = 1
        return region


def _trim(points, tris, domain):
    cent = points[tris].mean(axis=1)
    keep = domain.contains(cent)
    # collinear boundary subdivisions let Qhull emit zero-area slivers lying
    # on the outline; they cover no area and are discarded
    scale2 = float(np.prod(points.max(axis=0) - points.min(axis=0))) or 1.0
    keep &= np.abs(signed_areas(points, tris)) > 1e-12 * scale2
    tris = tris[keep]
    return tris, domain.region_of(points[tris].mean(axis=1))


def _rebuild(points, domain):
    tris = delaunay_ccw(points)
    tris = enforce_segments(points, tris, domain.segments)
    tris, region = _trim(points, tris, domain)
    return tris, region


def _candidate_filter(cands, existing, domain, seg_a, seg_b, seg_clear, min_sep):
    if len(cands) == 0:
        return cands
    cands = cands[domain.contains(cands)]
    if len(cands) == 0:
        return cands
    dist = distance_to_segments(cands, seg_a, seg_b)
    cands = cands[(dist >= seg_clear[None, :]).all(axis=1)]
    if len(cands) == 0:
        return cands
    tree = cKDTree(existing)
    cands = cands[tree.query(cands, k=1)[0] >= min_sep]
    if len(cands) == 0:
        return cands
    # greedy mutual separation, deterministic order
    keep = []
    tree = cKDTree(cands)
    taken = np.zeros(len(cands), dtype=bool)
    for i in range(len(cands)):
        if taken[i]:
            continue
        keep.append(i)
        for j in tree.query_ball_point(cands[i], min_sep):
            if j != i:
                taken[j] = True
    return cands[keep]


def triangulate_domain(domain: Domain, spacing: float, *,
                       interior_factor: float = 1.6,
                       quality_floor: float = 0.3,
                       quality_target: float = 0.45,
                       max_rounds: int = 20):
    """Mesh a domain to the target spacing with quality >= quality_floor.

    Returns (points, triangles, cell_region); the fixed constraint points
    appear first in the point array, in their original order.
    """
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    if segments_properly_intersect(domain.points, domain.segments):
        raise BoundaryIntersectionError("constraint polylines intersect")

    fixed = domain.points
    n_fixed = len(fixed)
    seg_a = fixed[domain.segments[:, 0]]
    seg_b = fixed[domain.segments[:, 1]]
    seg_len = np.linalg.norm(seg_b - seg_a, axis=1)
    h_int = interior_factor * spacing
    seg_clear = 0.62 * np.maximum(spacing, 0.75 * seg_len)

    lo = fixed.min(axis=0)
    hi = fixed.max(axis=0)
    lattice = hex_lattice((lo, hi), h_int)
    lattice = lattice[domain.contains(lattice)]
    if len(lattice):
        dist = distance_to_segments(lattice, seg_a, seg_b)
        lattice = lattice[(dist >= seg_clear[None, :]).all(axis=1)]
    points = np.vstack([fixed, lattice]) if len(lattice) else fixed.copy()

    def smooth(points, tris, passes=1):
        for _ in range(passes):
            i = np.concatenate([tris[:, 0], tris[:, 1], tris[:, 2],
                                tris[:, 1], tris[:, 2], tris[:, 0]])
            j = np.concatenate([tris[:, 1], tris[:, 2], tris[:, 0],
                                tris[:, 0], tris[:, 1], tris[:, 2]])
            acc = np.zeros_like(points)
            np.add.at(acc, i, points[j])
            deg = np.zeros(len(points))
            np.add.at(deg, i, 1.0)
            movable = np.zeros(len(points), dtype=bool)
            movable[n_fixed:] = deg[n_fixed:] > 0
            prop = points.copy()
            prop[movable] = acc[movable] / deg[movable, None]
            cand = prop[movable]
            ok = domain.contains(cand)
            dist = distance_to_segments(cand, seg_a, seg_b)
            ok &= (dist >= 0.8 * seg_clear[None, :]).all(axis=1)
            idx = np.nonzero(movable)[0]
            prop[idx[~ok]] = points[idx[~ok]]
            points = prop
            tris, _ = _rebuild(points, domain)
        return points, tris

    tris, region = _rebuild(points, domain)
    points, tris = smooth(points, tris, passes=2)

    size_cap = 0.95 * h_int
    for _ in range(max_rounds):
        tris, region = _rebuild(points, domain)
        q = triangle_qualities(points, tris)
        centers, radii = circumcenters(points, tris)
        bad = (q < quality_target) | (radii > size_cap)
        if not bad.any():
            break
        cands = _candidate_filter(centers[bad], points, domain, seg_a, seg_b,
                                  0.9 * seg_clear, 0.52 * h_int)
        if len(cands) == 0:
            # fall back to centroids of the worst cells before giving up
            cents = points[tris[bad]].mean(axis=1)
            cands = _candidate_filter(cents, points, domain, seg_a, seg_b,
                                      0.55 * seg_clear, 0.4 * h_int)
            if len(cands) == 0:
                break
        points = np.vstack([points, cands])
        tris, region = _rebuild(points, domain)
        points, tris = smooth(points, tris, passes=1)

    points, tris = smooth(points, tris, passes=2)
    tris, region = _rebuild(points, domain)
    q = triangle_qualities(points, tris)
    if q.min() < quality_floor:
        raise TriangulationError(
            f"refinement stalled at quality {q.min():.3g} < {quality_floor}")
    return points, tris, region
