"""Joint mask / point-cloud contour extraction and rectilinear regularization.

Pipeline per room: trace the mask border, simplify with RDP, snap edges to
the main direction or its perpendicular, then correct wall offsets against
point-cloud boundary evidence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import label
from scipy.spatial import cKDTree, ConvexHull, QhullError

from .density import ProjectionFrame
from .errors import DegenerateAfterMerge, MultipleComponents
from .segmentation import FOUR_CONN, MaskImage

log = logging.getLogger(__name__)

DEFAULT_BOUNDARY_RADIUS = 0.2          # meters
DEFAULT_BOUNDARY_SECTOR = math.radians(30.0)
DEFAULT_FUSE_TAU = 0.05                # meters
ANGLE_TOL = 1e-6                       # radians, rectilinearity assertion
NONRECT_ANGLE = math.radians(20.0)     # regularization skip heuristic
NONRECT_LENGTH_FRAC = 0.30

# Moore neighborhood in clockwise scan order (m right, n down on the raster)
_MOORE = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


@dataclass
class BoundaryPointSet:
    """2D points flagged as region boundary by the angular-gap test."""

    points: np.ndarray     # (K, 2) world meters
    radius: float
    sector: float


@dataclass
class RoomContour:
    """Final per-room polygon with regularization metadata."""

    room_id: str
    vertices: np.ndarray   # (N, 2) closed (first vertex not repeated)
    theta_main: float      # radians in [0, pi/2)
    snapped_count: int = 0
    regularized: bool = True

    def edges(self) -> list[tuple[np.ndarray, np.ndarray]]:
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]


def extract_boundary_points(points2d: np.ndarray, r: float = DEFAULT_BOUNDARY_RADIUS,
                            sector: float = DEFAULT_BOUNDARY_SECTOR) -> BoundaryPointSet:
    """Flag points whose r-neighborhood leaves an empty angular gap >= sector.

    Gap analysis is circular (includes the wraparound gap); isolated points
    are boundary.
    """
    pts = np.asarray(points2d, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least 2 points")
    if r <= 0 or not 0 < sector < 2 * math.pi:
        raise ValueError("invalid radius or sector")
    tree = cKDTree(pts)
    neighbor_lists = tree.query_ball_point(pts, r)
    flags = np.zeros(len(pts), dtype=bool)
    for i, nbrs in enumerate(neighbor_lists):
        nbrs = [j for j in nbrs if j != i]
        if not nbrs:
            flags[i] = True
            continue
        vecs = pts[nbrs] - pts[i]
        az = np.sort(np.arctan2(vecs[:, 1], vecs[:, 0]))
        gaps = np.diff(az)
        wrap = az[0] + 2 * math.pi - az[-1]
        max_gap = max(gaps.max(initial=0.0), wrap)
        flags[i] = max_gap >= sector
    return BoundaryPointSet(points=pts[flags], radius=r, sector=sector)


def trace_mask_contour(mask: MaskImage) -> np.ndarray:
    """Outer border of a single-component mask via Moore-neighbor tracing.

    Returns (K, 2) pixel (m, n) vertices in clockwise scan order starting
    from the top-left foreground pixel. Holes are ignored.
    """
    data = mask.data
    _, ncomp = label(data, structure=FOUR_CONN)
    if ncomp != 1:
        raise MultipleComponents(f"mask {mask.id!r} has {ncomp} components")
    ns, ms = np.nonzero(data)
    start_idx = np.lexsort((ms, ns))[0]
    start = (int(ms[start_idx]), int(ns[start_idx]))

    h, w = data.shape

    def fg(m, n):
        return 0 <= m < w and 0 <= n < h and data[n, m]

    contour = [start]
    prev = (start[0] - 1, start[1])   # entered from the west
    cur = start
    first_prev = prev
    max_steps = 4 * (w * h + 1)
    for _ in range(max_steps):
        base = _MOORE.index((prev[0] - cur[0], prev[1] - cur[1]))
        nxt = None
        last_bg = prev
        for k in range(1, 9):
            d = _MOORE[(base + k) % 8]
            cand = (cur[0] + d[0], cur[1] + d[1])
            if fg(*cand):
                nxt = cand
                break
            last_bg = cand
        if nxt is None:
            break  # isolated pixel
        prev, cur = last_bg, nxt
        if cur == start and prev == first_prev:
            break
        contour.append(cur)
    return np.array(contour, dtype=np.int64)


def _point_segment_dist(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-24:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(pts - proj, axis=1)


def _rdp_open(points: np.ndarray, epsilon: float) -> np.ndarray:
    """Iterative RDP on an open chain; keeps both endpoints."""
    n = len(points)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        seg = points[i + 1:j]
        d = _point_segment_dist(seg, points[i], points[j])
        k = int(np.argmax(d))
        if d[k] > epsilon:
            keep[i + 1 + k] = True
            stack.append((i, i + 1 + k))
            stack.append((i + 1 + k, j))
    return points[keep]


def _farthest_pair(points: np.ndarray) -> tuple[int, int]:
    idx = np.arange(len(points))
    if len(points) > 8:
        try:
            hull = ConvexHull(points)
            idx = hull.vertices
        except QhullError:
            pass
    sub = points[idx]
    d2 = ((sub[:, None, :] - sub[None, :, :]) ** 2).sum(axis=2)
    i, j = np.unravel_index(int(np.argmax(d2)), d2.shape)
    a, b = int(idx[i]), int(idx[j])
    return (a, b) if a < b else (b, a)


def rdp_simplify(points: np.ndarray, epsilon: float, closed: bool = True) -> np.ndarray:
    """Farthest-point polyline simplification.

    Closed contours are split at the two mutually farthest vertices before
    recursing; the returned closed contour does not repeat its first vertex.
    """
    pts = np.asarray(points, dtype=np.float64)
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if len(pts) < 3:
        return pts.copy()
    if not closed:
        return _rdp_open(pts, epsilon)
    i, j = _farthest_pair(pts)
    chain1 = pts[i:j + 1]
    chain2 = np.vstack([pts[j:], pts[:i + 1]])
    out1 = _rdp_open(chain1, epsilon)
    out2 = _rdp_open(chain2, epsilon)
    return np.vstack([out1[:-1], out2[:-1]])


def dynamic_epsilon(pixel_size: float, point_spacing: float) -> float:
    """RDP threshold tied to raster resolution and sampling density."""
    return max(2.0 * pixel_size, 0.5 * point_spacing)


def _fold_axis(angle: float) -> float:
    """Fold a direction angle into [0, pi/2)."""
    return angle % (math.pi / 2)


def _edge_angles(vertices: np.ndarray) -> np.ndarray:
    nxt = np.roll(vertices, -1, axis=0)
    d = nxt - vertices
    return np.arctan2(d[:, 1], d[:, 0])


def _edge_lengths(vertices: np.ndarray) -> np.ndarray:
    nxt = np.roll(vertices, -1, axis=0)
    return np.linalg.norm(nxt - vertices, axis=1)


def main_direction(vertices: np.ndarray) -> float:
    """Dominant wall orientation in [0, pi/2).

    Among the top 20% of edges by length, pick the one closest to an axis;
    ties go to the longest edge.
    """
    v = np.asarray(vertices, dtype=np.float64)
    if len(v) < 2:
        raise ValueError("need at least one edge")
    angles = _edge_angles(v)
    lengths = _edge_lengths(v)
    k = max(1, math.ceil(0.2 * len(v)))
    top = np.argsort(-lengths)[:k]
    best = min(top, key=lambda e: (_axis_distance(angles[e]), -lengths[e]))
    return _fold_axis(angles[best])


def _axis_distance(angle: float) -> float:
    f = _fold_axis(angle)
    return min(f, math.pi / 2 - f)


def _angdiff_line(a: float, b: float) -> float:
    """Distance between line orientations (mod pi), in [0, pi/2]."""
    d = (a - b) % math.pi
    return min(d, math.pi - d)


def _intersect(t1: float, c1: float, t2: float, c2: float) -> np.ndarray:
    """Intersection of lines p.n_i = c_i with normals perpendicular to t_i."""
    n1 = np.array([-math.sin(t1), math.cos(t1)])
    n2 = np.array([-math.sin(t2), math.cos(t2)])
    A = np.vstack([n1, n2])
    return np.linalg.solve(A, np.array([c1, c2]))


def is_rectilinear_fit(vertices: np.ndarray, theta_main: float,
                       angle_tol: float = NONRECT_ANGLE,
                       length_frac: float = NONRECT_LENGTH_FRAC) -> bool:
    """False when too much edge length deviates from both snap axes."""
    angles = _edge_angles(vertices)
    lengths = _edge_lengths(vertices)
    dev = np.array([min(_angdiff_line(a, theta_main),
                        _angdiff_line(a, theta_main + math.pi / 2)) for a in angles])
    off = lengths[dev > angle_tol].sum()
    return off <= length_frac * lengths.sum()


def regularize(vertices: np.ndarray, theta_main: float,
               merge_tol: float) -> np.ndarray:
    """Snap each edge to theta_main or theta_main + 90 degrees.

    Edges rotate about their midpoints preserving length; nearly collinear
    consecutive parallel edges (offset < merge_tol) merge first; the chain
    re-closes at intersections of adjacent regularized lines. Consecutive
    same-direction edges that cannot be merged get a perpendicular
    connector inserted at their junction.
    """
    v = np.asarray(vertices, dtype=np.float64)
    if len(v) < 3:
        raise DegenerateAfterMerge("fewer than 3 vertices")
    angles = _edge_angles(v)
    lengths = _edge_lengths(v)
    mids = (v + np.roll(v, -1, axis=0)) / 2.0

    t_par = theta_main % math.pi
    t_perp = (theta_main + math.pi / 2) % math.pi
    edges = []  # (orientation t, offset c, length, midpoint)
    for a, ln, mid in zip(angles, lengths, mids):
        if ln < 1e-12:
            continue
        t = t_par if _angdiff_line(a, t_par) < math.pi / 4 else t_perp
        n = np.array([-math.sin(t), math.cos(t)])
        edges.append([t, float(mid @ n), float(ln), mid])

    # merge nearly collinear consecutive parallel edges (cyclic); a short
    # perpendicular jog sandwiched between two mergeable parallels is dropped
    # so the pair becomes consecutive
    changed = True
    while changed and len(edges) > 1:
        changed = False
        for i in range(len(edges)):
            j = (i + 1) % len(edges)
            if i == j:
                break
            a, b = edges[i], edges[j]
            if a[0] == b[0] and abs(a[1] - b[1]) < merge_tol:
                w = a[2] + b[2]
                c = (a[1] * a[2] + b[1] * b[2]) / w
                mid = (a[3] * a[2] + b[3] * b[2]) / w
                edges[i] = [a[0], c, w, mid]
                del edges[j]
                changed = True
                break
            k = (j + 1) % len(edges)
            if k == i:
                continue
            c_ = edges[k]
            if (a[0] == c_[0] and b[0] != a[0] and b[2] < merge_tol
                    and abs(a[1] - c_[1]) < merge_tol):
                del edges[j]
                changed = True
                break

    if len(edges) < 3:
        raise DegenerateAfterMerge("fewer than 3 edges remain after merging")

    # insert perpendicular connectors between leftover same-direction pairs
    out = []
    n_edges = len(edges)
    for i in range(n_edges):
        j = (i + 1) % n_edges
        out.append(edges[i])
        if edges[i][0] == edges[j][0]:
            t = t_perp if edges[i][0] == t_par else t_par
            n = np.array([-math.sin(t), math.cos(t)])
            junction = (edges[i][3] + edges[j][3]) / 2.0
            out.append([t, float(junction @ n), 0.0, junction])
    edges = out

    verts = []
    for i in range(len(edges)):
        prev = edges[i - 1]
        cur = edges[i]
        verts.append(_intersect(prev[0], prev[1], cur[0], cur[1]))
    result = np.array(verts)

    # drop accidental zero-length edges from connector insertion
    keep = np.linalg.norm(result - np.roll(result, 1, axis=0), axis=1) > 1e-9
    result = result[keep]
    if len(result) < 3:
        raise DegenerateAfterMerge("regularized polygon degenerated")
    return result


def assert_rectilinear(vertices: np.ndarray, theta_main: float,
                       tol: float = ANGLE_TOL) -> bool:
    angles = _edge_angles(vertices)
    for a in angles:
        if min(_angdiff_line(a, theta_main),
               _angdiff_line(a, theta_main + math.pi / 2)) > tol:
            return False
    return True


def fuse_correct(vertices: np.ndarray, theta_main: float,
                 boundary: BoundaryPointSet, tau: float = DEFAULT_FUSE_TAU,
                 mode: str = "edge", room_id: str = "room") -> RoomContour:
    """Correct wall offsets against boundary evidence.

    Edge mode (default): an edge whose endpoints both sit farther than tau
    from the nearest boundary point is translated to the median
    perpendicular offset of boundary points in its corridor, preserving
    rectilinearity; vertices already within tau never move. Vertex mode
    applies the literal nearest-point snap (breaks rectilinearity).
    """
    if boundary.points.shape[0] == 0:
        raise ValueError("boundary point set is empty")
    v = np.asarray(vertices, dtype=np.float64)
    tree = cKDTree(boundary.points)
    losses, _ = tree.query(v)

    if mode == "vertex":
        out = v.copy()
        snapped = 0
        for i, L in enumerate(losses):
            if L > tau:
                _, j = tree.query(v[i])
                out[i] = boundary.points[j]
                snapped += 1
        return RoomContour(room_id=room_id, vertices=out, theta_main=theta_main,
                           snapped_count=snapped, regularized=False)
    if mode != "edge":
        raise ValueError(f"mode must be edge or vertex, got {mode!r}")

    n = len(v)
    angles = _edge_angles(v)
    search = max(4.0 * tau, 0.3)
    lines = []  # (orientation, offset)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        t = float(angles[i]) % math.pi
        nvec = np.array([-math.sin(t), math.cos(t)])
        uvec = np.array([math.cos(t), math.sin(t)])
        c = float(((a + b) / 2.0) @ nvec)
        if losses[i] > tau and losses[(i + 1) % n] > tau:
            lo, hi = sorted([float(a @ uvec), float(b @ uvec)])
            bu = boundary.points @ uvec
            bn = boundary.points @ nvec
            near = (np.abs(bn - c) <= search) & (bu >= lo - tau) & (bu <= hi + tau)
            if near.sum() >= 3:
                c = float(np.median(bn[near]))
        lines.append((t, c))

    verts = []
    for i in range(n):
        t1, c1 = lines[i - 1]
        t2, c2 = lines[i]
        if _angdiff_line(t1, t2) < 1e-9:
            verts.append(v[i])  # parallel neighbors: keep original joint
        else:
            verts.append(_intersect(t1, c1, t2, c2))
    out = np.array(verts)
    snapped = int((np.linalg.norm(out - v, axis=1) > 1e-9).sum())
    return RoomContour(room_id=room_id, vertices=out, theta_main=theta_main,
                       snapped_count=snapped)


def pixels_to_world(contour_px: np.ndarray, frame: ProjectionFrame) -> np.ndarray:
    """Pixel-center conversion of an (N, 2) pixel polyline to world meters."""
    return frame.pixel_to_world(np.asarray(contour_px, dtype=np.float64))


def room_contour_from_mask(mask: MaskImage, frame: ProjectionFrame,
                           room_points_2d: np.ndarray | None,
                           point_spacing: float,
                           boundary_radius: float = DEFAULT_BOUNDARY_RADIUS,
                           boundary_sector: float = DEFAULT_BOUNDARY_SECTOR,
                           fuse_tau: float = DEFAULT_FUSE_TAU,
                           fuse_mode: str = "edge",
                           merge_factor: float = 2.0,
                           stages: dict | None = None) -> RoomContour:
    """Full per-room chain: trace, simplify, regularize, fuse-correct.

    When a dict is passed as stages, the raw / rdp / reg / final vertex
    arrays (world meters) are recorded under those keys for debug dumps.
    """
    def record(key, arr):
        if stages is not None:
            stages[key] = np.asarray(arr, dtype=np.float64).copy()

    px = trace_mask_contour(mask)
    if len(px) < 3:
        raise DegenerateAfterMerge(f"mask {mask.id!r} traces to < 3 border pixels")
    world = pixels_to_world(px, frame)
    record("raw", world)
    eps = dynamic_epsilon(frame.pixel_size, point_spacing)
    simplified = rdp_simplify(world, eps, closed=True)
    if len(simplified) < 3:
        simplified = world
    record("rdp", simplified)
    theta = main_direction(simplified)
    if not is_rectilinear_fit(simplified, theta):
        log.info("room %s: non-rectilinear contour, regularization skipped", mask.id)
        record("reg", simplified)
        record("final", simplified)
        return RoomContour(room_id=mask.id, vertices=simplified, theta_main=theta,
                           regularized=False)
    reg = regularize(simplified, theta, merge_tol=merge_factor * frame.pixel_size)
    record("reg", reg)
    if room_points_2d is None or len(room_points_2d) < 2:
        record("final", reg)
        return RoomContour(room_id=mask.id, vertices=reg, theta_main=theta)
    boundary = extract_boundary_points(room_points_2d, boundary_radius, boundary_sector)
    if boundary.points.shape[0] == 0:
        record("final", reg)
        return RoomContour(room_id=mask.id, vertices=reg, theta_main=theta)
    rc = fuse_correct(reg, theta, boundary, tau=fuse_tau, mode=fuse_mode,
                      room_id=mask.id)
    record("final", rc.vertices)
    return rc
