"""Inter-room connectivity: adjacent wall segments, door detection from
low-density runs in the shared-wall point evidence, floorplan assembly."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Polygon

from .contour import RoomContour, _angdiff_line
from .density import ProjectionFrame
from .errors import OverlappingRooms

log = logging.getLogger(__name__)

DEFAULT_GAP_TOL = 0.4        # wall thickness tolerance, meters
DEFAULT_MIN_DOOR = 0.6       # meters
DEFAULT_MAX_DOOR = 2.0       # meters
DEFAULT_PARALLEL_TOL = math.radians(2.0)
DOOR_DENSITY_FRAC = 0.2      # run qualifies below this fraction of median


@dataclass
class AdjacentPair:
    """Two near-parallel edges of different rooms facing each other."""

    room_a: str
    room_b: str
    direction: np.ndarray     # unit vector along the wall
    offset_a: float           # perpendicular offsets of the two edge lines
    offset_b: float
    overlap: tuple[float, float]  # tangential interval shared by both edges

    @property
    def midline_offset(self) -> float:
        return 0.5 * (self.offset_a + self.offset_b)

    def segment_point(self, u: float) -> np.ndarray:
        n = np.array([-self.direction[1], self.direction[0]])
        return self.direction * u + n * self.midline_offset


@dataclass
class DoorSegment:
    room_a: str
    room_b: str
    p0: np.ndarray
    p1: np.ndarray

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))


@dataclass
class FloorPlan:
    rooms: list[RoomContour]
    doors: list[DoorSegment]
    frame: ProjectionFrame | None = None


def _room_edges(room: RoomContour):
    v = room.vertices
    for i in range(len(v)):
        yield v[i], v[(i + 1) % len(v)]


def find_adjacent_segments(rooms: list[RoomContour],
                           gap_tol: float = DEFAULT_GAP_TOL,
                           min_door: float = DEFAULT_MIN_DOOR,
                           parallel_tol: float = DEFAULT_PARALLEL_TOL) -> list[AdjacentPair]:
    """Edge pairs from different rooms that are parallel within tolerance,
    separated by at most gap_tol, and overlap at least min_door."""
    pairs: list[AdjacentPair] = []
    for ia in range(len(rooms)):
        for ib in range(ia + 1, len(rooms)):
            ra, rb = rooms[ia], rooms[ib]
            for a0, a1 in _room_edges(ra):
                ta = math.atan2(a1[1] - a0[1], a1[0] - a0[0]) % math.pi
                for b0, b1 in _room_edges(rb):
                    tb = math.atan2(b1[1] - b0[1], b1[0] - b0[0]) % math.pi
                    if _angdiff_line(ta, tb) > parallel_tol:
                        continue
                    u = np.array([math.cos(ta), math.sin(ta)])
                    n = np.array([-u[1], u[0]])
                    ca = float(((a0 + a1) / 2) @ n)
                    cb = float(((b0 + b1) / 2) @ n)
                    sep = abs(ca - cb)
                    if sep > gap_tol or sep < 1e-9:
                        continue
                    lo_a, hi_a = sorted([float(a0 @ u), float(a1 @ u)])
                    lo_b, hi_b = sorted([float(b0 @ u), float(b1 @ u)])
                    lo, hi = max(lo_a, lo_b), min(hi_a, hi_b)
                    if hi - lo < min_door:
                        continue
                    pairs.append(AdjacentPair(room_a=ra.room_id, room_b=rb.room_id,
                                              direction=u, offset_a=ca, offset_b=cb,
                                              overlap=(lo, hi)))
    return pairs


def detect_door(pair: AdjacentPair, cloud_xy: np.ndarray, frame: ProjectionFrame,
                min_door: float = DEFAULT_MIN_DOOR,
                max_door: float = DEFAULT_MAX_DOOR,
                density_frac: float = DOOR_DENSITY_FRAC,
                slab_pad: float | None = None) -> DoorSegment | None:
    """Door = maximal low-density run of wall-slab bins within door bounds.

    Bins of width 2*s run along the wall direction over the overlap
    interval; a bin belongs to a run when its count is below density_frac
    of the slab's median bin count.
    """
    s = frame.pixel_size
    bin_w = 2.0 * s
    lo, hi = pair.overlap
    nbins = max(1, int(math.ceil((hi - lo) / bin_w)))
    u = pair.direction
    n = np.array([-u[1], u[0]])
    pad = bin_w if slab_pad is None else slab_pad

    pts = np.asarray(cloud_xy, dtype=np.float64)
    pu = pts @ u
    pn = pts @ n
    n_lo, n_hi = sorted([pair.offset_a, pair.offset_b])
    in_slab = ((pn >= n_lo - pad) & (pn <= n_hi + pad)
               & (pu >= lo) & (pu <= hi))
    counts = np.zeros(nbins, dtype=np.int64)
    if in_slab.any():
        idx = np.clip(((pu[in_slab] - lo) / bin_w).astype(np.int64), 0, nbins - 1)
        np.add.at(counts, idx, 1)
    median = float(np.median(counts))
    if median <= 0:
        log.info("suspicious adjacency %s-%s: empty wall slab",
                 pair.room_a, pair.room_b)
        return None

    low = counts < density_frac * median
    best = None  # (length, start, end) in bin indices
    i = 0
    while i < nbins:
        if low[i]:
            j = i
            while j + 1 < nbins and low[j + 1]:
                j += 1
            run_len = (j - i + 1) * bin_w
            if min_door <= run_len <= max_door:
                if best is None or run_len > best[0]:
                    best = (run_len, i, j)
            i = j + 1
        else:
            i += 1
    if best is None:
        return None
    _, i, j = best
    u0 = lo + i * bin_w
    u1 = lo + (j + 1) * bin_w
    return DoorSegment(room_a=pair.room_a, room_b=pair.room_b,
                       p0=pair.segment_point(u0), p1=pair.segment_point(u1))


def assemble_floorplan(rooms: list[RoomContour], doors: list[DoorSegment],
                       frame: ProjectionFrame | None = None,
                       overlap_tol: float | None = None) -> FloorPlan:
    """Deduplicate doors and verify rooms are pairwise interior-disjoint."""
    tol = overlap_tol
    if tol is None:
        tol = 2.0 * frame.pixel_size if frame is not None else 0.1

    polys = {}
    for r in rooms:
        poly = Polygon(r.vertices)
        if not poly.is_valid:
            poly = poly.buffer(0)
        polys[r.room_id] = poly
    ids = [r.room_id for r in rooms]
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            a = polys[ids[i]].buffer(-tol)
            b = polys[ids[j]].buffer(-tol)
            if a.intersection(b).area > 1e-9:
                raise OverlappingRooms(
                    f"rooms {ids[i]} and {ids[j]} overlap beyond tolerance")

    merged: list[DoorSegment] = []
    for d in doors:
        key = tuple(sorted([d.room_a, d.room_b]))
        hit = None
        for m in merged:
            if tuple(sorted([m.room_a, m.room_b])) != key:
                continue
            u = d.p1 - d.p0
            norm = np.linalg.norm(u)
            if norm < 1e-12:
                continue
            u = u / norm
            lo_d, hi_d = sorted([float(d.p0 @ u), float(d.p1 @ u)])
            lo_m, hi_m = sorted([float(m.p0 @ u), float(m.p1 @ u)])
            if max(lo_d, lo_m) <= min(hi_d, hi_m):
                hit = m
                break
        if hit is None:
            merged.append(DoorSegment(room_a=key[0], room_b=key[1],
                                      p0=d.p0.copy(), p1=d.p1.copy()))
        else:
            # merge overlapping extents along the door direction
            u = hit.p1 - hit.p0
            u = u / np.linalg.norm(u)
            cands = [hit.p0, hit.p1, d.p0, d.p1]
            proj = [float(c @ u) for c in cands]
            hit.p0 = cands[int(np.argmin(proj))]
            hit.p1 = cands[int(np.argmax(proj))]
    return FloorPlan(rooms=list(rooms), doors=merged, frame=frame)
