"""Two-stage mask filtering: coarse screens then grouping / inclusion /
greedy cover selection of the single-room mask set."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import label

from .errors import DimensionMismatch, NoCandidates
from .segmentation import FOUR_CONN, MaskImage

log = logging.getLogger(__name__)

EIGHT_CONN = np.ones((3, 3), dtype=np.uint8)

DEDUP_IOU = 0.8
GROUP_IOU = 0.5
INCLUSION_THRESH = 0.9
COVERAGE_TARGET = 0.95
COVER_IOU_TOL = 0.01
MIN_POINTS_BASE = 50
MIN_POINTS_REF_PIXEL = 0.05
MAX_HOLES = 2
MIN_AREA_M2 = 1.0
MIN_AREA_SCENE_FRAC = 0.02


@dataclass
class RoomMaskStats:
    """Geometry and point-evidence statistics of one candidate mask."""

    mask: MaskImage
    pixel_size: float
    point_count: int = 0
    area_px: int = field(init=False)
    component_count: int = field(init=False)
    hole_count: int = field(init=False)

    def __post_init__(self):
        data = self.mask.data
        self.area_px = int(data.sum())
        _, ncomp = label(data, structure=FOUR_CONN)
        self.component_count = int(ncomp)
        bg_labels, nbg = label(~data, structure=EIGHT_CONN)
        border = np.unique(np.concatenate([
            bg_labels[0, :], bg_labels[-1, :], bg_labels[:, 0], bg_labels[:, -1]]))
        self.hole_count = int(nbg - np.count_nonzero(border))

    @property
    def area_m2(self) -> float:
        return self.area_px * self.pixel_size ** 2

    @property
    def id(self) -> str:
        return self.mask.id


def compute_stats(masks: list[MaskImage], pixel_size: float,
                  point_pixels: np.ndarray | None = None) -> list[RoomMaskStats]:
    """Build stats; point_pixels is the (N, 2) integer (m, n) projection of
    the filtered cloud, used for per-mask point counts."""
    stats = []
    for mask in masks:
        count = 0
        if point_pixels is not None and point_pixels.size:
            count = int(mask.data[point_pixels[:, 1], point_pixels[:, 0]].sum())
        stats.append(RoomMaskStats(mask=mask, pixel_size=pixel_size, point_count=count))
    return stats


def iou(a: MaskImage, b: MaskImage) -> float:
    """|a ∩ b| / |a ∪ b|; 0 for disjoint masks."""
    if a.data.shape != b.data.shape:
        raise DimensionMismatch("masks have different dimensions")
    inter = int(np.logical_and(a.data, b.data).sum())
    if inter == 0:
        return 0.0
    union = int(np.logical_or(a.data, b.data).sum())
    return inter / union


def _iou_matrix(stats: list[RoomMaskStats]) -> np.ndarray:
    n = len(stats)
    flat = np.stack([s.mask.data.ravel() for s in stats]).astype(np.int64)
    inter = flat @ flat.T
    areas = flat.sum(axis=1)
    union = areas[:, None] + areas[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(union > 0, inter / union, 0.0)
    np.fill_diagonal(m, 1.0)
    return m


def connectivity_screen(stats: RoomMaskStats, max_holes: int = MAX_HOLES) -> bool:
    """Pass iff the mask is a single 4-connected component with at most
    max_holes enclosed background holes (8-connectivity, border excluded)."""
    return stats.component_count == 1 and stats.hole_count <= max_holes


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[rj] = ri

    def clusters(self) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for i in range(len(self.parent)):
            groups.setdefault(self.find(i), []).append(i)
        return sorted(groups.values(), key=lambda g: g[0])


def dedup(stats: list[RoomMaskStats], iou_thresh: float = DEDUP_IOU) -> list[RoomMaskStats]:
    """Cluster masks by transitive IoU >= iou_thresh; keep one survivor
    per cluster maximizing (area_px, point_count, id)."""
    if not stats:
        return []
    m = _iou_matrix(stats)
    uf = _UnionFind(len(stats))
    for i in range(len(stats)):
        for j in range(i + 1, len(stats)):
            if m[i, j] >= iou_thresh:
                uf.union(i, j)
    survivors = []
    for cluster in uf.clusters():
        best = max(cluster, key=lambda k: (stats[k].area_px, stats[k].point_count,
                                           stats[k].id))
        survivors.append(best)
    return [stats[i] for i in sorted(survivors)]


def _q75_iqr(areas: np.ndarray) -> tuple[float, float]:
    # linear-interpolation ("type 7") quantiles so tests are exact
    q25, q75 = np.quantile(areas, [0.25, 0.75])
    return float(q75), float(q75 - q25)


def min_points_for_pixel(pixel_size: float, base: int = MIN_POINTS_BASE) -> float:
    """Point-count floor scaled by (s / 0.05)^-2 for non-reference pixel sizes."""
    return base * (pixel_size / MIN_POINTS_REF_PIXEL) ** -2


def area_point_screen(stats: list[RoomMaskStats], scene_area_m2: float,
                      min_points: float | None = None) -> list[RoomMaskStats]:
    """Keep masks with area >= max(2% scene, 1 m2), area <= Q75 + 2*IQR
    (quantiles over the lower-bound survivors), and enough point evidence."""
    if scene_area_m2 <= 0:
        raise ValueError("scene_area_m2 must be > 0")
    lower = max(MIN_AREA_SCENE_FRAC * scene_area_m2, MIN_AREA_M2)
    passing_lower = [s for s in stats if s.area_m2 >= lower]
    if not passing_lower:
        return []
    areas = np.array([s.area_m2 for s in passing_lower])
    q75, iqr = _q75_iqr(areas)
    upper = q75 + 2.0 * iqr
    if min_points is None:
        min_points = min_points_for_pixel(passing_lower[0].pixel_size)
    return [s for s in passing_lower
            if s.area_m2 <= upper and s.point_count >= min_points]


@dataclass
class MaskGroup:
    members: list[int]          # indices into the stats list
    representative: int


def group_masks(stats: list[RoomMaskStats], iou_thresh: float = GROUP_IOU) -> list[MaskGroup]:
    """Connected components of the IoU >= iou_thresh adjacency graph;
    representative = largest area, ties by point_count then id."""
    if not stats:
        return []
    m = _iou_matrix(stats)
    uf = _UnionFind(len(stats))
    for i in range(len(stats)):
        for j in range(i + 1, len(stats)):
            if m[i, j] >= iou_thresh:
                uf.union(i, j)
    groups = []
    for cluster in uf.clusters():
        rep = max(cluster, key=lambda k: (stats[k].area_px, stats[k].point_count,
                                          stats[k].id))
        groups.append(MaskGroup(members=sorted(cluster), representative=rep))
    return groups


def inclusion_prune(stats: list[RoomMaskStats],
                    incl_thresh: float = INCLUSION_THRESH,
                    area_upper: float | None = None) -> list[RoomMaskStats]:
    """Discard masks included in another (|Mi ∩ Mj| / |Mj| >= incl_thresh
    discards Mj); then drop composites above the area upper bound."""
    alive = list(stats)
    changed = True
    while changed:
        changed = False
        n = len(alive)
        drop = None
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                a, b = alive[i], alive[j]
                inter = int(np.logical_and(a.mask.data, b.mask.data).sum())
                if b.area_px and inter / b.area_px >= incl_thresh:
                    if a.area_px and inter / a.area_px >= incl_thresh:
                        # mutual inclusion: drop the smaller (ties by id)
                        drop = min(i, j, key=lambda k: (alive[k].area_px, alive[k].id))
                    else:
                        drop = j
                    break
            if drop is not None:
                break
        if drop is not None:
            del alive[drop]
            changed = True
    if area_upper is not None:
        alive = [s for s in alive if s.area_m2 <= area_upper]
    return alive


@dataclass
class CoverSelection:
    selected: list[RoomMaskStats]
    coverage: float
    below_target: bool


def greedy_cover(stats: list[RoomMaskStats], coverage: float = COVERAGE_TARGET,
                 iou_tol: float = COVER_IOU_TOL) -> CoverSelection:
    """Greedy selection by descending area under a pairwise-IoU gate.

    A_total is the pixel area of the union of all candidates; achieved
    coverage = sum of selected areas / A_total, flagged when below target.
    """
    if not stats:
        raise NoCandidates("greedy cover needs at least one candidate")
    union = np.zeros_like(stats[0].mask.data, dtype=bool)
    for s in stats:
        union |= s.mask.data
    a_total = int(union.sum())
    order = sorted(range(len(stats)),
                   key=lambda k: (-stats[k].area_px, -stats[k].point_count, stats[k].id))
    selected: list[int] = []
    for k in order:
        if all(iou(stats[k].mask, stats[j].mask) <= iou_tol for j in selected):
            selected.append(k)
    got = sum(stats[k].area_px for k in selected) / a_total
    below = got < coverage
    if below:
        log.info("greedy cover below target: %.3f < %.3f", got, coverage)
    return CoverSelection(selected=[stats[k] for k in sorted(selected)],
                          coverage=float(got), below_target=below)


@dataclass
class FilterReport:
    """Per-stage elimination bookkeeping for filter-report.json."""

    eliminated: dict[str, list[str]] = field(default_factory=dict)
    coverage: float = 0.0
    below_target: bool = False
    selected: list[str] = field(default_factory=list)

    def record(self, stage: str, before: list[RoomMaskStats],
               after: list[RoomMaskStats]) -> None:
        kept = {s.id for s in after}
        self.eliminated[stage] = [s.id for s in before if s.id not in kept]

    def to_dict(self) -> dict:
        return {"eliminated": self.eliminated, "coverage": self.coverage,
                "below_target": self.below_target, "selected": self.selected}


def filter_masks(stats: list[RoomMaskStats], scene_area_m2: float,
                 min_points: float | None = None,
                 dedup_iou: float = DEDUP_IOU, group_iou: float = GROUP_IOU,
                 incl_thresh: float = INCLUSION_THRESH,
                 coverage: float = COVERAGE_TARGET,
                 iou_tol: float = COVER_IOU_TOL,
                 max_holes: int = MAX_HOLES) -> tuple[list[RoomMaskStats], FilterReport]:
    """Full coarse + fine pipeline producing the selected room set S."""
    report = FilterReport()

    stage = [s for s in stats if connectivity_screen(s, max_holes)]
    report.record("connectivity", stats, stage)

    before = stage
    stage = dedup(stage, dedup_iou)
    report.record("dedup", before, stage)

    before = stage
    stage = area_point_screen(stage, scene_area_m2, min_points)
    report.record("area_point", before, stage)

    # area bound reused for composite pruning below
    upper = None
    if stage:
        q75, iqr = _q75_iqr(np.array([s.area_m2 for s in stage]))
        upper = q75 + 2.0 * iqr

    before = stage
    groups = group_masks(stage, group_iou)
    stage = [stage[g.representative] for g in groups]
    report.record("grouping", before, stage)

    before = stage
    stage = inclusion_prune(stage, incl_thresh, area_upper=upper)
    report.record("inclusion", before, stage)

    if not stage:
        raise NoCandidates("all masks eliminated before greedy cover")
    selection = greedy_cover(stage, coverage, iou_tol)
    report.record("greedy_cover", stage, selection.selected)
    report.coverage = selection.coverage
    report.below_target = selection.below_target
    report.selected = [s.id for s in selection.selected]
    return selection.selected, report
