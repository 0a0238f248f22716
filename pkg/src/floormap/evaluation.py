"""Evaluation protocol: room matching at an overlap threshold and boundary
segment precision / recall against ground truth floorplans."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from matplotlib.path import Path as MplPath

from .density import ProjectionFrame
from .errors import EmptyGroundTruth, FrameMismatch

DEFAULT_ROOM_OVERLAP = 0.95
DEFAULT_ENDPOINT_TOL = 0.005  # meters (verbatim "0.5 cm"; see README knob)


@dataclass
class GroundTruth:
    """GT room polygons (world meters) plus boundary segments."""

    rooms: list[np.ndarray]                      # each (K, 2)
    boundaries: list[tuple[np.ndarray, np.ndarray]]

    @staticmethod
    def from_json(text: str) -> "GroundTruth":
        obj = json.loads(text)
        rooms = [np.array(poly, dtype=np.float64) for poly in obj["rooms"]]
        bounds = [(np.array(seg[0], dtype=np.float64), np.array(seg[1], dtype=np.float64))
                  for seg in obj["boundaries"]]
        return GroundTruth(rooms=rooms, boundaries=bounds)

    def to_json(self) -> str:
        obj = {"rooms": [poly.tolist() for poly in self.rooms],
               "boundaries": [[seg[0].tolist(), seg[1].tolist()]
                              for seg in self.boundaries]}
        return json.dumps(obj) + "\n"

    @staticmethod
    def load(path) -> "GroundTruth":
        return GroundTruth.from_json(Path(path).read_text())


def rasterize_polygon(poly: np.ndarray, frame: ProjectionFrame) -> np.ndarray:
    """Pixel-center polygon rasterization onto the frame grid."""
    mm, nn = np.meshgrid(np.arange(frame.width), np.arange(frame.height))
    centers = frame.pixel_to_world(np.column_stack([mm.ravel(), nn.ravel()]))
    inside = MplPath(poly).contains_points(centers)
    return inside.reshape(frame.height, frame.width)


@dataclass
class EvalReport:
    room_true: int = 0
    room_all: int = 0
    room_gt: int = 0
    boundary_true: int = 0
    boundary_all: int = 0
    boundary_gt: int = 0
    precision_boundary: float = 0.0
    recall_boundary: float = 0.0
    empty_prediction: bool = False
    room_assignment: list[tuple[int, int, float]] = field(default_factory=list)
    segment_matches: list[tuple[int, int, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "room_true": self.room_true, "room_all": self.room_all,
            "room_gt": self.room_gt,
            "boundary_true": self.boundary_true, "boundary_all": self.boundary_all,
            "boundary_gt": self.boundary_gt,
            "precision_boundary": self.precision_boundary,
            "recall_boundary": self.recall_boundary,
            "empty_prediction": self.empty_prediction,
            "room_assignment": [list(t) for t in self.room_assignment],
            "segment_matches": [list(t) for t in self.segment_matches],
        }


def match_rooms(pred_masks: list[np.ndarray], gt_masks: list[np.ndarray],
                overlap_thresh: float = DEFAULT_ROOM_OVERLAP):
    """Greedy one-to-one assignment by descending |pred ∩ gt| / |gt|.

    A pair matches iff the ratio strictly exceeds overlap_thresh.
    Returns (room_true, assignment list of (pred_idx, gt_idx, ratio)).
    """
    if pred_masks and gt_masks:
        shape = gt_masks[0].shape
        if any(m.shape != shape for m in pred_masks + gt_masks):
            raise FrameMismatch("pred and gt rasters must share the frame")
    ratios = np.zeros((len(pred_masks), len(gt_masks)))
    for i, p in enumerate(pred_masks):
        for j, g in enumerate(gt_masks):
            gsum = int(g.sum())
            if gsum:
                ratios[i, j] = int(np.logical_and(p, g).sum()) / gsum
    order = sorted(((i, j) for i in range(len(pred_masks))
                    for j in range(len(gt_masks))),
                   key=lambda ij: (-ratios[ij], ij))
    used_p, used_g = set(), set()
    assignment = []
    for i, j in order:
        if i in used_p or j in used_g:
            continue
        if ratios[i, j] > overlap_thresh:
            assignment.append((i, j, float(ratios[i, j])))
            used_p.add(i)
            used_g.add(j)
    return len(assignment), assignment


def _pair_cost(pred_seg, gt_seg) -> float:
    """Max endpoint distance under the better of the two endpoint pairings."""
    p0, p1 = pred_seg
    g0, g1 = gt_seg
    direct = max(np.linalg.norm(p0 - g0), np.linalg.norm(p1 - g1))
    crossed = max(np.linalg.norm(p0 - g1), np.linalg.norm(p1 - g0))
    return float(min(direct, crossed))


def match_boundaries(pred_segs, gt_segs, endpoint_tol: float = DEFAULT_ENDPOINT_TOL):
    """Greedy one-to-one segment matching by ascending endpoint cost.

    A segment matches when both endpoint distances (under the optimal
    endpoint pairing) are <= endpoint_tol. Returns an EvalReport fragment
    with boundary counts and Eq.-style precision / recall fractions.
    """
    if not gt_segs:
        raise EmptyGroundTruth("ground truth has no boundary segments")
    report = EvalReport(boundary_all=len(pred_segs), boundary_gt=len(gt_segs))
    if not pred_segs:
        report.empty_prediction = True
        return 0, report
    costs = [(_pair_cost(p, g), i, j)
             for i, p in enumerate(pred_segs) for j, g in enumerate(gt_segs)]
    costs.sort(key=lambda t: (t[0], t[1], t[2]))
    used_p, used_g = set(), set()
    for cost, i, j in costs:
        if cost > endpoint_tol:
            break
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        report.segment_matches.append((i, j, cost))
    report.boundary_true = len(report.segment_matches)
    report.precision_boundary = report.boundary_true / report.boundary_all
    report.recall_boundary = report.boundary_true / report.boundary_gt
    return report.boundary_true, report


def evaluate_floorplan(pred_room_polys: list[np.ndarray],
                       pred_segs, gt: GroundTruth, frame: ProjectionFrame,
                       overlap_thresh: float = DEFAULT_ROOM_OVERLAP,
                       endpoint_tol: float = DEFAULT_ENDPOINT_TOL) -> EvalReport:
    """Full protocol: rasterize polygons on the frame, match rooms, then
    match the boundary segment sets."""
    pred_masks = [rasterize_polygon(p, frame) for p in pred_room_polys]
    gt_masks = [rasterize_polygon(g, frame) for g in gt.rooms]
    room_true, assignment = match_rooms(pred_masks, gt_masks, overlap_thresh)
    _, report = match_boundaries(pred_segs, gt.boundaries, endpoint_tol)
    report.room_true = room_true
    report.room_all = len(pred_masks)
    report.room_gt = len(gt_masks)
    report.room_assignment = assignment
    return report
