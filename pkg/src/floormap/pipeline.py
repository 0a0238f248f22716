"""End-to-end pipeline orchestration with persisted stage intermediates,
floorplan JSON/SVG output, and optional evaluation."""

from __future__ import annotations

import json
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import ceiling, contour, density, mask_filter, prompts, segmentation, topology
from .config import PipelineConfig
from .contour import RoomContour
from .density import DensityGrid, ProjectionFrame
from .errors import FloormapError, StageError
from .evaluation import EvalReport, GroundTruth, evaluate_floorplan
from .ingest import PointCloud, save_xyz
from .topology import DoorSegment, FloorPlan

log = logging.getLogger(__name__)

SVG_SCALE = 1000.0  # world meters -> SVG millimeters


def floorplan_to_json(fp: FloorPlan) -> str:
    obj = {
        "frame": json.loads(fp.frame.to_json_bytes()) if fp.frame else None,
        "rooms": [{"id": r.room_id, "theta_main": r.theta_main,
                   "regularized": r.regularized,
                   "polygon": [[float(x), float(y)] for x, y in r.vertices]}
                  for r in fp.rooms],
        "doors": [{"rooms": [d.room_a, d.room_b],
                   "p0": [float(d.p0[0]), float(d.p0[1])],
                   "p1": [float(d.p1[0]), float(d.p1[1])]} for d in fp.doors],
    }
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def floorplan_from_json(text: str) -> FloorPlan:
    obj = json.loads(text)
    frame = None
    if obj.get("frame"):
        frame = ProjectionFrame.from_json_bytes(json.dumps(obj["frame"]).encode())
    rooms = [RoomContour(room_id=r["id"], vertices=np.array(r["polygon"]),
                         theta_main=float(r["theta_main"]),
                         regularized=bool(r.get("regularized", True)))
             for r in obj["rooms"]]
    doors = [DoorSegment(room_a=d["rooms"][0], room_b=d["rooms"][1],
                         p0=np.array(d["p0"]), p1=np.array(d["p1"]))
             for d in obj["doors"]]
    return FloorPlan(rooms=rooms, doors=doors, frame=frame)


def render_svg(fp: FloorPlan, grid_1m: bool = False) -> bytes:
    """Rooms as closed black-stroke paths, doors as red segments.

    Path coordinates are world millimeters; a top-level transform flips
    the y axis for display.
    """
    all_pts = [v for r in fp.rooms for v in r.vertices]
    if all_pts:
        arr = np.array(all_pts)
        x0, y0 = arr.min(axis=0) * SVG_SCALE - 500
        x1, y1 = arr.max(axis=0) * SVG_SCALE + 500
    else:
        x0 = y0 = 0.0
        x1 = y1 = 1000.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{x0:.0f} {-y1:.0f} {x1 - x0:.0f} {y1 - y0:.0f}">',
        '<g transform="scale(1,-1)">',
    ]
    if grid_1m:
        parts.append('<g class="grid" stroke="#ddd" stroke-width="10">')
        for gx in range(int(math.floor(x0 / 1000)), int(math.ceil(x1 / 1000)) + 1):
            parts.append(f'<line x1="{gx * 1000}" y1="{y0:.0f}" '
                         f'x2="{gx * 1000}" y2="{y1:.0f}"/>')
        for gy in range(int(math.floor(y0 / 1000)), int(math.ceil(y1 / 1000)) + 1):
            parts.append(f'<line x1="{x0:.0f}" y1="{gy * 1000}" '
                         f'x2="{x1:.0f}" y2="{gy * 1000}"/>')
        parts.append("</g>")
    for r in fp.rooms:
        coords = " L ".join(f"{x * SVG_SCALE:.3f},{y * SVG_SCALE:.3f}"
                            for x, y in r.vertices)
        parts.append(f'<path class="room" id="{r.room_id}" d="M {coords} Z" '
                     'fill="none" stroke="black" stroke-width="50"/>')
    for i, d in enumerate(fp.doors):
        parts.append(
            f'<line class="door" id="door_{i:03d}" '
            f'x1="{d.p0[0] * SVG_SCALE:.3f}" y1="{d.p0[1] * SVG_SCALE:.3f}" '
            f'x2="{d.p1[0] * SVG_SCALE:.3f}" y2="{d.p1[1] * SVG_SCALE:.3f}" '
            'stroke="red" stroke-width="60"/>')
    parts.append("</g></svg>")
    return "\n".join(parts).encode("utf-8")


def svg_room_vertices(svg: bytes) -> dict[str, np.ndarray]:
    """Parse room path vertices (world meters) back out of a rendered SVG."""
    root = ET.fromstring(svg.decode("utf-8"))
    ns = {"s": "http://www.w3.org/2000/svg"}
    out = {}
    for path in root.iter("{http://www.w3.org/2000/svg}path"):
        if path.get("class") != "room":
            continue
        d = path.get("d").strip().lstrip("M").rstrip("Z").strip()
        pts = [tuple(float(v) / SVG_SCALE for v in tok.split(","))
               for tok in d.split(" L ")]
        out[path.get("id")] = np.array(pts)
    return out


@dataclass
class PipelineResult:
    floorplan: FloorPlan
    filtered: PointCloud
    grid: DensityGrid
    prompt_set: prompts.PromptSet
    selected: list
    report: mask_filter.FilterReport
    eval_report: EvalReport | None = None


def _stage(name):
    """Tag stage errors for CLI diagnostics."""
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, FloormapError) \
                    and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False
    return _Ctx()


def run_pipeline(cfg: PipelineConfig, cloud: PointCloud, out_dir,
                 gt: GroundTruth | None = None) -> PipelineResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())

    with _stage("ceiling_filter"):
        filtered = ceiling.grid_ceiling_filter(cloud, cfg.gamma, cfg.delta_z,
                                               cfg.ceiling_mode)
        save_xyz(filtered, out / "filtered.xyz")

    with _stage("density"):
        spacing = density.estimate_point_spacing(filtered, cfg.spacing_sample)
        frame = density.compute_frame(filtered.bounds, spacing, cfg.kappa,
                                      cfg.r_min, cfg.r_max)
        grid = density.project_density(filtered, frame)
        grid = density.enhance(grid, cfg.blur_kernel, cfg.blur_sigma,
                               cfg.clahe_clip, cfg.clahe_tiles)
        density.export_density_png(grid, out / "density.png", out / "frame.json")

    with _stage("prompts"):
        prompt_set = prompts.extract_prompts(grid.enhanced, cfg.pool,
                                             cfg.min_dist_px, cfg.tau_factor,
                                             cfg.tau_mean_mode)
        (out / "prompts.json").write_text(prompt_set.to_json())

    with _stage("segmentation"):
        masks = segmentation.segment(
            grid, prompt_set, cfg.backend, wall_thresh=cfg.wall_thresh,
            external_dir=cfg.external_mask_dir or None, runner_cmd=cfg.runner_cmd)
        if cfg.backend != "external_dir":
            segmentation.write_mask_dir(masks, out / "masks", frame, cfg.backend)

    with _stage("mask_filter"):
        point_px = frame.world_to_pixel(filtered.points[:, :2])
        bounds = filtered.bounds
        scene_area = float((bounds[1, 0] - bounds[0, 0]) * (bounds[1, 1] - bounds[0, 1]))
        stats = mask_filter.compute_stats(masks, frame.pixel_size, point_px)
        min_points = cfg.min_points if cfg.min_points >= 0 else None
        selected, report = mask_filter.filter_masks(
            stats, scene_area, min_points, cfg.dedup_iou, cfg.group_iou,
            cfg.inclusion_thresh, cfg.coverage_target, cfg.cover_iou_tol,
            cfg.max_holes)
        (out / "filter-report.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")

    with _stage("contour"):
        rooms = []
        sector = math.radians(cfg.boundary_sector_deg)
        xy = filtered.points[:, :2]
        # Blurring bleeds wall intensity into adjacent free space, so flood-fill
        # masks stop short of the true wall face.  Dilate by the blur radius
        # when gathering each room's evidence points so wall-face returns are
        # available to boundary extraction and edge fusion.
        grow = cfg.blur_kernel // 2 + 1
        for s in selected:
            grown = ndimage.binary_dilation(s.mask.data, iterations=grow)
            inside = grown[point_px[:, 1], point_px[:, 0]]
            room_pts = xy[inside]
            stages: dict = {}
            rc = contour.room_contour_from_mask(
                s.mask, frame, room_pts, spacing, cfg.boundary_radius, sector,
                cfg.fuse_tau, cfg.fuse_mode, cfg.merge_factor, stages=stages)
            rc.room_id = f"room_{s.id}"
            rooms.append(rc)
            room_dir = out / "rooms" / rc.room_id
            room_dir.mkdir(parents=True, exist_ok=True)
            for key, arr in stages.items():
                (room_dir / f"contour_{key}.json").write_text(
                    json.dumps(arr.tolist()) + "\n")

    with _stage("topology"):
        pairs = topology.find_adjacent_segments(rooms, cfg.gap_tol, cfg.min_door)
        z0 = float(cloud.points[:, 2].min())
        band = ((cloud.points[:, 2] >= z0 + cfg.door_band_lo)
                & (cloud.points[:, 2] <= z0 + cfg.door_band_hi))
        door_xy = cloud.points[band][:, :2]
        doors = []
        for pair in pairs:
            d = topology.detect_door(pair, door_xy, frame, cfg.min_door, cfg.max_door)
            if d is not None:
                doors.append(d)
        fp = topology.assemble_floorplan(rooms, doors, frame)
        (out / "floorplan.json").write_text(floorplan_to_json(fp))
        (out / "floorplan.svg").write_bytes(render_svg(fp))

    eval_report = None
    if gt is not None:
        with _stage("eval"):
            pred_polys = [r.vertices for r in fp.rooms]
            pred_segs = [(np.asarray(a), np.asarray(b))
                         for r in fp.rooms for a, b in r.edges()]
            eval_report = evaluate_floorplan(pred_polys, pred_segs, gt, frame,
                                             cfg.room_overlap, cfg.endpoint_tol)
            (out / "eval-report.json").write_text(
                json.dumps(eval_report.to_dict(), indent=2, sort_keys=True) + "\n")

    return PipelineResult(floorplan=fp, filtered=filtered, grid=grid,
                          prompt_set=prompt_set, selected=selected, report=report,
                          eval_report=eval_report)
