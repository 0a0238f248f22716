"""Command-line entry point: per-stage subcommands plus full pipeline runs.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import ceiling, contour, density, mask_filter, prompts, segmentation, topology
from .config import PipelineConfig
from .errors import FloormapError, StageError
from .evaluation import GroundTruth, evaluate_floorplan
from .ingest import load_point_cloud, save_xyz, voxel_downsample
from .pipeline import (floorplan_from_json, floorplan_to_json, render_svg,
                       run_pipeline)
from .synthetic import four_room_spec, generate_synthetic

ENV_CONFIG = "FLOORMAP_CONFIG"


def _load_config(args) -> PipelineConfig:
    path = getattr(args, "config", None) or os.environ.get(ENV_CONFIG)
    cfg = PipelineConfig.from_ini(Path(path).read_text()) if path else PipelineConfig()
    overrides = {}
    for key in ("gamma", "delta_z", "ransac_thresh", "ransac_iters", "seed",
                "backend", "wall_thresh", "kappa", "r_min", "r_max"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        current = getattr(PipelineConfig(), key, None)
        if current is None:
            raise ValueError(f"unknown config key {key!r}")
        overrides[key] = type(current)(raw)
    return cfg.apply_overrides(overrides)


def _add_config_args(p):
    p.add_argument("--config", help="INI config file (or $FLOORMAP_CONFIG)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key")
    p.add_argument("--gamma", type=float)
    p.add_argument("--delta-z", dest="delta_z", type=float)
    p.add_argument("--ransac-thresh", dest="ransac_thresh", type=float)
    p.add_argument("--ransac-iters", dest="ransac_iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--backend", choices=segmentation.BACKENDS)
    p.add_argument("--wall-thresh", dest="wall_thresh", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--r-min", dest="r_min", type=int)
    p.add_argument("--r-max", dest="r_max", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="floormap",
                                 description="Floorplan reconstruction from "
                                             "indoor LiDAR point clouds")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and normalize a point cloud")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--voxel", type=float, help="optional voxel downsample size")

    p = sub.add_parser("filter-ceiling", help="grid-based ceiling retention")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("density", help="project + enhance the density map")
    p.add_argument("input", help="filtered cloud (.xyz/.ply)")
    p.add_argument("--out-dir", required=True)
    _add_config_args(p)

    p = sub.add_parser("prompts", help="extract prompt points")
    p.add_argument("--density", required=True)
    p.add_argument("--frame", required=True)
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("segment", help="produce candidate masks")
    p.add_argument("--density", required=True)
    p.add_argument("--frame", required=True)
    p.add_argument("--prompts", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--external-dir", help="mask dir for the external_dir backend")
    _add_config_args(p)

    p = sub.add_parser("filter-masks", help="two-stage mask filtering")
    p.add_argument("--masks-dir", required=True)
    p.add_argument("--frame", required=True)
    p.add_argument("--cloud", required=True, help="filtered cloud")
    p.add_argument("--out", required=True, help="filter-report.json path")
    _add_config_args(p)

    p = sub.add_parser("contour", help="extract regularized room contours")
    p.add_argument("--masks-dir", required=True)
    p.add_argument("--frame", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--report", required=True, help="filter-report.json")
    p.add_argument("--out", required=True, help="rooms.json path")
    _add_config_args(p)

    p = sub.add_parser("topology", help="recover doors and assemble floorplan")
    p.add_argument("--rooms", required=True, help="rooms.json")
    p.add_argument("--cloud", required=True, help="full input cloud")
    p.add_argument("--frame", required=True)
    p.add_argument("--out", required=True, help="floorplan.json path")
    _add_config_args(p)

    p = sub.add_parser("eval", help="score a floorplan against gt.json")
    p.add_argument("--floorplan", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--gt")
    _add_config_args(p)

    p = sub.add_parser("synth", help="generate the reference synthetic scene")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.01)

    p = sub.add_parser("render", help="render floorplan.json to SVG")
    p.add_argument("--floorplan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", action="store_true", help="draw a 1 m grid")
    return ap


def _cmd(args) -> int:
    cmd = args.command
    if cmd == "ingest":
        pc = load_point_cloud(args.input)
        if args.voxel:
            pc = voxel_downsample(pc, args.voxel)
        save_xyz(pc, args.out)
        return 0

    if cmd == "synth":
        spec = four_room_spec(seed=args.seed, noise_sigma=args.noise)
        cloud, truth = generate_synthetic(spec)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_xyz(cloud, out / "cloud.xyz")
        (out / "gt.json").write_text(truth.gt.to_json())
        return 0

    if cmd == "render":
        fp = floorplan_from_json(Path(args.floorplan).read_text())
        Path(args.out).write_bytes(render_svg(fp, grid_1m=args.grid))
        return 0

    cfg = _load_config(args)

    if cmd == "filter-ceiling":
        pc = load_point_cloud(args.input)
        out = ceiling.grid_ceiling_filter(pc, cfg.gamma, cfg.delta_z, cfg.ceiling_mode)
        save_xyz(out, args.out)
        return 0

    if cmd == "density":
        pc = load_point_cloud(args.input)
        spacing = density.estimate_point_spacing(pc, cfg.spacing_sample)
        frame = density.compute_frame(pc.bounds, spacing, cfg.kappa,
                                      cfg.r_min, cfg.r_max)
        grid = density.enhance(density.project_density(pc, frame),
                               cfg.blur_kernel, cfg.blur_sigma,
                               cfg.clahe_clip, cfg.clahe_tiles)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        density.export_density_png(grid, out / "density.png", out / "frame.json")
        return 0

    if cmd == "prompts":
        grid = density.import_density_png(args.density, args.frame)
        ps = prompts.extract_prompts(grid.enhanced, cfg.pool, cfg.min_dist_px,
                                     cfg.tau_factor, cfg.tau_mean_mode)
        Path(args.out).write_text(ps.to_json())
        return 0

    if cmd == "segment":
        grid = density.import_density_png(args.density, args.frame)
        ps = prompts.PromptSet.from_json(Path(args.prompts).read_text())
        masks = segmentation.segment(
            grid, ps, cfg.backend, wall_thresh=cfg.wall_thresh,
            external_dir=args.external_dir or cfg.external_mask_dir or None,
            runner_cmd=cfg.runner_cmd)
        segmentation.write_mask_dir(masks, args.out_dir, grid.frame, cfg.backend)
        return 0

    if cmd == "filter-masks":
        frame = density.ProjectionFrame.from_json_bytes(Path(args.frame).read_bytes())
        masks = segmentation.load_mask_dir(args.masks_dir, frame)
        pc = load_point_cloud(args.cloud)
        point_px = frame.world_to_pixel(pc.points[:, :2])
        bounds = pc.bounds
        scene_area = float((bounds[1, 0] - bounds[0, 0]) * (bounds[1, 1] - bounds[0, 1]))
        stats = mask_filter.compute_stats(masks, frame.pixel_size, point_px)
        min_points = cfg.min_points if cfg.min_points >= 0 else None
        _, report = mask_filter.filter_masks(
            stats, scene_area, min_points, cfg.dedup_iou, cfg.group_iou,
            cfg.inclusion_thresh, cfg.coverage_target, cfg.cover_iou_tol,
            cfg.max_holes)
        Path(args.out).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        return 0

    if cmd == "contour":
        frame = density.ProjectionFrame.from_json_bytes(Path(args.frame).read_bytes())
        masks = segmentation.load_mask_dir(args.masks_dir, frame)
        report = json.loads(Path(args.report).read_text())
        selected_ids = set(report["selected"])
        pc = load_point_cloud(args.cloud)
        spacing = density.estimate_point_spacing(pc, cfg.spacing_sample)
        point_px = frame.world_to_pixel(pc.points[:, :2])
        rooms = []
        for mask in masks:
            if mask.id not in selected_ids:
                continue
            inside = mask.data[point_px[:, 1], point_px[:, 0]]
            rc = contour.room_contour_from_mask(
                mask, frame, pc.points[inside][:, :2], spacing,
                cfg.boundary_radius, math.radians(cfg.boundary_sector_deg),
                cfg.fuse_tau, cfg.fuse_mode)
            rc.room_id = f"room_{mask.id}"
            rooms.append(rc)
        obj = {"rooms": [{"id": r.room_id, "theta_main": r.theta_main,
                          "regularized": r.regularized,
                          "polygon": r.vertices.tolist()} for r in rooms]}
        Path(args.out).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        return 0

    if cmd == "topology":
        frame = density.ProjectionFrame.from_json_bytes(Path(args.frame).read_bytes())
        obj = json.loads(Path(args.rooms).read_text())
        rooms = [contour.RoomContour(room_id=r["id"],
                                     vertices=np.array(r["polygon"]),
                                     theta_main=float(r["theta_main"]),
                                     regularized=bool(r.get("regularized", True)))
                 for r in obj["rooms"]]
        pc = load_point_cloud(args.cloud)
        z0 = float(pc.points[:, 2].min())
        band = ((pc.points[:, 2] >= z0 + cfg.door_band_lo)
                & (pc.points[:, 2] <= z0 + cfg.door_band_hi))
        pairs = topology.find_adjacent_segments(rooms, cfg.gap_tol, cfg.min_door)
        doors = [d for pair in pairs
                 if (d := topology.detect_door(pair, pc.points[band][:, :2], frame,
                                               cfg.min_door, cfg.max_door)) is not None]
        fp = topology.assemble_floorplan(rooms, doors, frame)
        Path(args.out).write_text(floorplan_to_json(fp))
        return 0

    if cmd == "eval":
        fp = floorplan_from_json(Path(args.floorplan).read_text())
        gt = GroundTruth.load(args.gt)
        pred_polys = [r.vertices for r in fp.rooms]
        pred_segs = [(np.asarray(a), np.asarray(b))
                     for r in fp.rooms for a, b in r.edges()]
        report = evaluate_floorplan(pred_polys, pred_segs, gt, fp.frame,
                                    cfg.room_overlap, cfg.endpoint_tol)
        Path(args.out).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        return 0

    if cmd == "run":
        pc = load_point_cloud(args.input)
        gt = GroundTruth.load(args.gt) if args.gt else None
        run_pipeline(cfg, pc, args.out_dir, gt)
        return 0

    raise ValueError(f"unhandled command {cmd!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _cmd(args)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 3
    except FloormapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
