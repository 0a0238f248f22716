"""Pipeline configuration: defaults, INI-style file I/O, CLI overrides."""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, fields


@dataclass
class PipelineConfig:
    # ceiling filtering
    gamma: float = 0.1
    delta_z: float = 0.1
    ceiling_mode: str = "per_cell"        # per_cell | global
    ransac_thresh: float = 0.05
    ransac_iters: int = 1000
    # density map
    kappa: float = 1000.0
    r_min: int = 256
    r_max: int = 4096
    spacing_sample: int = 1000
    blur_kernel: int = 5
    blur_sigma: float = 1.0
    clahe_clip: float = 2.0
    clahe_tiles: int = 8
    # prompts
    pool: int = 11
    min_dist_px: float = 10.0
    tau_factor: float = 0.9
    tau_mean_mode: str = "all"            # all | nonzero
    # segmentation
    backend: str = "fallback"             # fallback | external_dir | runner_subprocess
    wall_thresh: int = 128
    external_mask_dir: str = ""
    runner_cmd: str = "sam-runner"
    # mask filtering
    dedup_iou: float = 0.8
    group_iou: float = 0.5
    inclusion_thresh: float = 0.9
    coverage_target: float = 0.95
    cover_iou_tol: float = 0.01
    min_points: float = -1.0              # <0: pixel-size-scaled default
    max_holes: int = 2
    # contour
    boundary_radius: float = 0.2
    boundary_sector_deg: float = 30.0
    fuse_tau: float = 0.05
    fuse_mode: str = "edge"               # edge | vertex
    merge_factor: float = 2.0             # collinear-merge tolerance, in pixels
    # topology
    gap_tol: float = 0.4
    min_door: float = 0.6
    max_door: float = 2.0
    door_band_lo: float = 0.3             # height band for door evidence, meters
    door_band_hi: float = 1.8
    # evaluation
    room_overlap: float = 0.95
    endpoint_tol: float = 0.005
    # global
    seed: int = 0

    _SECTIONS = {
        "ceiling": ("gamma", "delta_z", "ceiling_mode", "ransac_thresh", "ransac_iters"),
        "density": ("kappa", "r_min", "r_max", "spacing_sample", "blur_kernel",
                    "blur_sigma", "clahe_clip", "clahe_tiles"),
        "prompts": ("pool", "min_dist_px", "tau_factor", "tau_mean_mode"),
        "segmentation": ("backend", "wall_thresh", "external_mask_dir", "runner_cmd"),
        "mask_filter": ("dedup_iou", "group_iou", "inclusion_thresh",
                        "coverage_target", "cover_iou_tol", "min_points", "max_holes"),
        "contour": ("boundary_radius", "boundary_sector_deg", "fuse_tau", "fuse_mode",
                    "merge_factor"),
        "topology": ("gap_tol", "min_door", "max_door", "door_band_lo", "door_band_hi"),
        "eval": ("room_overlap", "endpoint_tol"),
        "global": ("seed",),
    }

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for section, keys in self._SECTIONS.items():
            cp[section] = {k: repr(getattr(self, k)) if isinstance(getattr(self, k), float)
                           else str(getattr(self, k)) for k in keys}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "PipelineConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for section in cp.sections():
            for key, raw in cp[section].items():
                if key not in types:
                    raise ValueError(f"unknown config key {key!r} in [{section}]")
                ftype = types[key]
                if ftype in ("int", int):
                    kwargs[key] = int(raw)
                elif ftype in ("float", float):
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = raw
        return cls(**kwargs)

    def apply_overrides(self, overrides: dict) -> "PipelineConfig":
        cfg = PipelineConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        for key, value in overrides.items():
            if value is None:
                continue
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
        return cfg

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:16]
