"""World-registered density raster: projection, enhancement, PNG export."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from PIL import Image
from scipy.spatial import cKDTree

from .errors import (DegenerateExtent, EmptyCounts, IoFailure, PointOutsideFrame,
                     TooFewPoints)
from .ingest import PointCloud

log = logging.getLogger(__name__)

DEFAULT_KAPPA = 1000.0
DEFAULT_R_MIN = 256
DEFAULT_R_MAX = 4096
DEFAULT_BLUR_KERNEL = 5
DEFAULT_BLUR_SIGMA = 1.0
DEFAULT_CLAHE_CLIP = 2.0
DEFAULT_CLAHE_TILES = 8


@dataclass(frozen=True)
class ProjectionFrame:
    """World <-> pixel registration of the density raster.

    Pixel (m, n) covers world x in [x_min + m*s, x_min + (m+1)*s) and
    likewise in y; points exactly on the maximal extent edge fall into
    the last row/column.
    """

    x_min: float
    y_min: float
    pixel_size: float
    width: int
    height: int

    def world_to_pixel(self, xy: np.ndarray) -> np.ndarray:
        """Map (N, 2) world coordinates to (N, 2) integer (m, n) indices."""
        xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))
        rel = (xy - [self.x_min, self.y_min]) / self.pixel_size
        mn = np.floor(rel).astype(np.int64)
        # points exactly at the max edge belong to the last pixel
        edge_m = (mn[:, 0] == self.width) & np.isclose(rel[:, 0], self.width)
        edge_n = (mn[:, 1] == self.height) & np.isclose(rel[:, 1], self.height)
        mn[edge_m, 0] = self.width - 1
        mn[edge_n, 1] = self.height - 1
        return mn

    def pixel_to_world(self, mn: np.ndarray) -> np.ndarray:
        """Pixel-center world coordinates of (N, 2) integer indices."""
        mn = np.atleast_2d(np.asarray(mn, dtype=np.float64))
        return np.column_stack([
            self.x_min + (mn[:, 0] + 0.5) * self.pixel_size,
            self.y_min + (mn[:, 1] + 0.5) * self.pixel_size,
        ])

    def to_json_bytes(self) -> bytes:
        """Canonical frame.json serialization (also the fingerprint input)."""
        obj = {"x_min": self.x_min, "y_min": self.y_min,
               "pixel_size": self.pixel_size,
               "width": self.width, "height": self.height}
        return (json.dumps(obj, sort_keys=True) + "\n").encode("ascii")

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json_bytes()).hexdigest()

    @staticmethod
    def from_json_bytes(data: bytes) -> "ProjectionFrame":
        obj = json.loads(data)
        return ProjectionFrame(x_min=float(obj["x_min"]), y_min=float(obj["y_min"]),
                               pixel_size=float(obj["pixel_size"]),
                               width=int(obj["width"]), height=int(obj["height"]))


@dataclass
class DensityGrid:
    """Raw projected counts plus (after enhance) the 8-bit enhanced raster.

    Arrays are indexed [n, m] (row = n = y index, col = m = x index),
    row 0 at y_min.
    """

    frame: ProjectionFrame
    counts: np.ndarray | None = None      # (H, W) int64
    enhanced: np.ndarray | None = None    # (H, W) uint8


def estimate_point_spacing(pc: PointCloud, sample: int = 1000) -> float:
    """Mean nearest-neighbor 3D distance over a deterministic stride sample."""
    n = len(pc)
    if n < 2:
        raise TooFewPoints("need at least 2 points to estimate spacing")
    if sample < 1:
        raise ValueError("sample must be >= 1")
    k = min(sample, n)
    stride = n // k
    idx = np.arange(0, stride * k, stride)[:k]
    tree = cKDTree(pc.points)
    dists, _ = tree.query(pc.points[idx], k=2)
    return float(dists[:, 1].mean())


def compute_frame(bounds: np.ndarray, delta: float, kappa: float = DEFAULT_KAPPA,
                  r_min: int = DEFAULT_R_MIN, r_max: int = DEFAULT_R_MAX) -> ProjectionFrame:
    """Derive the raster frame from cloud bounds and mean point spacing.

    Target resolution R = kappa * max_extent / delta, clamped to
    [r_min, r_max]; pixel size s = max_extent / R.
    """
    if delta <= 0 or kappa <= 0:
        raise ValueError("delta and kappa must be > 0")
    bounds = np.asarray(bounds, dtype=np.float64)
    x_ext = float(bounds[1, 0] - bounds[0, 0])
    y_ext = float(bounds[1, 1] - bounds[0, 1])
    if x_ext <= 0 or y_ext <= 0:
        raise DegenerateExtent("cloud extent is degenerate in x or y")
    ext = max(x_ext, y_ext)
    r_raw = kappa * ext / delta
    r = int(min(max(round(r_raw), r_min), r_max))
    if round(r_raw) != r:
        log.info("resolution clamped: raw R=%.1f -> %d", r_raw, r)
    s = ext / r
    width = max(1, int(np.ceil(x_ext / s)))
    height = max(1, int(np.ceil(y_ext / s)))
    return ProjectionFrame(x_min=float(bounds[0, 0]), y_min=float(bounds[0, 1]),
                           pixel_size=s, width=width, height=height)


def project_density(pc: PointCloud, frame: ProjectionFrame) -> DensityGrid:
    """Count points per pixel. Every point must map inside the frame."""
    mn = frame.world_to_pixel(pc.points[:, :2])
    bad = ((mn[:, 0] < 0) | (mn[:, 0] >= frame.width)
           | (mn[:, 1] < 0) | (mn[:, 1] >= frame.height))
    if bad.any():
        raise PointOutsideFrame(f"{int(bad.sum())} point(s) project outside the frame")
    flat = mn[:, 1] * frame.width + mn[:, 0]
    counts = np.bincount(flat, minlength=frame.width * frame.height)
    return DensityGrid(frame=frame,
                       counts=counts.reshape(frame.height, frame.width).astype(np.int64))


def log_normalize(counts: np.ndarray) -> np.ndarray:
    """log1p then linear map of [0, max] onto [0, 255] as uint8."""
    if counts is None or not (counts > 0).any():
        raise EmptyCounts("density raster is all zeros")
    img = np.log1p(counts.astype(np.float64))
    return np.rint(img * (255.0 / img.max())).astype(np.uint8)


def enhance(grid: DensityGrid, blur_kernel: int = DEFAULT_BLUR_KERNEL,
            blur_sigma: float = DEFAULT_BLUR_SIGMA,
            clahe_clip: float = DEFAULT_CLAHE_CLIP,
            clahe_tiles: int = DEFAULT_CLAHE_TILES) -> DensityGrid:
    """Enhanced raster = CLAHE(blur(normalize(log1p(counts)))).

    Blur uses a reflective border; CLAHE is tile-based with bilinear
    interpolation between tile mappings.
    """
    if blur_kernel < 1 or blur_kernel % 2 == 0:
        raise ValueError(f"blur_kernel must be odd >= 1, got {blur_kernel}")
    img = log_normalize(grid.counts)
    if blur_kernel > 1:
        img = cv2.GaussianBlur(img, (blur_kernel, blur_kernel), blur_sigma,
                               borderType=cv2.BORDER_REFLECT)
    clahe = cv2.createCLAHE(clipLimit=clahe_clip, tileGridSize=(clahe_tiles, clahe_tiles))
    out = clahe.apply(img)
    return DensityGrid(frame=grid.frame, counts=grid.counts, enhanced=out)


def export_density_png(grid: DensityGrid, png_path, frame_json_path=None) -> None:
    """Write the enhanced raster as 8-bit grayscale PNG + frame.json sidecar.

    Row 0 of the PNG is at y_min (no north-up flip).
    """
    if grid.enhanced is None:
        raise IoFailure("enhance() must run before export")
    png_path = Path(png_path)
    if frame_json_path is None:
        frame_json_path = png_path.with_name("frame.json")
    try:
        Image.fromarray(grid.enhanced, mode="L").save(png_path)
        Path(frame_json_path).write_bytes(grid.frame.to_json_bytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def import_density_png(png_path, frame_json_path=None) -> DensityGrid:
    """Load an exported enhanced raster and its frame sidecar."""
    png_path = Path(png_path)
    if frame_json_path is None:
        frame_json_path = png_path.with_name("frame.json")
    try:
        img = np.asarray(Image.open(png_path).convert("L"), dtype=np.uint8)
        frame = ProjectionFrame.from_json_bytes(Path(frame_json_path).read_bytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if img.shape != (frame.height, frame.width):
        raise IoFailure("PNG dimensions do not match frame.json")
    return DensityGrid(frame=frame, enhanced=img)
