"""Grid-based ceiling retention and RANSAC plane fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, EmptyCloud
from .ingest import PointCloud

DEFAULT_GAMMA = 0.1       # XOY grid size, meters
DEFAULT_DELTA_Z = 0.1     # height tolerance below the cell maximum, meters
DEFAULT_RANSAC_THRESH = 0.05
DEFAULT_RANSAC_ITERS = 1000


@dataclass(frozen=True)
class PlaneModel:
    """Plane ax + by + cz + d = 0 with unit normal (a, b, c)."""

    normal: np.ndarray   # (3,) unit vector
    d: float
    inliers: np.ndarray  # sorted indices into the source cloud
    threshold: float

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal + self.d)


def grid_ceiling_filter(pc: PointCloud, gamma: float = DEFAULT_GAMMA,
                        delta_z: float = DEFAULT_DELTA_Z,
                        mode: str = "per_cell") -> PointCloud:
    """Keep points whose z is within delta_z of the ceiling reference.

    mode="per_cell": reference is the z-maximum of the point's XOY grid cell
    (cells of size gamma anchored at the cloud's min corner). mode="global"
    uses the cloud-wide z-maximum instead. Point order is preserved.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if delta_z < 0:
        raise ValueError(f"delta_z must be >= 0, got {delta_z}")
    if mode not in ("per_cell", "global"):
        raise ValueError(f"mode must be per_cell or global, got {mode!r}")
    pts = pc.points
    z = pts[:, 2]
    if mode == "global":
        keep = z >= z.max() - delta_z
    else:
        lo = pts[:, :2].min(axis=0)
        cells = np.floor((pts[:, :2] - lo) / gamma).astype(np.int64)
        _, inverse = np.unique(cells, axis=0, return_inverse=True)
        cellmax = np.full(inverse.max() + 1, -np.inf)
        np.maximum.at(cellmax, inverse, z)
        keep = z >= cellmax[inverse] - delta_z
    if not keep.any():
        raise EmptyCloud("ceiling filter removed every point")
    return PointCloud(pts[keep])


def _fit_plane_lsq(points: np.ndarray):
    """Least-squares plane through points via SVD; returns (normal, d)."""
    centroid = points.mean(axis=0)
    _, s, vt = np.linalg.svd(points - centroid, full_matrices=False)
    normal = vt[-1]
    if points.shape[0] >= 3 and s[1] <= 1e-12 * max(s[0], 1.0):
        raise DegenerateGeometry("points are collinear; plane is underdetermined")
    # canonical sign: largest-magnitude component positive
    k = int(np.argmax(np.abs(normal)))
    if normal[k] < 0:
        normal = -normal
    return normal, float(-normal @ centroid)


def ransac_plane(pc: PointCloud, dist_thresh: float = DEFAULT_RANSAC_THRESH,
                 max_iters: int = DEFAULT_RANSAC_ITERS, seed: int = 0) -> PlaneModel:
    """Best-inlier-count plane over max_iters random 3-point samples.

    The winning minimal-sample plane is refit to its inliers by least
    squares; the refit is kept only if it does not lose inliers.
    Deterministic for a fixed seed.
    """
    if dist_thresh <= 0:
        raise ValueError(f"dist_thresh must be > 0, got {dist_thresh}")
    pts = pc.points
    n = pts.shape[0]
    if n < 3:
        raise DegenerateGeometry("need at least 3 points to fit a plane")

    rng = np.random.default_rng(seed)
    best_count = -1
    best = None
    for _ in range(max_iters):
        i, j, k = rng.integers(0, n, size=3)
        a, b, c = pts[i], pts[j], pts[k]
        nvec = np.cross(b - a, c - a)
        norm = np.linalg.norm(nvec)
        if norm < 1e-12:
            continue  # degenerate sample
        nvec = nvec / norm
        d = float(-nvec @ a)
        count = int((np.abs(pts @ nvec + d) <= dist_thresh).sum())
        if count > best_count:
            best_count = count
            best = (nvec, d)
    if best is None:
        raise DegenerateGeometry("all points collinear: no valid 3-point sample")

    normal, d = best
    inliers = np.abs(pts @ normal + d) <= dist_thresh
    refit_normal, refit_d = _fit_plane_lsq(pts[inliers])
    refit_in = np.abs(pts @ refit_normal + refit_d) <= dist_thresh
    if refit_in.sum() >= inliers.sum():
        normal, d, inliers = refit_normal, refit_d, refit_in
    else:
        k = int(np.argmax(np.abs(normal)))
        if normal[k] < 0:
            normal, d = -normal, -d
    return PlaneModel(normal=normal, d=float(d),
                      inliers=np.flatnonzero(inliers), threshold=dist_thresh)
