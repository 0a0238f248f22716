"""Density-peak prompt extraction with a minimum-distance constraint."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from .errors import EmptyRaster

DEFAULT_POOL = 11
DEFAULT_MIN_DIST = 10
DEFAULT_TAU_FACTOR = 0.9


@dataclass(frozen=True)
class PromptPoint:
    m: int
    n: int
    score: float


@dataclass(frozen=True)
class PromptSet:
    points: tuple[PromptPoint, ...]
    tau: float
    min_dist_px: float

    def to_json(self) -> str:
        obj = {"tau": self.tau, "min_dist_px": self.min_dist_px,
               "points": [{"m": p.m, "n": p.n, "score": p.score} for p in self.points]}
        return json.dumps(obj, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "PromptSet":
        obj = json.loads(text)
        pts = tuple(PromptPoint(int(p["m"]), int(p["n"]), float(p["score"]))
                    for p in obj["points"])
        return PromptSet(points=pts, tau=float(obj["tau"]),
                         min_dist_px=float(obj["min_dist_px"]))


def compute_tau(enhanced: np.ndarray, factor: float = DEFAULT_TAU_FACTOR,
                mean_mode: str = "all") -> float:
    """Score threshold: factor times the raster mean (all or nonzero pixels)."""
    if mean_mode == "all":
        mean = float(enhanced.mean())
    elif mean_mode == "nonzero":
        nz = enhanced[enhanced > 0]
        mean = float(nz.mean()) if nz.size else 0.0
    else:
        raise ValueError(f"mean_mode must be all or nonzero, got {mean_mode!r}")
    return factor * mean


def detect_peaks(enhanced: np.ndarray, pool: int = DEFAULT_POOL,
                 tau_factor: float = DEFAULT_TAU_FACTOR,
                 mean_mode: str = "all") -> list[PromptPoint]:
    """Pixels equal to their pool x pool neighborhood maximum and >= tau.

    Neighborhoods truncate at the raster border; plateau ties all qualify.
    Result is in (n, m) scan order.
    """
    if enhanced is None or enhanced.size == 0:
        raise EmptyRaster("enhanced raster is empty")
    if pool < 3 or pool % 2 == 0:
        raise ValueError(f"pool must be odd >= 3, got {pool}")
    tau = compute_tau(enhanced, tau_factor, mean_mode)
    # cval=0 is neutral for uint8 data: border neighborhoods truncate correctly
    local_max = maximum_filter(enhanced, size=pool, mode="constant", cval=0)
    ns, ms = np.nonzero((enhanced == local_max) & (enhanced >= tau))
    return [PromptPoint(int(m), int(n), float(enhanced[n, m]))
            for n, m in zip(ns, ms)]


def enforce_min_distance(candidates: list[PromptPoint], min_dist_px: float = DEFAULT_MIN_DIST,
                         tau: float = 0.0) -> PromptSet:
    """Greedy selection in descending score order (ties by (m, n)).

    A candidate survives iff it is at least min_dist_px away from every
    already-kept point.
    """
    if min_dist_px < 0:
        raise ValueError("min_dist_px must be >= 0")
    order = sorted(candidates, key=lambda p: (-p.score, p.m, p.n))
    kept: list[PromptPoint] = []
    kept_xy = np.empty((0, 2), dtype=np.float64)
    d2 = min_dist_px * min_dist_px
    for p in order:
        if kept_xy.size:
            dd = ((kept_xy - [p.m, p.n]) ** 2).sum(axis=1)
            if (dd < d2).any():
                continue
        kept.append(p)
        kept_xy = np.vstack([kept_xy, [p.m, p.n]])
    return PromptSet(points=tuple(kept), tau=tau, min_dist_px=float(min_dist_px))


def extract_prompts(enhanced: np.ndarray, pool: int = DEFAULT_POOL,
                    min_dist_px: float = DEFAULT_MIN_DIST,
                    tau_factor: float = DEFAULT_TAU_FACTOR,
                    mean_mode: str = "all") -> PromptSet:
    """detect_peaks + enforce_min_distance with the threshold recorded."""
    tau = compute_tau(enhanced, tau_factor, mean_mode)
    cands = detect_peaks(enhanced, pool, tau_factor, mean_mode)
    return enforce_min_distance(cands, min_dist_px, tau=tau)
