"""Candidate room mask production via pluggable backends.

Backends: external_dir (pre-produced mask directory), runner_subprocess
(shells out to the sam-runner file contract), fallback (built-in
deterministic flood-fill segmenter; no model weights needed).
"""

from __future__ import annotations

import json
import logging
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.ndimage import label

from .density import DensityGrid, ProjectionFrame, export_density_png
from .errors import BackendUnavailable, DecodeFailure, FrameMismatch
from .prompts import PromptSet

log = logging.getLogger(__name__)

DEFAULT_WALL_THRESH = 128
BACKENDS = ("external_dir", "runner_subprocess", "fallback")

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


@dataclass(frozen=True)
class MaskImage:
    """Frame-aligned binary raster candidate with a stable id."""

    id: str
    data: np.ndarray  # (H, W) bool

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=bool)
        if not arr.any():
            raise DecodeFailure(f"mask {self.id!r} has no foreground pixels")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def area_px(self) -> int:
        return int(self.data.sum())


@dataclass
class ManifestEntry:
    id: str
    file: str
    prompt_index: int | None = None
    sam_score: float | None = None


@dataclass
class MaskManifest:
    backend: str
    width: int
    height: int
    frame_sha256: str
    entries: list[ManifestEntry] = field(default_factory=list)

    def to_json(self) -> str:
        obj = {
            "backend": self.backend,
            "frame": {"width": self.width, "height": self.height,
                      "sha256": self.frame_sha256},
            "entries": [{"id": e.id, "file": e.file, "prompt_index": e.prompt_index,
                         "sam_score": e.sam_score} for e in self.entries],
        }
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "MaskManifest":
        obj = json.loads(text)
        entries = [ManifestEntry(id=e["id"], file=e["file"],
                                 prompt_index=e.get("prompt_index"),
                                 sam_score=e.get("sam_score"))
                   for e in obj["entries"]]
        return MaskManifest(backend=obj["backend"], width=int(obj["frame"]["width"]),
                            height=int(obj["frame"]["height"]),
                            frame_sha256=obj["frame"]["sha256"], entries=entries)


def write_mask_dir(masks: list[MaskImage], out_dir, frame: ProjectionFrame,
                   backend: str, prompt_indices: list[int] | None = None,
                   scores: list[float] | None = None) -> MaskManifest:
    """Persist masks as masks/mask_<id>.png + manifest.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = MaskManifest(backend=backend, width=frame.width, height=frame.height,
                            frame_sha256=frame.fingerprint())
    for i, mask in enumerate(masks):
        fname = f"mask_{mask.id}.png"
        img = (mask.data.astype(np.uint8)) * 255
        Image.fromarray(img, mode="L").save(out_dir / fname)
        manifest.entries.append(ManifestEntry(
            id=mask.id, file=fname,
            prompt_index=prompt_indices[i] if prompt_indices else None,
            sam_score=scores[i] if scores else None))
    (out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


def load_mask_dir(mask_dir, frame: ProjectionFrame) -> list[MaskImage]:
    """Load a mask directory, validating its fingerprint against the frame."""
    mask_dir = Path(mask_dir)
    manifest_path = mask_dir / "manifest.json"
    if not manifest_path.exists():
        raise BackendUnavailable(f"no manifest.json in {mask_dir}")
    manifest = MaskManifest.from_json(manifest_path.read_text())
    if (manifest.width, manifest.height) != (frame.width, frame.height) \
            or manifest.frame_sha256 != frame.fingerprint():
        raise FrameMismatch("mask manifest fingerprint does not match frame.json")
    masks = []
    for entry in manifest.entries:
        path = mask_dir / entry.file
        if not path.exists():
            raise DecodeFailure(f"manifest references missing file {entry.file}")
        try:
            arr = np.asarray(Image.open(path).convert("L"))
        except OSError as exc:
            raise DecodeFailure(f"cannot decode {entry.file}: {exc}") from exc
        if arr.shape != (frame.height, frame.width):
            raise FrameMismatch(f"mask {entry.id} dimensions differ from frame")
        masks.append(MaskImage(id=entry.id, data=arr > 127))
    return masks


def fallback_segment(enhanced: np.ndarray, prompts: PromptSet,
                     wall_thresh: int = DEFAULT_WALL_THRESH) -> list[MaskImage]:
    """Flood-fill stand-in segmenter: one mask per distinct free region hit.

    Pixels >= wall_thresh are walls; prompts landing on walls are skipped
    with a warning. Masks are pairwise disjoint by construction.
    """
    if not 0 <= wall_thresh <= 255:
        raise ValueError("wall_thresh must be in [0, 255]")
    # Close one-pixel gaps in the wall evidence so sampling holes in a wall
    # do not let the flood fill leak between rooms.  Edge-padding keeps the
    # closing from eroding walls that touch the raster border.
    padded = np.pad(enhanced >= wall_thresh, 1, mode="edge")
    wall = ndimage.binary_closing(padded,
                                  structure=np.ones((3, 3), dtype=bool))[1:-1, 1:-1]
    free = ~wall
    labels, _ = label(free, structure=FOUR_CONN)
    masks: list[MaskImage] = []
    seen: set[int] = set()
    for i, p in enumerate(prompts.points):
        lab = int(labels[p.n, p.m])
        if lab == 0:
            log.warning("prompt %d at (%d, %d) lies on a wall pixel; skipped",
                        i, p.m, p.n)
            continue
        if lab in seen:
            continue
        seen.add(lab)
        masks.append(MaskImage(id=f"{len(masks):03d}", data=labels == lab))
    return masks


def run_subprocess_backend(grid: DensityGrid, prompts: PromptSet,
                           runner_cmd: str = "sam-runner",
                           work_dir=None) -> list[MaskImage]:
    """Invoke the sam-runner file contract and load its output masks."""
    if grid.enhanced is None:
        raise BackendUnavailable("enhanced raster required for the runner backend")
    ctx = tempfile.TemporaryDirectory() if work_dir is None else None
    base = Path(ctx.name) if ctx else Path(work_dir)
    try:
        base.mkdir(parents=True, exist_ok=True)
        density_png = base / "density.png"
        frame_json = base / "frame.json"
        prompts_json = base / "prompts.json"
        out_dir = base / "masks"
        export_density_png(grid, density_png, frame_json)
        prompts_json.write_text(prompts.to_json())
        cmd = [runner_cmd, "--density", str(density_png), "--frame", str(frame_json),
               "--prompts", str(prompts_json), "--out", str(out_dir)]
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True)
        except FileNotFoundError as exc:
            raise BackendUnavailable(f"runner executable not found: {runner_cmd}") from exc
        if proc.returncode != 0:
            raise BackendUnavailable(
                f"runner exited {proc.returncode}: {proc.stderr.strip()}")
        return load_mask_dir(out_dir, grid.frame)
    finally:
        if ctx:
            ctx.cleanup()


def segment(grid: DensityGrid, prompts: PromptSet, backend: str = "fallback",
            wall_thresh: int = DEFAULT_WALL_THRESH, external_dir=None,
            runner_cmd: str = "sam-runner") -> list[MaskImage]:
    """Produce candidate masks via the configured backend."""
    if backend == "fallback":
        if grid.enhanced is None:
            raise BackendUnavailable("enhanced raster required for fallback backend")
        return fallback_segment(grid.enhanced, prompts, wall_thresh)
    if backend == "external_dir":
        if external_dir is None:
            raise BackendUnavailable("external_dir backend needs a mask directory")
        return load_mask_dir(external_dir, grid.frame)
    if backend == "runner_subprocess":
        return run_subprocess_backend(grid, prompts, runner_cmd)
    raise BackendUnavailable(f"unknown backend {backend!r}, expected one of {BACKENDS}")
