"""Core inference loop and mask-directory writing.

The model interface is abstracted behind `Predictor` so the file contract
can be exercised without model weights; `load_sam_predictor` provides the
real implementation when torch + segment-anything + a checkpoint are
available.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

CHECKPOINT_DIR_ENV = "SAM_RUNNER_CHECKPOINT_DIR"
DEFAULT_STABILITY_CUTOFF = 0.8

# expected checkpoint file name per model variant
_VARIANT_CHECKPOINTS = {
    "vit_b": "sam_vit_b_01ec64.pth",
    "vit_l": "sam_vit_l_0b3195.pth",
    "vit_h": "sam_vit_h_4b8939.pth",
}


class MissingCheckpoint(Exception):
    """Checkpoint file absent or unreadable."""


class DeviceUnavailable(Exception):
    """Requested compute device cannot be used."""


class Predictor(Protocol):
    """Minimal prompted-segmentation interface.

    set_image is called once per run; predict is called per prompt with a
    single (x, y) pixel coordinate and returns (masks, scores) where masks
    is (K, H, W) bool and scores is (K,) float.
    """

    def set_image(self, image: np.ndarray) -> None: ...

    def predict(self, point_xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass
class RunnerConfig:
    variant: str = "vit_b"
    checkpoint: str | None = None
    device: str = "cpu"
    multimask: bool = True
    stability_cutoff: float = DEFAULT_STABILITY_CUTOFF

    def resolve_checkpoint(self) -> Path:
        if self.checkpoint:
            path = Path(self.checkpoint)
        else:
            base = Path(os.environ.get(CHECKPOINT_DIR_ENV, "~/.cache/sam")).expanduser()
            name = _VARIANT_CHECKPOINTS.get(self.variant)
            if name is None:
                raise MissingCheckpoint(f"unknown model variant {self.variant!r}")
            path = base / name
        if not path.is_file():
            raise MissingCheckpoint(f"checkpoint not found: {path}")
        return path


def load_sam_predictor(config: RunnerConfig) -> Predictor:
    """Instantiate the real SAM predictor (torch + weights required)."""
    ckpt = config.resolve_checkpoint()
    try:
        import torch
        from segment_anything import SamPredictor, sam_model_registry
    except ImportError as exc:
        raise MissingCheckpoint(
            "torch / segment-anything not installed; install the 'sam' extra") from exc
    if config.device.startswith("cuda") and not torch.cuda.is_available():
        raise DeviceUnavailable(f"device {config.device!r} requested but CUDA "
                                "is not available")
    model = sam_model_registry[config.variant](checkpoint=str(ckpt))
    model.to(config.device)
    sam = SamPredictor(model)

    class _Wrapper:
        def set_image(self, image: np.ndarray) -> None:
            sam.set_image(image)

        def predict(self, point_xy: np.ndarray):
            masks, scores, _ = sam.predict(
                point_coords=point_xy[None, :].astype(np.float32),
                point_labels=np.ones(1, dtype=np.int64),
                multimask_output=config.multimask)
            return masks.astype(bool), scores.astype(np.float64)

    return _Wrapper()


def _canonical_fingerprint(frame: dict) -> str:
    """sha256 of the canonical frame.json serialization (sorted keys,
    trailing newline) — must match the primary pipeline's convention."""
    obj = {"x_min": float(frame["x_min"]), "y_min": float(frame["y_min"]),
           "pixel_size": float(frame["pixel_size"]),
           "width": int(frame["width"]), "height": int(frame["height"])}
    data = (json.dumps(obj, sort_keys=True) + "\n").encode("ascii")
    return hashlib.sha256(data).hexdigest()


def run(density_png, frame_json, prompts_json, out_dir,
        config: RunnerConfig | None = None,
        predictor: Predictor | None = None) -> dict:
    """Segment every in-bounds prompt and write the mask directory.

    Returns the manifest dict. A predictor may be injected for testing;
    otherwise the real SAM predictor is loaded from the configured
    checkpoint.
    """
    config = config or RunnerConfig()
    gray = np.asarray(Image.open(density_png).convert("L"))
    frame = json.loads(Path(frame_json).read_text())
    prompts = json.loads(Path(prompts_json).read_text())
    h, w = int(frame["height"]), int(frame["width"])
    if gray.shape != (h, w):
        raise ValueError(f"density raster {gray.shape} does not match frame "
                         f"({h}, {w})")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries: list[dict] = []

    points = prompts.get("points", [])
    if points:
        if predictor is None:
            predictor = load_sam_predictor(config)
        # the model expects color input: replicate gray to three channels
        predictor.set_image(np.repeat(gray[:, :, None], 3, axis=2))
        idx = 0
        for i, p in enumerate(points):
            m, n = int(p["m"]), int(p["n"])
            if not (0 <= m < w and 0 <= n < h):
                log.warning("prompt %d at (%d, %d) outside %dx%d raster; skipped",
                            i, m, n, w, h)
                continue
            masks, scores = predictor.predict(np.array([m, n], dtype=np.float64))
            for mask, score in zip(masks, scores):
                if float(score) < config.stability_cutoff:
                    continue
                if mask.shape != (h, w):
                    raise ValueError(f"predictor returned {mask.shape} mask "
                                     f"for a ({h}, {w}) raster")
                mask_id = f"{idx:03d}"
                fname = f"mask_{mask_id}.png"
                Image.fromarray(mask.astype(np.uint8) * 255, mode="L") \
                    .save(out / fname)
                entries.append({"id": mask_id, "file": fname,
                                "prompt_index": i, "sam_score": float(score)})
                idx += 1

    manifest = {"backend": "sam",
                "frame": {"width": w, "height": h,
                          "sha256": _canonical_fingerprint(frame)},
                "entries": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                  sort_keys=True) + "\n")
    return manifest
