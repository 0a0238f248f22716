"""Mask backends: fallback flood fill, mask directory I/O, subprocess runner."""

import json
import os
import stat

import numpy as np
import pytest

from floormap.density import DensityGrid, ProjectionFrame
from floormap.errors import BackendUnavailable, DimensionMismatch, FrameMismatch
from floormap.prompts import PromptPoint, PromptSet
from floormap.segmentation import (MaskImage, fallback_segment, load_mask_dir,
                                   run_subprocess_backend, segment,
                                   write_mask_dir)


def two_room_raster(h=60, w=100, wall_col=50):
    """Enhanced-style raster: bright walls around and between two rooms."""
    img = np.zeros((h, w), dtype=np.uint8)
    img[0, :] = img[-1, :] = img[:, 0] = img[:, -1] = 255
    img[:, wall_col] = 255
    left = np.zeros((h, w), dtype=bool)
    left[1:-1, 1:wall_col] = True
    right = np.zeros((h, w), dtype=bool)
    right[1:-1, wall_col + 1:-1] = True
    return img, left, right


def iou(a, b):
    return np.logical_and(a, b).sum() / np.logical_or(a, b).sum()


def _prompts(*mn):
    return PromptSet(points=tuple(PromptPoint(m, n, 255.0) for m, n in mn),
                     tau=0.0, min_dist_px=0.0)


def test_fallback_two_rooms_match_truth():
    img, left, right = two_room_raster()
    masks = fallback_segment(img, _prompts((25, 30), (75, 30)), wall_thresh=128)
    assert len(masks) == 2
    assert iou(masks[0].data, left) >= 0.9
    assert iou(masks[1].data, right) >= 0.9


def test_fallback_masks_are_disjoint_and_deduped():
    img, *_ = two_room_raster()
    # two prompts in the same room -> one mask
    masks = fallback_segment(img, _prompts((20, 20), (30, 40), (75, 30)),
                             wall_thresh=128)
    assert len(masks) == 2
    assert not np.logical_and(masks[0].data, masks[1].data).any()


def test_fallback_skips_wall_prompts(caplog):
    img, *_ = two_room_raster()
    with caplog.at_level("WARNING"):
        masks = fallback_segment(img, _prompts((50, 30), (25, 30)), wall_thresh=128)
    assert len(masks) == 1
    assert any("skipped" in r.message for r in caplog.records)


def test_fallback_seals_one_pixel_wall_gaps():
    img, *_ = two_room_raster()
    img[30, 50] = 0   # pinhole in the dividing wall
    masks = fallback_segment(img, _prompts((25, 30), (75, 30)), wall_thresh=128)
    assert len(masks) == 2


def test_mask_dir_roundtrip(tmp_path):
    img, left, right = two_room_raster()
    frame = ProjectionFrame(0.0, 0.0, 0.05, img.shape[1], img.shape[0])
    masks = [MaskImage(id="000", data=left), MaskImage(id="001", data=right)]
    write_mask_dir(masks, tmp_path / "masks", frame, backend="fallback")
    manifest = json.loads((tmp_path / "masks" / "manifest.json").read_text())
    assert manifest["backend"] == "fallback"
    assert manifest["frame"]["sha256"] == frame.fingerprint()
    back = load_mask_dir(tmp_path / "masks", frame)
    assert [m.id for m in back] == ["000", "001"]
    np.testing.assert_array_equal(back[0].data, left)
    np.testing.assert_array_equal(back[1].data, right)


def test_mask_dir_frame_mismatch(tmp_path):
    img, left, _ = two_room_raster()
    frame = ProjectionFrame(0.0, 0.0, 0.05, img.shape[1], img.shape[0])
    write_mask_dir([MaskImage(id="000", data=left)], tmp_path / "m", frame,
                   backend="fallback")
    other = ProjectionFrame(0.0, 0.0, 0.05, img.shape[1], img.shape[0] + 1)
    with pytest.raises(FrameMismatch):
        load_mask_dir(tmp_path / "m", other)


def test_empty_mask_rejected():
    with pytest.raises(Exception):
        MaskImage(id="000", data=np.zeros((4, 4), dtype=bool))


RUNNER_STUB = """#!/usr/bin/env python3
import argparse, json, hashlib, pathlib
import numpy as np
from PIL import Image

ap = argparse.ArgumentParser()
for flag in ("--density", "--frame", "--prompts", "--out"):
    ap.add_argument(flag, required=True)
args = ap.parse_args()
frame_bytes = pathlib.Path(args.frame).read_bytes()
sha = hashlib.sha256(frame_bytes).hexdigest()
frame = json.loads(frame_bytes)
prompts = json.loads(pathlib.Path(args.prompts).read_text())
out = pathlib.Path(args.out)
out.mkdir(parents=True, exist_ok=True)
entries = []
for i, p in enumerate(prompts["points"]):
    data = np.zeros((frame["height"], frame["width"]), dtype=np.uint8)
    data[p["n"], p["m"]] = 255
    name = f"mask_{i:03d}.png"
    Image.fromarray(data, mode="L").save(out / name)
    entries.append({"id": f"{i:03d}", "file": name, "prompt_index": i,
                    "sam_score": 0.5})
manifest = {"backend": "stub",
            "frame": {"width": frame["width"], "height": frame["height"],
                      "sha256": sha},
            "entries": entries}
(out / "manifest.json").write_text(json.dumps(manifest))
"""


def test_subprocess_backend_contract(tmp_path):
    frame = ProjectionFrame(0.0, 0.0, 0.05, 40, 30)
    rng = np.random.default_rng(0)
    grid = DensityGrid(frame=frame, counts=rng.integers(0, 9, (30, 40)),
                       enhanced=rng.integers(0, 255, (30, 40)).astype(np.uint8))
    runner = tmp_path / "stub-runner"
    runner.write_text(RUNNER_STUB)
    runner.chmod(runner.stat().st_mode | stat.S_IEXEC)
    prompts = _prompts((5, 5), (20, 10))
    masks = run_subprocess_backend(grid, prompts, str(runner))
    assert len(masks) == 2
    assert masks[0].data[5, 5] and masks[1].data[10, 20]


def test_subprocess_backend_missing_executable(tmp_path):
    frame = ProjectionFrame(0.0, 0.0, 0.05, 8, 8)
    grid = DensityGrid(frame=frame, counts=np.ones((8, 8), dtype=np.int64),
                       enhanced=np.ones((8, 8), dtype=np.uint8))
    with pytest.raises(BackendUnavailable):
        run_subprocess_backend(grid, _prompts((1, 1)), "/nonexistent/runner")


def test_segment_dispatch_unknown_backend():
    frame = ProjectionFrame(0.0, 0.0, 0.05, 8, 8)
    grid = DensityGrid(frame=frame, counts=np.ones((8, 8), dtype=np.int64),
                       enhanced=np.full((8, 8), 255, dtype=np.uint8))
    with pytest.raises(BackendUnavailable):
        segment(grid, _prompts((1, 1)), backend="nope")
