"""Synthetic apartment generator: layout validation and ground truth."""

import dataclasses

import numpy as np
import pytest

from floormap.errors import InvalidLayout
from floormap.synthetic import (DoorSpec, RoomSpec, SceneSpec, four_room_spec,
                                generate_synthetic, validate_layout)


def test_four_room_spec_layout_is_valid():
    spec = four_room_spec()
    shared = validate_layout(spec)
    assert len(shared) == len(spec.doors)


def test_duplicate_room_ids_rejected():
    spec = SceneSpec(rooms=[RoomSpec("a", 0, 0, 2, 2), RoomSpec("a", 2, 0, 4, 2)],
                     doors=[])
    with pytest.raises(InvalidLayout):
        validate_layout(spec)


def test_overlapping_rooms_rejected():
    spec = SceneSpec(rooms=[RoomSpec("a", 0, 0, 3, 2), RoomSpec("b", 2, 0, 5, 2)],
                     doors=[])
    with pytest.raises(InvalidLayout):
        validate_layout(spec)


def test_door_off_shared_wall_rejected():
    rooms = [RoomSpec("a", 0, 0, 2, 2), RoomSpec("b", 2, 0, 4, 2)]
    with pytest.raises(InvalidLayout):
        validate_layout(SceneSpec(rooms=rooms,
                                  doors=[DoorSpec("a", "b", center=3.0)]))
    with pytest.raises(InvalidLayout):
        validate_layout(SceneSpec(rooms=[RoomSpec("a", 0, 0, 2, 2),
                                         RoomSpec("b", 3, 0, 5, 2)],
                                  doors=[DoorSpec("a", "b", center=1.0)]))


def test_generation_is_seed_deterministic():
    a, _ = generate_synthetic(four_room_spec(seed=5))
    b, _ = generate_synthetic(four_room_spec(seed=5))
    np.testing.assert_array_equal(a.points, b.points)
    c, _ = generate_synthetic(four_room_spec(seed=6))
    assert not np.array_equal(a.points, c.points)


def test_ground_truth_structure():
    spec = four_room_spec()
    cloud, truth = generate_synthetic(spec)
    assert len(truth.gt.rooms) == 4
    assert len(truth.gt.boundaries) == 16      # 4 edges per room
    assert len(truth.doors) == 3
    for _, _, p0, p1 in truth.doors:
        assert np.linalg.norm(p1 - p0) == pytest.approx(0.9)
    # interiors are inset half a wall thickness from the centerline rects
    t = spec.wall_thickness
    for r, poly in zip(spec.rooms, truth.gt.rooms):
        np.testing.assert_allclose(poly.min(axis=0), [r.x0 + t / 2, r.y0 + t / 2])
        np.testing.assert_allclose(poly.max(axis=0), [r.x1 - t / 2, r.y1 - t / 2])
    assert truth.scene_area_m2 == pytest.approx(80.0, rel=0.05)


def test_cloud_spans_walls_and_openings():
    spec = four_room_spec(seed=3)
    cloud, truth = generate_synthetic(spec)
    pts = cloud.points
    assert 40_000 <= len(pts) <= 90_000
    z = pts[:, 2]
    assert z.min() > -0.1 and z.max() < spec.ceiling_height + 0.1
    # door cut: points on the x=6 wall within the door interval sit above
    # door_top only (the lintel survives)
    on_wall = (np.abs(pts[:, 0] - 6.0) < spec.wall_thickness / 2 + 0.02) \
        & (np.abs(pts[:, 1] - 2.0) < 0.3) \
        & (z > 0.2) & (z < spec.ceiling_height - 0.2)
    assert on_wall.any()
    assert z[on_wall].min() >= spec.door_top - 0.05


def test_noise_applied():
    quiet, _ = generate_synthetic(dataclasses.replace(four_room_spec(seed=1),
                                                      noise_sigma=0.0))
    noisy, _ = generate_synthetic(dataclasses.replace(four_room_spec(seed=1),
                                                      noise_sigma=0.05))
    assert len(quiet) == len(noisy)
    assert not np.array_equal(quiet.points, noisy.points)
