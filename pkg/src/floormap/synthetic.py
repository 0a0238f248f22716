"""Synthetic indoor scene generator: sampled ceiling/floor/wall points with
door gaps, plus mutually consistent ground truth for tests and evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidLayout
from .evaluation import GroundTruth
from .ingest import PointCloud


@dataclass(frozen=True)
class RoomSpec:
    """Axis-aligned room given by its wall centerline rectangle."""

    id: str
    x0: float
    y0: float
    x1: float
    y1: float

    def interior(self, wall_thickness: float) -> np.ndarray:
        h = wall_thickness / 2.0
        return np.array([[self.x0 + h, self.y0 + h], [self.x1 - h, self.y0 + h],
                         [self.x1 - h, self.y1 - h], [self.x0 + h, self.y1 - h]])


@dataclass(frozen=True)
class DoorSpec:
    room_a: str
    room_b: str
    center: float   # tangential coordinate along the shared wall
    width: float = 0.9


@dataclass
class SceneSpec:
    rooms: list[RoomSpec]
    doors: list[DoorSpec] = field(default_factory=list)
    wall_thickness: float = 0.1
    ceiling_height: float = 3.0
    door_top: float = 2.0
    ceiling_density: float = 200.0     # points / m^2
    floor_density: float = 50.0
    wall_density: float = 250.0        # points / m^2 of wall surface
    wall_top_frac: float = 0.85        # fraction of wall points near the ceiling
    wall_top_band: float = 0.15
    noise_sigma: float = 0.01
    seed: int = 0


@dataclass(frozen=True)
class _Wall:
    axis: int          # 0: wall runs along x (horizontal), 1: along y
    c: float           # fixed coordinate (centerline)
    lo: float
    hi: float


@dataclass
class SceneTruth:
    gt: GroundTruth
    adjacency: list[tuple[str, str]]
    doors: list[tuple[str, str, np.ndarray, np.ndarray]]  # (a, b, p0, p1)
    scene_area_m2: float


def _walls_of_room(r: RoomSpec) -> list[_Wall]:
    return [
        _Wall(axis=0, c=r.y0, lo=r.x0, hi=r.x1),
        _Wall(axis=0, c=r.y1, lo=r.x0, hi=r.x1),
        _Wall(axis=1, c=r.x0, lo=r.y0, hi=r.y1),
        _Wall(axis=1, c=r.x1, lo=r.y0, hi=r.y1),
    ]


def _shared_wall(a: RoomSpec, b: RoomSpec) -> _Wall | None:
    """Common wall segment (same line, overlapping span) of two rooms."""
    for wa in _walls_of_room(a):
        for wb in _walls_of_room(b):
            if wa.axis != wb.axis or abs(wa.c - wb.c) > 1e-9:
                continue
            lo, hi = max(wa.lo, wb.lo), min(wa.hi, wb.hi)
            if hi - lo > 1e-9:
                return _Wall(axis=wa.axis, c=wa.c, lo=lo, hi=hi)
    return None


def validate_layout(spec: SceneSpec) -> dict[tuple[str, str], _Wall]:
    """Check non-overlapping rooms and doors on shared walls.

    Returns the shared wall per door key for reuse during carving.
    """
    rooms = spec.rooms
    by_id = {r.id: r for r in rooms}
    if len(by_id) != len(rooms):
        raise InvalidLayout("duplicate room ids")
    for i in range(len(rooms)):
        for j in range(i + 1, len(rooms)):
            a, b = rooms[i], rooms[j]
            ox = min(a.x1, b.x1) - max(a.x0, b.x0)
            oy = min(a.y1, b.y1) - max(a.y0, b.y0)
            if ox > 1e-9 and oy > 1e-9:
                raise InvalidLayout(f"rooms {a.id} and {b.id} overlap")
    shared = {}
    for d in spec.doors:
        if d.room_a not in by_id or d.room_b not in by_id:
            raise InvalidLayout(f"door references unknown room {d.room_a}/{d.room_b}")
        wall = _shared_wall(by_id[d.room_a], by_id[d.room_b])
        if wall is None:
            raise InvalidLayout(f"rooms {d.room_a} and {d.room_b} share no wall")
        lo, hi = d.center - d.width / 2, d.center + d.width / 2
        if lo < wall.lo - 1e-9 or hi > wall.hi + 1e-9:
            raise InvalidLayout(f"door between {d.room_a} and {d.room_b} "
                                "exceeds the shared wall span")
        shared[(d.room_a, d.room_b)] = wall
    return shared


def generate_synthetic(spec: SceneSpec) -> tuple[PointCloud, SceneTruth]:
    """Sample the scene's surfaces and emit the matching ground truth."""
    door_walls = validate_layout(spec)
    rng = np.random.default_rng(spec.seed)
    h = spec.ceiling_height
    t = spec.wall_thickness
    chunks = []

    scene_area = 0.0
    for r in spec.rooms:
        area = (r.x1 - r.x0) * (r.y1 - r.y0)
        scene_area += area
        for z, dens in ((h, spec.ceiling_density), (0.0, spec.floor_density)):
            n = max(1, int(round(dens * area)))
            xy = rng.uniform([r.x0, r.y0], [r.x1, r.y1], size=(n, 2))
            chunks.append(np.column_stack([xy, np.full(n, z)]))

    # unique walls (shared edges sampled once)
    walls: dict[tuple, _Wall] = {}
    for r in spec.rooms:
        for w in _walls_of_room(r):
            key = (w.axis, round(w.c, 9), round(w.lo, 9), round(w.hi, 9))
            walls[key] = w

    # door intervals per wall line (axis, c)
    door_ivals: dict[tuple, list[tuple[float, float]]] = {}
    for d in spec.doors:
        w = door_walls[(d.room_a, d.room_b)]
        key = (w.axis, round(w.c, 9))
        door_ivals.setdefault(key, []).append(
            (d.center - d.width / 2, d.center + d.width / 2))

    for w in walls.values():
        length = w.hi - w.lo
        n = max(1, int(round(spec.wall_density * length * h)))
        u = rng.uniform(w.lo, w.hi, size=n)
        top = rng.random(n) < spec.wall_top_frac
        z = np.where(top, rng.uniform(h - spec.wall_top_band, h, size=n),
                     rng.uniform(0.0, h, size=n))
        jitter = rng.uniform(-t / 2, t / 2, size=n)
        keep = np.ones(n, dtype=bool)
        for lo, hi in door_ivals.get((w.axis, round(w.c, 9)), []):
            keep &= ~((u >= lo) & (u <= hi) & (z < spec.door_top))
        if w.axis == 0:
            pts = np.column_stack([u, w.c + jitter, z])
        else:
            pts = np.column_stack([w.c + jitter, u, z])
        chunks.append(pts[keep])

    points = np.vstack(chunks)
    if spec.noise_sigma > 0:
        points = points + rng.normal(0.0, spec.noise_sigma, size=points.shape)
    cloud = PointCloud(points)

    by_id = {r.id: r for r in spec.rooms}
    gt_rooms = [r.interior(t) for r in spec.rooms]
    gt_bounds = []
    for poly in gt_rooms:
        for i in range(len(poly)):
            gt_bounds.append((poly[i].copy(), poly[(i + 1) % len(poly)].copy()))

    adjacency = []
    for i in range(len(spec.rooms)):
        for j in range(i + 1, len(spec.rooms)):
            if _shared_wall(spec.rooms[i], spec.rooms[j]) is not None:
                adjacency.append((spec.rooms[i].id, spec.rooms[j].id))

    truth_doors = []
    for d in spec.doors:
        w = door_walls[(d.room_a, d.room_b)]
        lo, hi = d.center - d.width / 2, d.center + d.width / 2
        if w.axis == 0:
            p0, p1 = np.array([lo, w.c]), np.array([hi, w.c])
        else:
            p0, p1 = np.array([w.c, lo]), np.array([w.c, hi])
        truth_doors.append((d.room_a, d.room_b, p0, p1))

    truth = SceneTruth(gt=GroundTruth(rooms=gt_rooms, boundaries=gt_bounds),
                       adjacency=adjacency, doors=truth_doors,
                       scene_area_m2=scene_area)
    return cloud, truth


def four_room_spec(seed: int = 0, noise_sigma: float = 0.01) -> SceneSpec:
    """Reference 4-room / 3-door apartment (~80 m^2) used by the test suite."""
    # Deliberately unequal room areas (27 / 18 / 14 / 21 m^2); near-identical
    # areas collapse the interquartile range used by the area screen.
    rooms = [
        RoomSpec("room_a", 0.0, 0.0, 6.0, 4.5),
        RoomSpec("room_b", 6.0, 0.0, 10.0, 4.5),
        RoomSpec("room_c", 0.0, 4.5, 4.0, 8.0),
        RoomSpec("room_d", 4.0, 4.5, 10.0, 8.0),
    ]
    doors = [
        DoorSpec("room_a", "room_b", center=2.0, width=0.9),   # on x = 6 wall
        DoorSpec("room_a", "room_c", center=2.0, width=0.9),   # on y = 4.5 wall
        DoorSpec("room_b", "room_d", center=8.0, width=0.9),   # on y = 4.5 wall
    ]
    return SceneSpec(rooms=rooms, doors=doors, seed=seed, noise_sigma=noise_sigma)
