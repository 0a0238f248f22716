"""Point cloud ingest: PLY/XYZ parsing, validation, voxel downsampling."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCloud, MalformedHeader, NonFiniteCoordinate, NonPositiveVoxel

FORMATS = ("ply_ascii", "ply_binary_le", "xyz_text")

_PLY_TYPE_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4, "double": 8, "float64": 8,
}
_PLY_FLOAT_FMT = {"float": "f", "float32": "f", "double": "d", "float64": "d"}


@dataclass(frozen=True)
class PointCloud:
    """Immutable 3D point set in meters, with cached axis-aligned bounds."""

    points: np.ndarray  # (N, 3) float64

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise EmptyCloud("point cloud must contain at least one 3D point")
        if not np.isfinite(pts).all():
            raise NonFiniteCoordinate("point cloud contains NaN or Inf coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def bounds(self) -> np.ndarray:
        """(2, 3) array: row 0 is coordinate-wise min, row 1 is max."""
        return np.vstack([self.points.min(axis=0), self.points.max(axis=0)])


def parse_point_cloud(data: bytes, fmt: str) -> PointCloud:
    """Parse a byte stream in the declared format into a PointCloud.

    Point order is preserved from the file.
    """
    if fmt == "xyz_text":
        return _parse_xyz(data)
    if fmt in ("ply_ascii", "ply_binary_le"):
        return _parse_ply(data, fmt)
    raise ValueError(f"unknown format {fmt!r}, expected one of {FORMATS}")


def load_point_cloud(path) -> PointCloud:
    """Load a .xyz or .ply file, sniffing the PLY sub-format from its header."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:3] == b"ply":
        fmt = "ply_binary_le" if b"binary_little_endian" in data[:512] else "ply_ascii"
    else:
        fmt = "xyz_text"
    return parse_point_cloud(data, fmt)


def save_xyz(pc: PointCloud, path) -> None:
    """Write whitespace-separated "x y z" lines (repr-precision floats)."""
    with open(path, "w") as fh:
        for x, y, z in pc.points:
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


def _parse_xyz(data: bytes) -> PointCloud:
    rows = []
    for lineno, raw in enumerate(data.decode("utf-8", errors="replace").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 3:
            raise MalformedHeader(f"line {lineno}: expected at least 3 columns")
        try:
            rows.append([float(parts[0]), float(parts[1]), float(parts[2])])
        except ValueError as exc:
            raise MalformedHeader(f"line {lineno}: {exc}") from exc
    if not rows:
        raise EmptyCloud("no points in xyz stream")
    return PointCloud(np.array(rows, dtype=np.float64))


def _parse_ply_header(data: bytes):
    """Return (vertex_count, vertex_properties, body_offset, declared_format)."""
    end = data.find(b"end_header")
    if data[:3] != b"ply" or end < 0:
        raise MalformedHeader("not a PLY stream (missing magic or end_header)")
    body_offset = data.find(b"\n", end) + 1
    if body_offset == 0:
        raise MalformedHeader("truncated PLY header")
    header = data[:end].decode("ascii", errors="replace")

    declared = None
    vertex_count = None
    props: list[tuple[str, str]] = []  # (type, name) for the vertex element
    in_vertex = False
    for line in header.splitlines()[1:]:
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            declared = tok[1]
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                try:
                    vertex_count = int(tok[2])
                except (IndexError, ValueError) as exc:
                    raise MalformedHeader("bad vertex element declaration") from exc
            elif vertex_count is None:
                # non-vertex elements before vertex would shift the body; unsupported
                raise MalformedHeader("elements before vertex are not supported")
        elif tok[0] == "property" and in_vertex:
            if tok[1] == "list":
                raise MalformedHeader("list properties on vertex are not supported")
            props.append((tok[1], tok[2]))
    if vertex_count is None:
        raise MalformedHeader("PLY header declares no vertex element")
    names = [n for _, n in props]
    if not all(axis in names for axis in ("x", "y", "z")):
        raise MalformedHeader("vertex element lacks x/y/z properties")
    for axis in ("x", "y", "z"):
        ptype = props[names.index(axis)][0]
        if ptype not in _PLY_FLOAT_FMT:
            raise MalformedHeader(f"vertex {axis} must be float/double, got {ptype}")
    return vertex_count, props, body_offset, declared


def _parse_ply(data: bytes, fmt: str) -> PointCloud:
    count, props, offset, declared = _parse_ply_header(data)
    expected = "ascii" if fmt == "ply_ascii" else "binary_little_endian"
    if declared != expected:
        raise MalformedHeader(f"declared format {declared!r} does not match {fmt}")
    if count == 0:
        raise EmptyCloud("PLY declares zero vertices")
    names = [n for _, n in props]
    ix, iy, iz = names.index("x"), names.index("y"), names.index("z")

    if fmt == "ply_ascii":
        lines = [ln for ln in data[offset:].decode("ascii", errors="replace").splitlines()
                 if ln.strip()]
        if len(lines) < count:
            raise MalformedHeader(f"body has {len(lines)} rows, header declares {count}")
        rows = []
        for ln in lines[:count]:
            parts = ln.split()
            if len(parts) < len(props):
                raise MalformedHeader("vertex row has too few columns")
            rows.append([float(parts[ix]), float(parts[iy]), float(parts[iz])])
        pts = np.array(rows, dtype=np.float64)
    else:
        sizes = [_PLY_TYPE_SIZES[t] for t, _ in props]
        stride = sum(sizes)
        body = data[offset:offset + stride * count]
        if len(body) < stride * count:
            raise MalformedHeader("binary body shorter than declared vertex count")
        offs = np.cumsum([0] + sizes[:-1])
        pts = np.empty((count, 3), dtype=np.float64)
        arr = np.frombuffer(body, dtype=np.uint8).reshape(count, stride)
        for col, idx in enumerate((ix, iy, iz)):
            code = _PLY_FLOAT_FMT[props[idx][0]]
            off = int(offs[idx])
            sz = _PLY_TYPE_SIZES[props[idx][0]]
            raw = np.ascontiguousarray(arr[:, off:off + sz])
            pts[:, col] = raw.view(np.dtype("<" + code)).ravel()
    if not np.isfinite(pts).all():
        raise NonFiniteCoordinate("PLY contains NaN or Inf coordinates")
    return PointCloud(pts)


def voxel_downsample(pc: PointCloud, voxel: float) -> PointCloud:
    """One output point per occupied voxel, at the centroid of its points.

    Voxel index of p is (floor(x/voxel), floor(y/voxel), floor(z/voxel)).
    Output order follows sorted voxel index for determinism.
    """
    if voxel <= 0:
        raise NonPositiveVoxel(f"voxel size must be > 0, got {voxel}")
    idx = np.floor(pc.points / voxel).astype(np.int64)
    _, inverse, counts = np.unique(idx, axis=0, return_inverse=True, return_counts=True)
    sums = np.zeros((counts.shape[0], 3), dtype=np.float64)
    np.add.at(sums, inverse, pc.points)
    return PointCloud(sums / counts[:, None])
