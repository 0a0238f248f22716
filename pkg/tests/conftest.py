"""Shared fixtures and small builders used across the test modules."""

import numpy as np
import pytest

from floormap.density import ProjectionFrame
from floormap.ingest import PointCloud
from floormap.segmentation import MaskImage


def make_cloud(points) -> PointCloud:
    return PointCloud(np.asarray(points, dtype=np.float64))


def random_cloud(rng: np.random.Generator, n: int, lo=-5.0, hi=5.0) -> PointCloud:
    return PointCloud(rng.uniform(lo, hi, size=(n, 3)))


def mask_from_array(mask_id: str, arr) -> MaskImage:
    return MaskImage(id=mask_id, data=np.asarray(arr, dtype=bool))


def rect_mask(mask_id: str, shape, n0, n1, m0, m1) -> MaskImage:
    """Axis-aligned rectangle mask: rows [n0, n1), cols [m0, m1)."""
    data = np.zeros(shape, dtype=bool)
    data[n0:n1, m0:m1] = True
    return MaskImage(id=mask_id, data=data)


@pytest.fixture
def unit_frame() -> ProjectionFrame:
    """100 x 100 px frame over [0, 5) x [0, 5) meters (s = 0.05)."""
    return ProjectionFrame(x_min=0.0, y_min=0.0, pixel_size=0.05,
                           width=100, height=100)
