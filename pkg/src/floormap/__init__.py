"""Floorplan reconstruction from indoor LiDAR point clouds."""

from .config import PipelineConfig
from .ingest import PointCloud, load_point_cloud, parse_point_cloud, voxel_downsample
from .pipeline import run_pipeline

__all__ = ["PipelineConfig", "PointCloud", "load_point_cloud",
           "parse_point_cloud", "voxel_downsample", "run_pipeline"]

__version__ = "0.1.0"
