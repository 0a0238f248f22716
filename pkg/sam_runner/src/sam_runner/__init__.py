"""Prompted SAM inference over density-map rasters.

Consumes density.png + frame.json + prompts.json, emits mask PNGs and a
manifest.json per the shared mask-directory contract.
"""

from .runner import (DeviceUnavailable, MissingCheckpoint, Predictor,
                     RunnerConfig, run)

__version__ = "0.1.0"

__all__ = ["RunnerConfig", "Predictor", "run", "MissingCheckpoint",
           "DeviceUnavailable", "__version__"]
