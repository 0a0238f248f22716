"""Deterministic predictor stand-in for contract tests."""

import numpy as np


class FakePredictor:
    """Deterministic stand-in: returns the prompt's half of the raster.

    Emits two masks per prompt, the second with a score below the default
    stability cutoff, so filtering is observable.
    """

    def __init__(self):
        self.image = None
        self.calls = []

    def set_image(self, image):
        assert image.ndim == 3 and image.shape[2] == 3
        self.image = image

    def predict(self, point_xy):
        self.calls.append(tuple(point_xy))
        h, w, _ = self.image.shape
        m = int(point_xy[0])
        good = np.zeros((h, w), dtype=bool)
        if m < w // 2:
            good[1:-1, 1:50] = True
        else:
            good[1:-1, 51:-1] = True
        bad = np.zeros((h, w), dtype=bool)
        bad[0:2, 0:2] = True
        return np.stack([good, bad]), np.array([0.95, 0.30])
