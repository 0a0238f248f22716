import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from floormap.density import ProjectionFrame


@pytest.fixture
def scene_dir(tmp_path) -> Path:
    """density.png + frame.json + prompts.json for a 60x100 two-room raster.

    A bright one-pixel wall ring plus a dividing wall at column 50; two
    interior prompts, one per room.
    """
    h, w = 60, 100
    gray = np.zeros((h, w), dtype=np.uint8)
    gray[0, :] = gray[-1, :] = 200
    gray[:, 0] = gray[:, -1] = 200
    gray[:, 50] = 200
    Image.fromarray(gray, mode="L").save(tmp_path / "density.png")

    frame = ProjectionFrame(x_min=0.0, y_min=0.0, pixel_size=0.05,
                            width=w, height=h)
    (tmp_path / "frame.json").write_bytes(frame.to_json_bytes())

    prompts = {"tau": 10.0, "min_dist_px": 8.0,
               "points": [{"m": 25, "n": 30, "score": 1.0},
                          {"m": 75, "n": 30, "score": 1.0}]}
    (tmp_path / "prompts.json").write_text(json.dumps(prompts))
    return tmp_path
