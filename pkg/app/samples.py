"""
Deterministic natural-looking scenes for demos and security experiments.

A scene is a vertical sky-to-ground gradient with soft colored blobs, a gentle
texture and mild sensor noise. Neighbouring pixels are strongly correlated and
most samples stay away from the extremes, as in ordinary photographs.
"""

from typing import List

import numpy as np

from app.error_handler import InvalidArgumentError
from app.imagecore import ImageTensor
from app.keyschedule import MasterKey

DEMO_SEED = 2024


def natural_scene(height: int = 256, width: int = 256, seed: int = 0, channels: int = 3) -> ImageTensor:
    if height < 2 or width < 2:
        raise InvalidArgumentError(f"Scene must be at least 2x2, got {height}x{width}")
    if channels not in (1, 3):
        raise InvalidArgumentError(f"Scene channels must be 1 or 3, got {channels}")

    rng = np.random.default_rng(seed)
    scale = float(max(height, width))
    yy, xx = np.mgrid[0:height, 0:width] / scale

    ground = rng.uniform(40, 110, size=3)
    sky = rng.uniform(130, 210, size=3)
    fraction = (yy / (yy.max() or 1.0))[..., np.newaxis]
    scene = sky + (ground - sky) * fraction

    for _ in range(int(rng.integers(4, 8))):
        cy = rng.uniform(0, height / scale)
        cx = rng.uniform(0, width / scale)
        radius = rng.uniform(0.06, 0.22)
        tint = rng.uniform(-70, 70, size=3)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * radius**2))
        scene += tint * bump[..., np.newaxis]

    fy, fx = rng.uniform(2.0, 6.0, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    scene += 8.0 * np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)[..., np.newaxis]
    scene += rng.normal(0.0, 2.0, size=scene.shape)

    data = np.clip(np.rint(scene), 0, 255).astype(np.uint8)
    if channels == 1:
        data = np.clip(np.rint(data.astype(np.float64) @ np.array([0.299, 0.587, 0.114])), 0, 255).astype(np.uint8)
    return ImageTensor(data)


def natural_scenes(count: int, size: int = 64, seed: int = 0) -> List[ImageTensor]:
    return [natural_scene(size, size, seed + i) for i in range(count)]


def demo_key() -> MasterKey:
    """The fixed key used when the demo runs without a key file."""
    return MasterKey.from_seed(DEMO_SEED, "demo")
