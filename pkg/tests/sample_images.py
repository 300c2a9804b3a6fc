"""
Constructed images and keys shared by the test modules.
"""

import numpy as np

from app.imagecore import ImageTensor
from app.keyschedule import MasterKey

FIXED_KEY_HEX = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f"


def fixed_key() -> MasterKey:
    return MasterKey.from_hex(FIXED_KEY_HEX)


def random_image(height: int, width: int, channels: int = 3, seed: int = 0) -> ImageTensor:
    rng = np.random.default_rng(seed)
    return ImageTensor(rng.integers(0, 256, size=(height, width, channels), dtype=np.uint8))


def vector_image() -> ImageTensor:
    """The fixed 16x16 RGB image whose ciphertext digest is frozen in tests/data."""
    values = (np.arange(16 * 16 * 3, dtype=np.int64) * 7 + 3) % 256
    return ImageTensor(values.reshape(16, 16, 3).astype(np.uint8))


def dark_image(height: int = 32, width: int = 32, seed: int = 0) -> ImageTensor:
    """Every sample below 100, so each pixel's leading bit is 0."""
    rng = np.random.default_rng(seed)
    return ImageTensor(rng.integers(0, 100, size=(height, width, 3), dtype=np.uint8))


def channel_ramp_image(size: int) -> ImageTensor:
    """R grows down the rows, G across the columns, B is flat: neighbouring edges differ least."""
    rows, cols = np.mgrid[0:size, 0:size]
    data = np.stack([10 * rows, 10 * cols, np.full((size, size), 128)], axis=2)
    return ImageTensor(data.astype(np.uint8))


def constant_image(height: int = 16, width: int = 16, value: int = 77, channels: int = 3) -> ImageTensor:
    return ImageTensor(np.full((height, width, channels), value, dtype=np.uint8))


def gradient_image(height: int = 16, width: int = 16) -> ImageTensor:
    rows, cols = np.mgrid[0:height, 0:width]
    return ImageTensor(((rows + cols) * 255 // max(height + width - 2, 1)).astype(np.uint8))
