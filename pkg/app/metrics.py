"""
Security metrics for cipher images.

NPCR and UACI compare two images; adjacent-pixel correlation and Shannon entropy
describe one image; SSIM measures structural similarity on the luma channel.
"""

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from app.codec import CipherConfig, encrypt
from app.error_handler import InvalidArgumentError
from app.imagecore import ImageTensor
from app.keyschedule import KEY_SIZE, MasterKey

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 8
SSIM_STRIDE = 4
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2

METRICS_COLUMNS = ["path_a", "path_b", "npcr", "uaci", "corr_h", "corr_v", "entropy_a", "entropy_b", "ssim"]

HORIZONTAL = "horizontal"
VERTICAL = "vertical"


@dataclass(frozen=True)
class Correlation:
    """Pearson coefficient; ``degenerate`` marks a zero-variance input reported as 0."""

    value: float
    degenerate: bool = False

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class SecurityMetrics:
    npcr: float
    uaci: float
    corr_h: float
    corr_v: float
    entropy: float
    ssim: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _check_pair(a: ImageTensor, b: ImageTensor) -> None:
    if a.shape != b.shape:
        raise InvalidArgumentError(f"Images must share dimensions, got {a.shape} and {b.shape}")


def npcr(a: ImageTensor, b: ImageTensor) -> float:
    """Fraction of pixel positions where any channel differs."""
    _check_pair(a, b)
    return float(np.any(a.data != b.data, axis=2).mean())


def uaci(a: ImageTensor, b: ImageTensor) -> float:
    """Mean absolute sample difference divided by 255."""
    _check_pair(a, b)
    diff = np.abs(a.data.astype(np.int16) - b.data.astype(np.int16))
    return float(diff.mean() / 255.0)


def _pearson(x: np.ndarray, y: np.ndarray) -> Correlation:
    x = x.astype(np.float64).ravel()
    y = y.astype(np.float64).ravel()
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0:
        return Correlation(0.0, degenerate=True)
    return Correlation(float(np.clip((dx * dy).sum() / denom, -1.0, 1.0)))


def adjacent_correlation(
    img: ImageTensor, direction: str = HORIZONTAL, samples: int = 5000, seed: int = 0
) -> Correlation:
    """
    Correlation of the first channel over ``samples`` seeded adjacent pixel pairs.

    Pairs are drawn with replacement. A constant image yields 0 with the degenerate flag.
    """
    if direction not in (HORIZONTAL, VERTICAL):
        raise InvalidArgumentError(f"Direction must be {HORIZONTAL!r} or {VERTICAL!r}, got {direction!r}")
    if samples < 2:
        raise InvalidArgumentError(f"Need at least 2 samples, got {samples}")
    plane = img.data[:, :, 0]
    height, width = plane.shape
    span_h, span_w = (height, width - 1) if direction == HORIZONTAL else (height - 1, width)
    if span_h < 1 or span_w < 1:
        raise InvalidArgumentError(f"Image of {height}x{width} has no {direction} neighbours")

    rng = np.random.default_rng(seed)
    rows = rng.integers(0, span_h, size=samples)
    cols = rng.integers(0, span_w, size=samples)
    first = plane[rows, cols]
    second = plane[rows, cols + 1] if direction == HORIZONTAL else plane[rows + 1, cols]
    return _pearson(first, second)


def correlation_between(a: ImageTensor, b: ImageTensor) -> Correlation:
    """Pearson correlation over all samples of two images."""
    _check_pair(a, b)
    return _pearson(a.data, b.data)


def shannon_entropy(img: ImageTensor) -> float:
    """Entropy in bits of the 256-bin histogram, all channels pooled."""
    counts = np.bincount(img.data.ravel(), minlength=256)
    p = counts[counts > 0] / counts.sum()
    return float(max(0.0, -(p * np.log2(p)).sum()))


def luma(img: ImageTensor) -> np.ndarray:
    if img.channels == 1:
        return img.data[:, :, 0].astype(np.float64)
    return img.data.astype(np.float64) @ LUMA_WEIGHTS


def ssim(a: ImageTensor, b: ImageTensor) -> float:
    """
    Mean SSIM over 8x8 luma windows taken every 4 pixels.

    Raises:
        InvalidArgumentError: on differing dimensions or images smaller than one window
    """
    _check_pair(a, b)
    if min(a.height, a.width) < SSIM_WINDOW:
        raise InvalidArgumentError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.height}x{a.width}")

    window = (SSIM_WINDOW, SSIM_WINDOW)
    wa = sliding_window_view(luma(a), window)[::SSIM_STRIDE, ::SSIM_STRIDE]
    wb = sliding_window_view(luma(b), window)[::SSIM_STRIDE, ::SSIM_STRIDE]

    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = wa.var(axis=(-2, -1))
    var_b = wb.var(axis=(-2, -1))
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b

    numerator = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    denominator = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float((numerator / denominator).mean())


def compare_images(a: ImageTensor, b: ImageTensor, samples: int = 5000, seed: int = 0) -> SecurityMetrics:
    """
    Metrics between a reference ``a`` and a candidate ``b``.

    Correlation and entropy describe ``b``; ssim is None for images under one window.
    """
    _check_pair(a, b)
    small = min(a.height, a.width) < SSIM_WINDOW
    return SecurityMetrics(
        npcr=npcr(a, b),
        uaci=uaci(a, b),
        corr_h=adjacent_correlation(b, HORIZONTAL, samples, seed).value if b.width > 1 else 0.0,
        corr_v=adjacent_correlation(b, VERTICAL, samples, seed).value if b.height > 1 else 0.0,
        entropy=shannon_entropy(b),
        ssim=None if small else ssim(a, b),
    )


def key_sensitivity(
    img: ImageTensor, key: MasterKey, config: CipherConfig, flip_bits: int = 1, seed: int = 0
) -> SecurityMetrics:
    """
    Encrypt under ``key`` and under ``key`` with ``flip_bits`` seeded bits inverted.

    Returns the metrics between the two ciphertexts; ``flip_bits=0`` is the identical-key control.
    """
    if not 0 <= flip_bits <= KEY_SIZE * 8:
        raise InvalidArgumentError(f"flip_bits must be in [0, {KEY_SIZE * 8}], got {flip_bits}")
    rng = np.random.default_rng(seed)
    flipped = key
    for bit in rng.choice(KEY_SIZE * 8, size=flip_bits, replace=False):
        flipped = flipped.flip_bit(int(bit))

    first = encrypt(img, key, config, record_digest=False)
    second = encrypt(img, flipped, config, record_digest=False)
    result = compare_images(first.tensor, second.tensor, seed=seed)
    logger.info(f"Key sensitivity ({flip_bits} bit(s) flipped): npcr={result.npcr:.4f} uaci={result.uaci:.4f}")
    return result


def metrics_row(
    path_a: Union[str, Path], path_b: Union[str, Path], a: ImageTensor, b: ImageTensor, samples: int = 5000, seed: int = 0
) -> Dict[str, Any]:
    """One CSV row comparing two images; correlations describe ``b``."""
    result = compare_images(a, b, samples, seed)
    return {
        "path_a": str(path_a),
        "path_b": str(path_b),
        "npcr": result.npcr,
        "uaci": result.uaci,
        "corr_h": result.corr_h,
        "corr_v": result.corr_v,
        "entropy_a": shannon_entropy(a),
        "entropy_b": result.entropy,
        "ssim": result.ssim,
    }


def write_metrics_csv(rows: List[Dict[str, Any]], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=METRICS_COLUMNS).to_csv(path, index=False)
    logger.info(f"Wrote {len(rows)} metrics row(s) to {path}")
    return path
