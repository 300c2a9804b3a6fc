"""
Ciphertext-only reconstruction attacks.

The leading-bit attack undoes negative-positive inversion using the fact that natural
images are mostly dark in their most significant bit. The minimum-difference attack
treats shuffled blocks as a jigsaw and reassembles them greedily by edge dissimilarity.
Neither attack reads key material: only ciphertext pixels and public sidecar metadata.
"""

import dataclasses
import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from app.codec import EncryptedImage
from app.error_handler import InvalidArgumentError
from app.imagecore import ImageTensor, PatchGrid, from_blocks, to_blocks
from app.keyschedule import Permutation
from app.metrics import SSIM_WINDOW, correlation_between, npcr, ssim, uaci

logger = logging.getLogger(__name__)

LEADING_BIT_MODES = ("block", "pixel")
_UNUSED = np.iinfo(np.int64).max


class AttackKind(Enum):
    LEADING_BIT = "leading-bit"
    MINIMUM_DIFFERENCE = "minimum-difference"
    COMBINED = "combined"

    @classmethod
    def parse(cls, text: str) -> "AttackKind":
        normalized = text.strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == normalized or kind.name.lower().replace("_", "-") == normalized:
                return kind
        raise InvalidArgumentError(f"Unknown attack kind {text!r}, choose one of {[k.value for k in cls]}")


@dataclass(frozen=True)
class AttackReport:
    """Outcome of one attack; metric fields stay None without ground truth."""

    kind: AttackKind
    reconstructed: ImageTensor
    npcr_vs_plain: Optional[float] = None
    uaci_vs_plain: Optional[float] = None
    ssim_vs_plain: Optional[float] = None
    correlation_vs_plain: Optional[float] = None
    wall_time: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "height": self.reconstructed.height,
            "width": self.reconstructed.width,
            "channels": self.reconstructed.channels,
            "npcr_vs_plain": self.npcr_vs_plain,
            "uaci_vs_plain": self.uaci_vs_plain,
            "ssim_vs_plain": self.ssim_vs_plain,
            "correlation_vs_plain": self.correlation_vs_plain,
            "wall_time": self.wall_time,
        }


def leading_bit_attack(enc: EncryptedImage, mode: str = "block") -> ImageTensor:
    """
    Canonicalize negative-positive inversion.

    ``block`` mode flips every sample of a grid block whose fraction of samples >= 128
    exceeds one half. ``pixel`` mode flips each pixel with any channel >= 128.
    """
    if mode not in LEADING_BIT_MODES:
        raise InvalidArgumentError(f"Leading-bit mode must be one of {LEADING_BIT_MODES}, got {mode!r}")
    data = enc.tensor.data
    if mode == "pixel":
        mask = np.any(data >= 128, axis=2)
        out = data.copy()
        out[mask] = 255 - out[mask]
        return ImageTensor(out)

    blocks = to_blocks(data, enc.grid).copy()
    bright = (blocks >= 128).mean(axis=(1, 2, 3)) > 0.5
    blocks[bright] = 255 - blocks[bright]
    logger.debug(f"Leading-bit attack flipped {int(bright.sum())} of {len(bright)} blocks")
    return ImageTensor(from_blocks(blocks, enc.grid))


def edge_costs(blocks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pairwise boundary dissimilarities of (N, h, w, C) blocks.

    ``lr[i, j]`` sums |right column of i - left column of j|; ``tb[i, j]`` sums
    |bottom row of i - top row of j|.
    """
    count = blocks.shape[0]
    data = blocks.astype(np.int64)
    right = data[:, :, -1, :].reshape(count, -1)
    left = data[:, :, 0, :].reshape(count, -1)
    bottom = data[:, -1, :, :].reshape(count, -1)
    top = data[:, 0, :, :].reshape(count, -1)
    lr = np.abs(right[:, np.newaxis, :] - left[np.newaxis, :, :]).sum(axis=2)
    tb = np.abs(bottom[:, np.newaxis, :] - top[np.newaxis, :, :]).sum(axis=2)
    return lr, tb


def _greedy_fill(lr: np.ndarray, tb: np.ndarray, grid: PatchGrid, anchor: int) -> Tuple[np.ndarray, int]:
    count = grid.num_patches
    placement = np.empty(count, dtype=np.int64)
    used = np.zeros(count, dtype=bool)
    placement[0] = anchor
    used[anchor] = True
    total = 0
    for slot in range(1, count):
        row, col = divmod(slot, grid.grid_cols)
        costs = np.zeros(count, dtype=np.int64)
        if col > 0:
            costs += lr[placement[slot - 1]]
        if row > 0:
            costs += tb[placement[slot - grid.grid_cols]]
        costs[used] = _UNUSED
        best = int(np.argmin(costs))
        placement[slot] = best
        used[best] = True
        total += int(costs[best])
    return placement, total


def solve_block_arrangement(
    blocks: np.ndarray, grid: PatchGrid, anchor: Optional[int] = None
) -> Tuple[Permutation, int]:
    """
    Greedy row-major jigsaw placement of ``blocks`` on ``grid``.

    Each empty slot receives the unused block with the smallest summed edge difference to
    its already placed left and upper neighbours; ties go to the lowest block index. With
    ``anchor`` given, that block seeds slot (0, 0). Otherwise every block is tried as the
    seed and the cheapest placement wins, ties going to the lowest anchor.

    Returns:
        (arrangement, cost): slot j holds input block arrangement[j]
    """
    count = grid.num_patches
    if blocks.shape[0] != count:
        raise InvalidArgumentError(f"Grid {grid.label()} needs {count} blocks, got {blocks.shape[0]}")
    if anchor is not None and not 0 <= anchor < count:
        raise InvalidArgumentError(f"Anchor block must be in [0, {count}), got {anchor}")
    if count == 1:
        return Permutation.identity(1), 0

    lr, tb = edge_costs(blocks)
    anchors = [anchor] if anchor is not None else range(count)
    best_placement, best_cost = None, None
    for seed_block in anchors:
        placement, cost = _greedy_fill(lr, tb, grid, seed_block)
        if best_cost is None or cost < best_cost:
            best_placement, best_cost = placement, cost
    return Permutation(best_placement), int(best_cost)


def minimum_difference_attack(enc: EncryptedImage, anchor: Optional[int] = None) -> ImageTensor:
    """Reorder the ciphertext's grid blocks by minimum edge difference; contents are untouched."""
    blocks = to_blocks(enc.tensor.data, enc.grid)
    arrangement, cost = solve_block_arrangement(blocks, enc.grid, anchor)
    logger.debug(f"Minimum-difference attack placed {enc.grid.num_patches} blocks at edge cost {cost}")
    return ImageTensor(from_blocks(arrangement.apply(blocks), enc.grid))


def run_attack(
    enc: EncryptedImage,
    kind: AttackKind,
    ground_truth: Optional[ImageTensor] = None,
    mode: str = "block",
    anchor: Optional[int] = None,
) -> AttackReport:
    """
    Run an attack and score it against ``ground_truth`` when given.

    ``COMBINED`` feeds the leading-bit output into the minimum-difference attack.

    Raises:
        InvalidArgumentError: if ground truth dimensions differ from the ciphertext's
    """
    if ground_truth is not None and ground_truth.shape != enc.tensor.shape:
        raise InvalidArgumentError(
            f"Ground truth of shape {ground_truth.shape} does not match ciphertext {enc.tensor.shape}"
        )

    start = time.perf_counter()
    if kind is AttackKind.LEADING_BIT:
        reconstructed = leading_bit_attack(enc, mode)
    elif kind is AttackKind.MINIMUM_DIFFERENCE:
        reconstructed = minimum_difference_attack(enc, anchor)
    else:
        canonical = dataclasses.replace(enc, tensor=leading_bit_attack(enc, mode))
        reconstructed = minimum_difference_attack(canonical, anchor)
    elapsed = time.perf_counter() - start

    if ground_truth is None:
        return AttackReport(kind=kind, reconstructed=reconstructed, wall_time=elapsed)

    large_enough = min(ground_truth.height, ground_truth.width) >= SSIM_WINDOW
    report = AttackReport(
        kind=kind,
        reconstructed=reconstructed,
        npcr_vs_plain=npcr(ground_truth, reconstructed),
        uaci_vs_plain=uaci(ground_truth, reconstructed),
        ssim_vs_plain=ssim(ground_truth, reconstructed) if large_enough else None,
        correlation_vs_plain=correlation_between(ground_truth, reconstructed).value,
        wall_time=elapsed,
    )
    logger.info(
        f"{kind.value} attack: npcr={report.npcr_vs_plain:.4f} "
        f"ssim={report.ssim_vs_plain if report.ssim_vs_plain is not None else float('nan'):.4f} "
        f"in {elapsed:.3f}s"
    )
    return report
