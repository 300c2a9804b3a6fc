"""
8-bit image tensors, patch grids and image file I/O.

Images are height x width x channels uint8 arrays in row-major, channel-interleaved
order. Grids never pad: dimensions that are not divisible by the grid are rejected
and callers may center-crop explicitly.
"""

import hashlib
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from app.error_handler import DataFormatError, DimensionMismatchError, InvalidArgumentError

logger = logging.getLogger(__name__)

_GRID_RE = re.compile(r"^\s*(\d+)\s*[xX×]\s*(\d+)\s*$")


@dataclass(frozen=True)
class ImageTensor:
    """Immutable 8-bit image with 1 or 3 channels."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, np.newaxis]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise InvalidArgumentError(f"Image must be HxW, HxWx1 or HxWx3, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidArgumentError(f"Image must have positive dimensions, got {data.shape}")
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > 255):
                raise InvalidArgumentError("Image samples must lie in [0, 255]")
            data = data.astype(np.uint8)
        data = np.array(data, dtype=np.uint8, copy=True, order="C")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    @property
    def pixel_count(self) -> int:
        return self.height * self.width

    def to_bytes(self) -> bytes:
        return self.data.tobytes(order="C")

    def digest(self) -> str:
        """SHA-256 over the raw row-major bytes."""
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ImageTensor) and np.array_equal(self.data, other.data)

    def __hash__(self) -> int:
        return hash((self.shape, self.digest()))


@dataclass(frozen=True)
class PatchGrid:
    """A grid_rows x grid_cols tiling of an image into patch_h x patch_w blocks."""

    grid_rows: int
    grid_cols: int
    patch_h: int
    patch_w: int

    def __post_init__(self):
        if min(self.grid_rows, self.grid_cols, self.patch_h, self.patch_w) < 1:
            raise InvalidArgumentError(f"Grid dimensions must be positive: {self}")

    @property
    def num_patches(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def image_height(self) -> int:
        return self.grid_rows * self.patch_h

    @property
    def image_width(self) -> int:
        return self.grid_cols * self.patch_w

    @property
    def patch_pixels(self) -> int:
        return self.patch_h * self.patch_w

    @classmethod
    def for_image(cls, img: ImageTensor, grid_rows: int, grid_cols: int) -> "PatchGrid":
        """
        Resolve the patch size of a rows x cols grid over ``img``.

        Raises:
            DimensionMismatchError: if the grid does not divide the image exactly
        """
        if grid_rows < 1 or grid_cols < 1:
            raise InvalidArgumentError(f"Grid must be positive, got {grid_rows}x{grid_cols}")
        if img.height % grid_rows or img.width % grid_cols:
            raise DimensionMismatchError(
                f"Image of {img.height}x{img.width} is not divisible by a {grid_rows}x{grid_cols} grid",
                context={"image": f"{img.height}x{img.width}", "grid": f"{grid_rows}x{grid_cols}"},
            )
        return cls(grid_rows, grid_cols, img.height // grid_rows, img.width // grid_cols)

    def check_image(self, img: ImageTensor) -> None:
        if (img.height, img.width) != (self.image_height, self.image_width):
            raise DimensionMismatchError(
                f"Grid {self.grid_rows}x{self.grid_cols} of {self.patch_h}x{self.patch_w} patches "
                f"needs a {self.image_height}x{self.image_width} image, got {img.height}x{img.width}"
            )

    def label(self) -> str:
        return f"{self.grid_rows}x{self.grid_cols}"


@dataclass(frozen=True)
class Patch:
    """One block of a grid; ``index`` is its row-major ordinal."""

    index: int
    data: np.ndarray

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)


def parse_grid(text: str) -> Tuple[int, int]:
    """Parse ``"8x8"`` into (8, 8)."""
    match = _GRID_RE.match(str(text))
    if not match:
        raise InvalidArgumentError(f"Grid must look like ROWSxCOLS (e.g. 8x8), got {text!r}")
    rows, cols = int(match.group(1)), int(match.group(2))
    if rows < 1 or cols < 1:
        raise InvalidArgumentError(f"Grid must be positive, got {text!r}")
    return rows, cols


def to_blocks(data: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """View an HxWxC array as (num_patches, patch_h, patch_w, C) in row-major grid order."""
    channels = data.shape[2]
    return (
        data.reshape(grid.grid_rows, grid.patch_h, grid.grid_cols, grid.patch_w, channels)
        .transpose(0, 2, 1, 3, 4)
        .reshape(grid.num_patches, grid.patch_h, grid.patch_w, channels)
    )


def from_blocks(blocks: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Inverse of :func:`to_blocks`."""
    channels = blocks.shape[-1]
    return (
        blocks.reshape(grid.grid_rows, grid.grid_cols, grid.patch_h, grid.patch_w, channels)
        .transpose(0, 2, 1, 3, 4)
        .reshape(grid.image_height, grid.image_width, channels)
    )


def split_into_patches(img: ImageTensor, grid: PatchGrid) -> List[Patch]:
    """
    Split an image into grid_rows x grid_cols patches in row-major order.

    Raises:
        DimensionMismatchError: if the grid does not tile the image exactly
    """
    grid.check_image(img)
    blocks = to_blocks(img.data, grid)
    return [Patch(index=i, data=np.array(blocks[i])) for i in range(grid.num_patches)]


def reassemble(patches: Sequence[Patch], grid: PatchGrid) -> ImageTensor:
    """
    Place patches into grid slots in list order (slot i receives patches[i]).

    Raises:
        DimensionMismatchError: on a wrong patch count or non-uniform patch shapes
    """
    if len(patches) != grid.num_patches:
        raise DimensionMismatchError(f"Grid {grid.label()} needs {grid.num_patches} patches, got {len(patches)}")
    shapes = {p.data.shape for p in patches}
    if len(shapes) != 1:
        raise DimensionMismatchError(f"Patches must share one shape, got {sorted(shapes)}")
    shape = shapes.pop()
    if len(shape) != 3 or shape[:2] != (grid.patch_h, grid.patch_w):
        raise DimensionMismatchError(f"Patch shape {shape} does not match grid patch {grid.patch_h}x{grid.patch_w}")
    blocks = np.stack([p.data for p in patches])
    return ImageTensor(from_blocks(blocks, grid))


def center_crop(img: ImageTensor, grid_rows: int, grid_cols: int) -> ImageTensor:
    """Crop to the largest centered region whose size is divisible by the grid."""
    height = img.height - img.height % grid_rows
    width = img.width - img.width % grid_cols
    if height == 0 or width == 0:
        raise DimensionMismatchError(f"Image of {img.height}x{img.width} is smaller than a {grid_rows}x{grid_cols} grid")
    top = (img.height - height) // 2
    left = (img.width - width) // 2
    if (height, width) != (img.height, img.width):
        logger.debug(f"Center-cropped {img.height}x{img.width} to {height}x{width}")
    return ImageTensor(img.data[top : top + height, left : left + width])


def read_image(path: Union[str, Path]) -> ImageTensor:
    """
    Read an 8-bit PNG (RGB or grayscale) or a PPM/PGM fixture.

    Palette and alpha images are converted to RGB; 16-bit and other modes are rejected.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "L":
                array = np.asarray(im, dtype=np.uint8)
            elif im.mode == "RGB":
                array = np.asarray(im, dtype=np.uint8)
            elif im.mode in ("P", "RGBA", "LA", "1"):
                array = np.asarray(im.convert("RGB" if im.mode != "1" else "L"), dtype=np.uint8)
            else:
                raise DataFormatError(
                    f"Unsupported image mode {im.mode!r} in {path}; only 8-bit RGB or grayscale images are supported",
                    context={"file_path": str(path)},
                )
    except UnidentifiedImageError as e:
        raise DataFormatError(f"Cannot identify image file {path}", original_error=e, context={"file_path": str(path)})
    return ImageTensor(array)


def write_image(img: ImageTensor, path: Union[str, Path]) -> Path:
    """Write an image losslessly (PNG unless the suffix says PPM/PGM)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if img.channels == 1:
        pil = Image.fromarray(img.data[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(img.data, mode="RGB")
    fmt = "PPM" if path.suffix.lower() in (".ppm", ".pgm") else "PNG"
    pil.save(path, format=fmt)
    return path


def to_rgb(img: ImageTensor) -> ImageTensor:
    if img.channels == 3:
        return img
    return ImageTensor(np.repeat(img.data, 3, axis=2))


def compose_side_by_side(panels: Sequence[ImageTensor], gutter: int = 4, fill: int = 255) -> ImageTensor:
    """
    Lay panels out left to right with ``gutter`` white columns between them.

    Panels must share a height; grayscale panels are promoted to RGB when mixed with color.
    """
    if not panels:
        raise InvalidArgumentError("Need at least one panel to compose")
    heights = {p.height for p in panels}
    if len(heights) != 1:
        raise DimensionMismatchError(f"Panels must share one height, got {sorted(heights)}")
    color = any(p.channels == 3 for p in panels)
    arrays = [(to_rgb(p) if color else p).data for p in panels]
    height, channels = arrays[0].shape[0], arrays[0].shape[2]
    spacer = np.full((height, gutter, channels), fill, dtype=np.uint8)
    pieces: List[np.ndarray] = []
    for i, array in enumerate(arrays):
        if i:
            pieces.append(spacer)
        pieces.append(array)
    return ImageTensor(np.concatenate(pieces, axis=1))
