"""
Block-pixel image cipher and its exact inverse.

Encryption runs the enabled stages in a fixed order:

1. split the image into grid blocks
2. scramble the pixels of every block (stream index = block ordinal)
3. shuffle block positions (one stream, index 0)
4. reassemble
5. negative-positive inversion, one key bit per pixel in row-major order
6. channel shuffle, one 3-permutation per pixel in row-major order

Decryption applies the inverse stages in reverse order. Ciphertexts travel as a
lossless PNG plus a JSON sidecar holding the public parameters.
"""

import dataclasses
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.error_handler import DataFormatError, DimensionMismatchError, InvalidArgumentError, WrongKeyError
from app.imagecore import (
    ImageTensor,
    Patch,
    PatchGrid,
    read_image,
    reassemble,
    split_into_patches,
    write_image,
)
from app.keyschedule import (
    MasterKey,
    Permutation,
    StageTag,
    derive_stream,
    gen_bits,
    gen_channel_perms,
    gen_permutation,
)
from app.utils import load_json, save_json, validate_data_schema

logger = logging.getLogger(__name__)

SCHEME_VERSION = 1
CIPHER_SUFFIX = ".enc.png"
SIDECAR_SUFFIX = ".enc.json"

STAGE_FLAGS = ("pixel_scramble", "block_shuffle", "negpos", "channel_shuffle")

# preset name -> (grid override, stage flags in STAGE_FLAGS order)
PRESETS: Dict[str, Tuple[Optional[Tuple[int, int]], Tuple[bool, bool, bool, bool]]] = {
    "block-pixel": (None, (True, True, True, True)),
    "pixel-shuffle": ((1, 1), (True, False, False, False)),
    "none": (None, (False, False, False, False)),
}

SIDECAR_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": [
        "scheme_version",
        "grid_rows",
        "grid_cols",
        "patch_h",
        "patch_w",
        *STAGE_FLAGS,
        "key_id",
    ],
    "properties": {
        "scheme_version": {"const": SCHEME_VERSION},
        "grid_rows": {"type": "integer", "minimum": 1},
        "grid_cols": {"type": "integer", "minimum": 1},
        "patch_h": {"type": "integer", "minimum": 1},
        "patch_w": {"type": "integer", "minimum": 1},
        **{flag: {"type": "boolean"} for flag in STAGE_FLAGS},
        "key_id": {"type": "string", "pattern": "^[0-9a-f]{8}$"},
        "source_digest": {"type": ["string", "null"], "pattern": "^[0-9a-f]{64}$"},
        "notices": {"type": "array", "items": {"type": "string"}},
    },
}


@dataclass(frozen=True)
class CipherConfig:
    """Public cipher parameters: the block grid and which stages run."""

    grid_rows: int = 8
    grid_cols: int = 8
    enable_pixel_scramble: bool = True
    enable_block_shuffle: bool = True
    enable_negpos: bool = True
    enable_channel_shuffle: bool = True
    scheme_version: int = SCHEME_VERSION

    def __post_init__(self):
        if self.scheme_version != SCHEME_VERSION:
            raise InvalidArgumentError(f"Unsupported scheme_version {self.scheme_version}, expected {SCHEME_VERSION}")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise InvalidArgumentError(f"Grid must be positive, got {self.grid_rows}x{self.grid_cols}")
        if not any(self.stage_flags().values()):
            logger.warning("All cipher stages are disabled; ciphertexts will equal their plaintexts")

    @classmethod
    def preset(cls, name: str, grid_rows: int = 8, grid_cols: int = 8) -> "CipherConfig":
        """
        Build a named configuration.

        ``block-pixel`` runs all four stages, ``pixel-shuffle`` scrambles the whole image
        as one block and ``none`` disables everything.
        """
        if name not in PRESETS:
            raise InvalidArgumentError(f"Unknown preset {name!r}, choose one of {sorted(PRESETS)}")
        grid, flags = PRESETS[name]
        if grid is not None:
            grid_rows, grid_cols = grid
        return cls(grid_rows, grid_cols, *flags)

    @classmethod
    def from_flags(cls, grid_rows: int, grid_cols: int, flags: Dict[str, bool]) -> "CipherConfig":
        missing = [flag for flag in STAGE_FLAGS if flag not in flags]
        if missing:
            raise InvalidArgumentError(f"Missing stage flags: {missing}")
        return cls(grid_rows, grid_cols, *(bool(flags[flag]) for flag in STAGE_FLAGS))

    def with_stages(self, **flags: bool) -> "CipherConfig":
        unknown = sorted(set(flags) - set(STAGE_FLAGS))
        if unknown:
            raise InvalidArgumentError(f"Unknown stage flags: {unknown}")
        return dataclasses.replace(self, **{f"enable_{name}": value for name, value in flags.items()})

    def stage_flags(self) -> Dict[str, bool]:
        return {
            "pixel_scramble": self.enable_pixel_scramble,
            "block_shuffle": self.enable_block_shuffle,
            "negpos": self.enable_negpos,
            "channel_shuffle": self.enable_channel_shuffle,
        }

    def grid_for(self, img: ImageTensor) -> PatchGrid:
        return PatchGrid.for_image(img, self.grid_rows, self.grid_cols)

    def describe(self) -> str:
        enabled = [name for name, on in self.stage_flags().items() if on] or ["none"]
        return f"grid {self.grid_rows}x{self.grid_cols}, stages {'+'.join(enabled)}"


@dataclass(frozen=True)
class EncryptedImage:
    """Ciphertext pixels plus the public metadata needed to decrypt them."""

    tensor: ImageTensor
    config: CipherConfig
    grid: PatchGrid
    key_id: str
    source_digest: Optional[str] = None
    notices: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.grid.check_image(self.tensor)
        if (self.grid.grid_rows, self.grid.grid_cols) != (self.config.grid_rows, self.config.grid_cols):
            raise DimensionMismatchError(
                f"Grid {self.grid.label()} disagrees with the configured {self.config.grid_rows}x{self.config.grid_cols}"
            )
        object.__setattr__(self, "notices", tuple(self.notices))

    def to_sidecar(self) -> Dict[str, Any]:
        return {
            "scheme_version": self.config.scheme_version,
            "grid_rows": self.grid.grid_rows,
            "grid_cols": self.grid.grid_cols,
            "patch_h": self.grid.patch_h,
            "patch_w": self.grid.patch_w,
            **self.config.stage_flags(),
            "key_id": self.key_id,
            "source_digest": self.source_digest,
            "notices": list(self.notices),
        }

    @classmethod
    def from_sidecar(cls, tensor: ImageTensor, sidecar: Dict[str, Any], source: Optional[str] = None) -> "EncryptedImage":
        validate_data_schema(sidecar, SIDECAR_SCHEMA, source)
        config = CipherConfig.from_flags(sidecar["grid_rows"], sidecar["grid_cols"], sidecar)
        grid = PatchGrid(sidecar["grid_rows"], sidecar["grid_cols"], sidecar["patch_h"], sidecar["patch_w"])
        return cls(
            tensor=tensor,
            config=config,
            grid=grid,
            key_id=sidecar["key_id"],
            source_digest=sidecar.get("source_digest"),
            notices=tuple(sidecar.get("notices", [])),
        )


def _check_channel_perms(img: ImageTensor, perms: Union[np.ndarray, Sequence[Permutation]]) -> np.ndarray:
    if not isinstance(perms, np.ndarray):
        perms = np.stack([p.mapping for p in perms]) if len(perms) else np.zeros((0, img.channels), dtype=np.int64)
    if perms.shape != (img.pixel_count, img.channels):
        raise DimensionMismatchError(
            f"Need one {img.channels}-channel permutation per pixel ({img.pixel_count}), got array of shape {perms.shape}"
        )
    return perms.astype(np.int64, copy=False)


def scramble_patch(patch: Patch, perm: Permutation) -> Patch:
    """Reorder a block's pixels so output position j holds input pixel perm[j]; channels move together."""
    height, width, channels = patch.data.shape
    if len(perm) != height * width:
        raise DimensionMismatchError(f"Permutation of length {len(perm)} cannot scramble a {height}x{width} patch")
    pixels = patch.data.reshape(height * width, channels)
    return Patch(index=patch.index, data=perm.apply(pixels).reshape(height, width, channels))


def unscramble_patch(patch: Patch, perm: Permutation) -> Patch:
    return scramble_patch(patch, perm.inverse())


def shuffle_blocks(patches: Sequence[Patch], perm: Permutation) -> List[Patch]:
    """Output slot j holds input patch perm[j]; patch contents are untouched."""
    if len(perm) != len(patches):
        raise DimensionMismatchError(f"Permutation of length {len(perm)} cannot shuffle {len(patches)} blocks")
    return list(perm.apply(list(patches)))


def unshuffle_blocks(patches: Sequence[Patch], perm: Permutation) -> List[Patch]:
    return shuffle_blocks(patches, perm.inverse())


def negpos_transform(img: ImageTensor, bits: np.ndarray) -> ImageTensor:
    """
    Replace every sample x of a pixel whose bit is 1 with 255 - x.

    The transform is its own inverse under the same bits.
    """
    bits = np.asarray(bits)
    if bits.shape != (img.pixel_count,):
        raise DimensionMismatchError(f"Need {img.pixel_count} negpos bits, got {bits.shape[0] if bits.ndim else 0}")
    mask = bits.reshape(img.height, img.width).astype(bool)
    data = img.data.copy()
    data[mask] = 255 - data[mask]
    return ImageTensor(data)


def channel_shuffle(img: ImageTensor, perms: Union[np.ndarray, Sequence[Permutation]]) -> ImageTensor:
    """
    For each pixel, output channel j takes input channel perm[j].

    Single-channel images pass through unchanged.
    """
    if img.channels == 1:
        return img
    perms = _check_channel_perms(img, perms)
    pixels = img.data.reshape(img.pixel_count, img.channels)
    shuffled = np.take_along_axis(pixels, perms, axis=1)
    return ImageTensor(shuffled.reshape(img.shape))


def channel_unshuffle(img: ImageTensor, perms: Union[np.ndarray, Sequence[Permutation]]) -> ImageTensor:
    if img.channels == 1:
        return img
    perms = _check_channel_perms(img, perms)
    return channel_shuffle(img, np.argsort(perms, axis=1, kind="stable"))


def scramble_permutations(key: MasterKey, grid: PatchGrid) -> List[Permutation]:
    """One pixel permutation per block, each from its own stream."""
    return [
        gen_permutation(derive_stream(key, StageTag.PIXEL_SCRAMBLE, index), grid.patch_pixels)
        for index in range(grid.num_patches)
    ]


def block_permutation(key: MasterKey, grid: PatchGrid) -> Permutation:
    return gen_permutation(derive_stream(key, StageTag.BLOCK_SHUFFLE, 0), grid.num_patches)


def negpos_bits(key: MasterKey, pixel_count: int) -> np.ndarray:
    return gen_bits(derive_stream(key, StageTag.NEGPOS, 0), pixel_count)


def channel_permutations(key: MasterKey, pixel_count: int, channels: int = 3) -> np.ndarray:
    return gen_channel_perms(derive_stream(key, StageTag.CHANNEL_SHUFFLE, 0), pixel_count, channels)


def encrypt(img: ImageTensor, key: MasterKey, config: CipherConfig, record_digest: bool = True) -> EncryptedImage:
    """
    Encrypt an image under ``key``.

    The result is a pure function of (pixels, key bytes, config). A grayscale image with
    channel shuffle enabled skips that stage and records a notice.

    Raises:
        DimensionMismatchError: if the grid does not divide the image
    """
    grid = config.grid_for(img)
    notices: List[str] = []

    patches = split_into_patches(img, grid)
    if config.enable_pixel_scramble:
        perms = scramble_permutations(key, grid)
        patches = [scramble_patch(patch, perms[i]) for i, patch in enumerate(patches)]
    if config.enable_block_shuffle:
        patches = shuffle_blocks(patches, block_permutation(key, grid))
    cipher = reassemble(patches, grid)

    if config.enable_negpos:
        cipher = negpos_transform(cipher, negpos_bits(key, cipher.pixel_count))
    if config.enable_channel_shuffle:
        if cipher.channels == 3:
            cipher = channel_shuffle(cipher, channel_permutations(key, cipher.pixel_count))
        else:
            notices.append("channel_shuffle skipped: single-channel image")
            logger.info("Channel shuffle skipped for a single-channel image")

    logger.debug(f"Encrypted {img.height}x{img.width}x{img.channels} image with key {key.key_id} ({config.describe()})")
    return EncryptedImage(
        tensor=cipher,
        config=config,
        grid=grid,
        key_id=key.key_id,
        source_digest=img.digest() if record_digest else None,
        notices=tuple(notices),
    )


def decrypt(enc: EncryptedImage, key: MasterKey, force: bool = False) -> ImageTensor:
    """
    Invert :func:`encrypt`.

    Args:
        enc: Ciphertext with its metadata
        key: Decryption key
        force: Decrypt even when the key fingerprint differs (attack and sensitivity experiments)

    Raises:
        WrongKeyError: if ``key.key_id`` differs from ``enc.key_id`` and ``force`` is False
    """
    if key.key_id != enc.key_id:
        if not force:
            raise WrongKeyError(
                f"Key {key.key_id} does not match the ciphertext key_id {enc.key_id}",
                solutions=[f"Use the key file {enc.key_id}.key", "Pass --force for attack experiments"],
                context={"expected_key_id": enc.key_id, "given_key_id": key.key_id},
            )
        logger.warning(f"Forcing decryption with key {key.key_id}; ciphertext was made with {enc.key_id}")

    config, grid = enc.config, enc.grid
    plain = enc.tensor
    if config.enable_channel_shuffle and plain.channels == 3:
        plain = channel_unshuffle(plain, channel_permutations(key, plain.pixel_count))
    if config.enable_negpos:
        plain = negpos_transform(plain, negpos_bits(key, plain.pixel_count))

    patches = split_into_patches(plain, grid)
    if config.enable_block_shuffle:
        patches = unshuffle_blocks(patches, block_permutation(key, grid))
    if config.enable_pixel_scramble:
        perms = scramble_permutations(key, grid)
        patches = [unscramble_patch(patch, perms[i]) for i, patch in enumerate(patches)]
    plain = reassemble(patches, grid)

    if enc.source_digest and plain.digest() != enc.source_digest:
        logger.warning(f"Integrity check failed: decrypted digest differs from the recorded source digest ({enc.key_id})")
    return plain


def cipher_paths(source: Union[str, Path], out_dir: Optional[Union[str, Path]] = None) -> Tuple[Path, Path]:
    """``<stem>.enc.png`` and ``<stem>.enc.json`` for a plaintext path, next to it or in ``out_dir``."""
    source = Path(source)
    folder = Path(out_dir) if out_dir is not None else source.parent
    return folder / f"{source.stem}{CIPHER_SUFFIX}", folder / f"{source.stem}{SIDECAR_SUFFIX}"


def cipher_targets(sources: Sequence[Union[str, Path]], out_dir: Optional[Union[str, Path]] = None) -> List[Path]:
    """
    Ciphertext paths for a batch of plaintexts, one distinct path per source.

    Sources whose ``<stem>.enc.png`` would land on the same file go into a subdirectory
    named after their parent folder (``cats/img1.enc.png``); any that still collide get
    their batch index as a prefix.
    """
    sources = [Path(s) for s in sources]
    targets = [cipher_paths(s, out_dir)[0] for s in sources]
    clashes = Counter(targets)
    targets = [
        cipher_paths(s, t.parent / s.parent.name)[0] if clashes[t] > 1 and s.parent.name else t
        for s, t in zip(sources, targets)
    ]
    clashes = Counter(targets)
    return [
        t.with_name(f"{i:05d}-{t.name}") if clashes[t] > 1 else t for i, t in enumerate(targets)
    ]


def sidecar_path(cipher_path: Union[str, Path]) -> Path:
    cipher_path = Path(cipher_path)
    name = cipher_path.name
    if name.endswith(CIPHER_SUFFIX):
        return cipher_path.with_name(name[: -len(CIPHER_SUFFIX)] + SIDECAR_SUFFIX)
    return cipher_path.with_suffix(SIDECAR_SUFFIX)


def cipher_stem(cipher_path: Union[str, Path]) -> str:
    name = Path(cipher_path).name
    return name[: -len(CIPHER_SUFFIX)] if name.endswith(CIPHER_SUFFIX) else Path(name).stem


def save_encrypted(enc: EncryptedImage, cipher_path: Union[str, Path]) -> Tuple[Path, Path]:
    """Write the ciphertext PNG and its JSON sidecar."""
    cipher_path = write_image(enc.tensor, cipher_path)
    meta_path = save_json(enc.to_sidecar(), sidecar_path(cipher_path))
    return cipher_path, meta_path


def load_encrypted(cipher_path: Union[str, Path]) -> EncryptedImage:
    """
    Read a ciphertext PNG and its sidecar.

    Raises:
        DataFormatError: if the sidecar is missing or fails schema validation
    """
    cipher_path = Path(cipher_path)
    meta_path = sidecar_path(cipher_path)
    if not meta_path.exists():
        raise DataFormatError(
            f"Missing sidecar {meta_path.name} for {cipher_path.name}",
            solutions=["Keep the .enc.json sidecar next to its .enc.png"],
            context={"file_path": str(cipher_path)},
        )
    sidecar = load_json(meta_path)
    return EncryptedImage.from_sidecar(read_image(cipher_path), sidecar, source=str(meta_path))
