"""
Keyed pseudorandom material for the block-pixel cipher.

Every stage of the cipher draws from its own ChaCha20 keystream whose key is
SHA-256(master key || stage tag || index as 8 little-endian bytes). Streams are
read as little-endian 32-bit words; uniform draws use rejection sampling and
permutations use a Fisher-Yates shuffle running from the last position down.
"""

from __future__ import annotations

import hashlib
import logging
import re
import secrets
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Union

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

from app.error_handler import InvalidArgumentError, KeyFileError

logger = logging.getLogger(__name__)

KEY_SIZE = 32
WORD = 4
_WORD_SPACE = 1 << 32
_REFILL = 4096
_KEY_FILE_RE = re.compile(r"^[0-9a-f]{64}$")


@dataclass(frozen=True)
class MasterKey:
    """A 32-byte secret; ``key_id`` is the first 8 hex chars of its SHA-256."""

    bytes: bytes = field(repr=False)

    def __post_init__(self):
        if not isinstance(self.bytes, (bytes, bytearray)) or len(self.bytes) != KEY_SIZE:
            raise InvalidArgumentError(f"Master key must be exactly {KEY_SIZE} bytes")
        object.__setattr__(self, "bytes", bytes(self.bytes))

    @property
    def key_id(self) -> str:
        return hashlib.sha256(self.bytes).hexdigest()[:8]

    @classmethod
    def generate(cls) -> "MasterKey":
        """Draw a fresh key from the operating system entropy source."""
        return cls(secrets.token_bytes(KEY_SIZE))

    @classmethod
    def from_hex(cls, text: str) -> "MasterKey":
        text = text.strip()
        if not _KEY_FILE_RE.match(text):
            raise KeyFileError("Key file must contain exactly 64 lowercase hex characters")
        return cls(bytes.fromhex(text))

    @classmethod
    def from_seed(cls, seed: int, label: str = "") -> "MasterKey":
        """
        Derive a reproducible key for simulations and demos.

        Anyone who knows the seed knows the key; use :meth:`generate` for real data.
        """
        material = b"blockvit-seeded-key" + label.encode("utf-8") + (seed % (1 << 64)).to_bytes(8, "little")
        return cls(hashlib.sha256(material).digest())

    def to_hex(self) -> str:
        return self.bytes.hex()

    def flip_bit(self, bit: int) -> "MasterKey":
        """Return a copy with one bit (0..255, LSB-first within each byte) inverted."""
        if not 0 <= bit < KEY_SIZE * 8:
            raise InvalidArgumentError(f"Bit index must be in [0, {KEY_SIZE * 8}), got {bit}")
        raw = bytearray(self.bytes)
        raw[bit // 8] ^= 1 << (bit % 8)
        return MasterKey(bytes(raw))


class StageTag(Enum):
    """Cipher stages; each value is the domain-separation tag hashed into the stream seed."""

    PIXEL_SCRAMBLE = b"pixscr"
    BLOCK_SHUFFLE = b"blkshf"
    NEGPOS = b"negpos"
    CHANNEL_SHUFFLE = b"chnshf"


class KeyStream:
    """
    Sequential ChaCha20 (IETF) keystream: zero nonce, block counter starting at 0.

    ``position`` counts bytes handed out; the keystream is generated ahead in chunks but
    what a consumer sees depends only on (seed, position). Not safe to share between
    threads; derive one stream per worker instead.
    """

    def __init__(self, seed: bytes):
        if len(seed) != KEY_SIZE:
            raise InvalidArgumentError(f"Stream seed must be {KEY_SIZE} bytes")
        self.seed = bytes(seed)
        self._reset()

    def _reset(self) -> None:
        # cryptography's 16-byte ChaCha20 nonce is the 4-byte LE counter followed by the 12-byte nonce
        cipher = Cipher(algorithms.ChaCha20(self.seed, b"\x00" * 16), mode=None)
        self._encryptor = cipher.encryptor()
        self._buffer = b""
        self._offset = 0
        self.position = 0

    def read(self, n: int) -> bytes:
        """Return the next ``n`` keystream bytes and advance ``position`` by ``n``."""
        if n < 0:
            raise InvalidArgumentError(f"Cannot read a negative number of bytes: {n}")
        available = len(self._buffer) - self._offset
        if n > available:
            need = max(_REFILL, n - available)
            self._buffer = self._buffer[self._offset :] + self._encryptor.update(b"\x00" * need)
            self._offset = 0
        out = self._buffer[self._offset : self._offset + n]
        self._offset += n
        self.position += n
        return out

    def read_words(self, count: int) -> np.ndarray:
        """Read ``count`` little-endian 32-bit words."""
        return np.frombuffer(self.read(WORD * count), dtype="<u4").astype(np.int64)

    def seek(self, position: int) -> None:
        """Reposition the stream; the bytes at ``position`` onward are reproduced exactly."""
        if position < 0:
            raise InvalidArgumentError(f"Stream position must be non-negative: {position}")
        self._reset()
        if position:
            self.read(position)

    def __repr__(self) -> str:
        return f"KeyStream(seed={self.seed[:4].hex()}…, position={self.position})"


@dataclass(frozen=True)
class Permutation:
    """A bijection on 0..n-1; ``apply`` maps output slot j to input element mapping[j]."""

    mapping: np.ndarray

    def __post_init__(self):
        mapping = np.array(self.mapping, dtype=np.int64)
        n = mapping.shape[0] if mapping.ndim == 1 else -1
        if n < 1 or not np.array_equal(np.sort(mapping), np.arange(n)):
            raise InvalidArgumentError("Permutation must contain each index 0..n-1 exactly once")
        mapping.setflags(write=False)
        object.__setattr__(self, "mapping", mapping)

    def __len__(self) -> int:
        return int(self.mapping.shape[0])

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    def inverse(self) -> "Permutation":
        return Permutation(np.argsort(self.mapping, kind="stable"))

    def apply(self, items: Union[np.ndarray, list]) -> Union[np.ndarray, list]:
        """Reorder the leading axis of an array (or a list) so that out[j] = items[mapping[j]]."""
        if len(items) != len(self):
            raise InvalidArgumentError(f"Permutation of length {len(self)} cannot reorder {len(items)} items")
        if isinstance(items, np.ndarray):
            return items[self.mapping]
        return [items[i] for i in self.mapping]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.mapping, other.mapping)

    def __hash__(self) -> int:
        return hash(self.mapping.tobytes())

    def tolist(self) -> list:
        return self.mapping.tolist()


def derive_stream(key: MasterKey, stage: StageTag, index: int) -> KeyStream:
    """
    Derive the keystream for one cipher stage and one index (block ordinal or 0).

    Args:
        key: Master key
        stage: Stage tag used for domain separation
        index: 64-bit unsigned index

    Returns:
        KeyStream: fresh stream at position 0
    """
    if not 0 <= index < 1 << 64:
        raise InvalidArgumentError(f"Stream index must be a 64-bit unsigned integer, got {index}")
    seed = hashlib.sha256(key.bytes + stage.value + index.to_bytes(8, "little")).digest()
    return KeyStream(seed)


def _acceptance_limit(n: Union[int, np.ndarray]) -> Union[int, np.ndarray]:
    return (_WORD_SPACE // n) * n


def next_uniform(stream: KeyStream, n: int) -> int:
    """
    Draw an unbiased integer in [0, n) by rejection sampling on 32-bit words.

    Raises:
        InvalidArgumentError: if n < 1
    """
    if n < 1:
        raise InvalidArgumentError(f"next_uniform needs n >= 1, got {n}")
    limit = _acceptance_limit(n)
    while True:
        value = int.from_bytes(stream.read(WORD), "little")
        if value < limit:
            return value % n


def _fisher_yates(stream: KeyStream, n: int) -> np.ndarray:
    mapping = list(range(n))
    for i in range(n - 1, 0, -1):
        j = next_uniform(stream, i + 1)
        mapping[i], mapping[j] = mapping[j], mapping[i]
    return np.array(mapping, dtype=np.int64)


def gen_permutation(stream: KeyStream, n: int) -> Permutation:
    """
    Fisher-Yates shuffle of [0..n-1]: for i from n-1 down to 1 swap i with next_uniform(i+1).

    All n-1 words are fetched at once; if any of them would have been rejected the
    stream is rewound and the draw-by-draw path runs instead, so the result is always
    identical to the sequential definition.
    """
    if n < 1:
        raise InvalidArgumentError(f"gen_permutation needs n >= 1, got {n}")
    if n == 1:
        return Permutation(np.zeros(1, dtype=np.int64))

    start = stream.position
    bounds = np.arange(n, 1, -1, dtype=np.int64)
    words = stream.read_words(n - 1)
    if np.any(words >= _acceptance_limit(bounds)):
        stream.seek(start)
        return Permutation(_fisher_yates(stream, n))

    swaps = (words % bounds).tolist()
    mapping = list(range(n))
    for i, j in zip(range(n - 1, 0, -1), swaps):
        mapping[i], mapping[j] = mapping[j], mapping[i]
    return Permutation(np.array(mapping, dtype=np.int64))


def gen_bits(stream: KeyStream, count: int) -> np.ndarray:
    """
    Return ``count`` key bits, each the low bit of one next_uniform(stream, 2) draw.

    With n = 2 the acceptance limit is 2**32, so every word is accepted and each bit
    costs exactly four bytes.
    """
    if count < 0:
        raise InvalidArgumentError(f"Bit count must be non-negative, got {count}")
    return (stream.read_words(count) & 1).astype(np.uint8)


def gen_channel_perms(stream: KeyStream, count: int, channels: int = 3) -> np.ndarray:
    """
    Draw ``count`` successive channel permutations as a (count, channels) array.

    Row k equals gen_permutation(stream, channels).mapping for the k-th draw.
    """
    if count < 0:
        raise InvalidArgumentError(f"Permutation count must be non-negative, got {count}")
    if channels < 1:
        raise InvalidArgumentError(f"Channel count must be positive, got {channels}")
    perms = np.tile(np.arange(channels, dtype=np.int64), (count, 1))
    if channels == 1 or count == 0:
        return perms

    start = stream.position
    bounds = np.arange(channels, 1, -1, dtype=np.int64)
    words = stream.read_words(count * (channels - 1)).reshape(count, channels - 1)
    if np.any(words >= _acceptance_limit(bounds)):
        stream.seek(start)
        return np.stack([_fisher_yates(stream, channels) for _ in range(count)])

    rows = np.arange(count)
    swaps = words % bounds
    for column, i in enumerate(range(channels - 1, 0, -1)):
        j = swaps[:, column]
        held = perms[rows, i].copy()
        perms[rows, i] = perms[rows, j]
        perms[rows, j] = held
    return perms


def load_key(path: Union[str, Path]) -> MasterKey:
    """Read a key file (64 lowercase hex characters plus newline)."""
    path = Path(path)
    if not path.exists():
        raise KeyFileError(f"Key file not found: {path}", context={"key_file": str(path)})
    try:
        text = path.read_text(encoding="ascii")
    except UnicodeDecodeError as e:
        raise KeyFileError(
            f"Key file {path} is not ASCII text",
            solutions=["Point --key at a file written by keygen"],
            original_error=e,
            context={"key_file": str(path)},
        ) from e
    key = MasterKey.from_hex(text)
    logger.debug(f"Loaded key {key.key_id} from {path}")
    return key


def save_key(key: MasterKey, path: Union[str, Path], force: bool = False) -> Path:
    """
    Write a key file. A directory path receives ``<key_id>.key``.

    Raises:
        KeyFileError: if the destination exists and ``force`` is False
    """
    path = Path(path)
    if path.is_dir():
        path = path / f"{key.key_id}.key"
    if path.exists() and not force:
        raise KeyFileError(
            f"Refusing to overwrite existing key file {path}",
            solutions=["Pass --force to overwrite", "Choose another destination"],
            context={"key_file": str(path)},
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(key.to_hex() + "\n", encoding="ascii")
    logger.info(f"Wrote key {key.key_id} to {path}")
    return path
