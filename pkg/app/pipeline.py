"""
Multi-client encrypted dataset simulation.

Each client holds a plaintext shard and its own key, encrypts the shard locally and
ships only ciphertexts and a manifest to the server side, where manifests are merged
and split into train and validation sets. Transport is simulated by directories:

    <root>/clients/<client_id>/{plain/, enc/, manifest.json, <key_id>.key}
    <root>/server/{train.json, val.json}
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.codec import CipherConfig, cipher_targets, encrypt, save_encrypted
from app.error_handler import InvalidArgumentError, WrongKeyError
from app.imagecore import ImageTensor, center_crop, read_image, write_image
from app.keyschedule import MasterKey, save_key
from app.utils import ensure_directory, load_json, run_batch, save_json, validate_data_schema

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "all")
IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")

_ENTRY_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["path", "label", "client_id"],
    "properties": {
        "path": {"type": "string", "minLength": 1},
        "label": {"type": "integer", "minimum": 0},
        "client_id": {"type": "string"},
        "key_id": {"type": ["string", "null"]},
    },
}

MANIFEST_SCHEMA: Dict[str, Any] = {
    "anyOf": [
        {"type": "array", "items": _ENTRY_SCHEMA},
        {
            "type": "object",
            "required": ["class_names", "entries"],
            "properties": {
                "split": {"enum": list(SPLITS)},
                "class_names": {"type": "array", "items": {"type": "string"}},
                "entries": {"type": "array", "items": _ENTRY_SCHEMA},
                "failures": {
                    "type": "array",
                    "items": {"type": "object", "required": ["path", "error"]},
                },
            },
        },
    ]
}


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    client_id: str
    key_id: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"path": self.path, "label": self.label, "client_id": self.client_id, "key_id": self.key_id}


@dataclass
class DatasetManifest:
    """Labelled image paths with their owning client and key fingerprint."""

    entries: List[ManifestEntry]
    class_names: List[str]
    split: str = "all"
    failures: List[Dict[str, str]] = field(default_factory=list)
    source_dir: Optional[Path] = field(default=None, compare=False)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise InvalidArgumentError(f"Split must be one of {SPLITS}, got {self.split!r}")
        bad = [e.path for e in self.entries if not 0 <= e.label < len(self.class_names)]
        if bad:
            raise InvalidArgumentError(f"Labels outside {len(self.class_names)} classes for: {bad[:5]}")
        duplicates = [path for path, n in Counter(e.path for e in self.entries).items() if n > 1]
        if duplicates:
            raise InvalidArgumentError(f"Duplicate manifest paths: {duplicates[:5]}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels(self) -> List[int]:
        return [e.label for e in self.entries]

    def resolve(self, path: str, base_dir: Optional[Path] = None) -> Path:
        """Locate an entry path as written, falling back to the manifest's own directory."""
        candidate = Path(path)
        base = base_dir or self.source_dir
        if candidate.is_absolute() or candidate.exists() or base is None:
            return candidate
        return Path(base) / candidate

    def to_dict(self) -> Dict[str, Any]:
        return {
            "split": self.split,
            "class_names": list(self.class_names),
            "entries": [e.to_dict() for e in self.entries],
            "failures": list(self.failures),
        }

    @classmethod
    def from_document(cls, document: Any, source: Optional[str] = None) -> "DatasetManifest":
        validate_data_schema(document, MANIFEST_SCHEMA, source)
        if isinstance(document, list):
            entries = [ManifestEntry(**item) for item in document]
            count = max((e.label for e in entries), default=-1) + 1
            return cls(entries=entries, class_names=[f"class_{i}" for i in range(count)])
        return cls(
            entries=[ManifestEntry(**item) for item in document["entries"]],
            class_names=list(document["class_names"]),
            split=document.get("split", "all"),
            failures=list(document.get("failures", [])),
        )


def save_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> Path:
    return save_json(manifest.to_dict(), path)


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    path = Path(path)
    manifest = DatasetManifest.from_document(load_json(path), source=str(path))
    manifest.source_dir = path.parent
    return manifest


@dataclass
class PlainShard:
    images: List[ImageTensor]
    labels: List[int]
    class_names: List[str]

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class ClientShard:
    """One client's plaintext images on disk and the fingerprint of its key."""

    client_id: str
    key_id: str
    images: List[Tuple[Path, int]]
    class_names: List[str]

    def __post_init__(self):
        missing = [str(p) for p, _ in self.images if not Path(p).exists()]
        if missing:
            raise InvalidArgumentError(f"Shard {self.client_id} lists missing files: {missing[:5]}")


def shard_from_manifest(manifest: DatasetManifest, client_id: str, key_id: str) -> ClientShard:
    """Treat a plaintext manifest (for example from :func:`ingest_directory`) as one client's shard."""
    images = [(manifest.resolve(e.path), e.label) for e in manifest.entries]
    return ClientShard(client_id=client_id, key_id=key_id, images=images, class_names=list(manifest.class_names))


def _class_pattern(label: int, classes: int, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed spatial wave and channel tint of one class; independent of the seed."""
    angle = np.pi * label / classes + np.pi / 8
    frequency = 1.5 + label
    yy, xx = np.mgrid[0:size, 0:size] / float(size)
    wave = 2 * np.pi * frequency * (xx * np.cos(angle) + yy * np.sin(angle)) + 0.7 * label
    tint = np.roll(np.array([1.0, 0.75, 0.5]), label)
    return wave, tint


def generate_synthetic(
    num_per_class: int, classes: int = 2, size: int = 16, seed: int = 0, channels: int = 3
) -> PlainShard:
    """
    Seeded class-dependent gratings plus noise.

    Each class has its own orientation, frequency, phase and channel tint; the seed only
    drives a small phase jitter and per-pixel noise. Images are interleaved by class.
    """
    if not 2 <= classes <= 4:
        raise InvalidArgumentError(f"classes must be between 2 and 4, got {classes}")
    if num_per_class < 0:
        raise InvalidArgumentError(f"num_per_class must be non-negative, got {num_per_class}")
    if size < 4:
        raise InvalidArgumentError(f"size must be at least 4, got {size}")
    if channels not in (1, 3):
        raise InvalidArgumentError(f"channels must be 1 or 3, got {channels}")
    if size % 8:
        logger.warning(f"Synthetic size {size} is not divisible by the default 8x8 grid")

    rng = np.random.default_rng(seed)
    patterns = [_class_pattern(label, classes, size) for label in range(classes)]
    images: List[ImageTensor] = []
    labels: List[int] = []
    for _ in range(num_per_class):
        for label, (wave, tint) in enumerate(patterns):
            jitter = rng.normal(0.0, 0.3)
            signal = 128.0 + 70.0 * np.sin(wave + jitter)[..., np.newaxis] * tint[:channels]
            sample = signal + rng.normal(0.0, 12.0, size=(size, size, channels))
            images.append(ImageTensor(np.clip(np.rint(sample), 0, 255).astype(np.uint8)))
            labels.append(label)
    return PlainShard(images=images, labels=labels, class_names=[f"class_{i}" for i in range(classes)])


def write_plain_shard(shard: PlainShard, plain_dir: Union[str, Path], client_id: str, key_id: str) -> ClientShard:
    plain_dir = ensure_directory(plain_dir)
    items: List[Tuple[Path, int]] = []
    for i, (img, label) in enumerate(zip(shard.images, shard.labels)):
        items.append((write_image(img, plain_dir / f"{client_id}-{i:05d}.png"), label))
    return ClientShard(client_id=client_id, key_id=key_id, images=items, class_names=list(shard.class_names))


def encrypt_shard(
    shard: ClientShard,
    key: MasterKey,
    config: CipherConfig,
    out_dir: Union[str, Path],
    jobs: int = 1,
    crop: bool = False,
    manifest_path: Optional[Union[str, Path]] = None,
) -> DatasetManifest:
    """
    Encrypt every image of a shard into ``out_dir`` with its sidecar and write a manifest.

    Unreadable or mis-sized images are recorded under ``failures`` and the shard carries on.
    Workers only compute; files are written from the calling thread.

    Raises:
        WrongKeyError: if ``key`` is not the shard's key
    """
    if key.key_id != shard.key_id:
        raise WrongKeyError(
            f"Key {key.key_id} does not match shard {shard.client_id} key_id {shard.key_id}",
            context={"client_id": shard.client_id},
        )
    out_dir = ensure_directory(out_dir)

    def encrypt_one(item: Tuple[Path, int]):
        img = read_image(item[0])
        if crop:
            img = center_crop(img, config.grid_rows, config.grid_cols)
        return encrypt(img, key, config)

    results = run_batch(encrypt_one, shard.images, jobs=jobs, desc=f"Encrypting {shard.client_id}", unit="image")
    entries: List[ManifestEntry] = []
    failures: List[Dict[str, str]] = []
    targets = cipher_targets([path for path, _ in shard.images], out_dir)
    for (path, label), result, target in zip(shard.images, results, targets):
        if isinstance(result, Exception):
            failures.append({"path": str(path), "error": str(result)})
            continue
        try:
            cipher_path, _ = save_encrypted(result, target)
        except OSError as e:
            logger.error(f"Could not write {target}: {e}")
            failures.append({"path": str(path), "error": f"write failed: {e}"})
            continue
        entries.append(ManifestEntry(str(cipher_path), label, shard.client_id, key.key_id))

    manifest = DatasetManifest(entries=entries, class_names=list(shard.class_names), failures=failures)
    save_manifest(manifest, manifest_path or out_dir / "manifest.json")
    if failures:
        logger.warning(f"Client {shard.client_id}: {len(failures)} of {len(shard.images)} image(s) failed")
    logger.info(f"Client {shard.client_id}: encrypted {len(entries)} image(s) with key {key.key_id}")
    return manifest


def stratified_split_indices(labels: Sequence[int], val_fraction: float, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Seeded per-class split: round(n_class * val_fraction) of each class go to validation.

    Both index arrays come back sorted.
    """
    if not 0 < val_fraction < 1:
        raise InvalidArgumentError(f"val_fraction must lie strictly between 0 and 1, got {val_fraction}")
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    val: List[int] = []
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        chosen = rng.permutation(members)[: int(round(len(members) * val_fraction))]
        val.extend(chosen.tolist())
    val_idx = np.array(sorted(val), dtype=np.int64)
    train_idx = np.setdiff1d(np.arange(labels.shape[0]), val_idx)
    return train_idx, val_idx


def client_proportions(manifest: DatasetManifest) -> Dict[str, float]:
    counts = Counter(e.client_id for e in manifest.entries)
    total = sum(counts.values())
    return {client: counts[client] / total for client in sorted(counts)} if total else {}


def merge_and_split(
    manifests: Sequence[DatasetManifest], val_fraction: float = 0.2, seed: int = 0
) -> Tuple[DatasetManifest, DatasetManifest]:
    """
    Merge client manifests and split them, stratified by class.

    Raises:
        InvalidArgumentError: if the manifests disagree on class names
    """
    if not manifests:
        raise InvalidArgumentError("Need at least one manifest to merge")
    class_names = list(manifests[0].class_names)
    for manifest in manifests[1:]:
        if list(manifest.class_names) != class_names:
            raise InvalidArgumentError(
                f"Inconsistent class lists: {class_names} vs {list(manifest.class_names)}"
            )
    merged = DatasetManifest(entries=[e for m in manifests for e in m.entries], class_names=class_names)
    train_idx, val_idx = stratified_split_indices(merged.labels, val_fraction, seed)
    train = DatasetManifest([merged.entries[i] for i in train_idx], class_names, split="train")
    val = DatasetManifest([merged.entries[i] for i in val_idx], class_names, split="val")
    logger.info(
        f"Split {len(merged)} entries into {len(train)} train / {len(val)} val; "
        f"client proportions train={client_proportions(train)} val={client_proportions(val)}"
    )
    return train, val


@dataclass
class BuildResult:
    client_manifests: Dict[str, DatasetManifest]
    key_ids: Dict[str, str]
    train: DatasetManifest
    val: DatasetManifest
    root: Path


def build_clients(
    out_root: Union[str, Path],
    config: CipherConfig,
    clients: int = 3,
    num_per_class: int = 250,
    classes: int = 2,
    size: int = 16,
    seed: int = 0,
    val_fraction: float = 0.2,
    shared_key: bool = False,
    random_keys: bool = False,
    jobs: int = 1,
) -> BuildResult:
    """
    Simulate ``clients`` data owners end to end and write the server split.

    Keys are derived from ``seed`` (one per client, or one for all with ``shared_key``)
    unless ``random_keys`` asks for fresh operating-system keys. Client i draws its
    synthetic shard with seed ``seed + i``.
    """
    if clients < 1:
        raise InvalidArgumentError(f"Need at least one client, got {clients}")
    root = ensure_directory(out_root)

    def make_key(label: str) -> MasterKey:
        return MasterKey.generate() if random_keys else MasterKey.from_seed(seed, label)

    common = make_key("shared") if shared_key else None
    manifests: Dict[str, DatasetManifest] = {}
    key_ids: Dict[str, str] = {}
    for i in range(clients):
        client_id = f"client-{i + 1}"
        key = common or make_key(client_id)
        client_dir = ensure_directory(root / "clients" / client_id)
        save_key(key, client_dir, force=True)

        plain = generate_synthetic(num_per_class, classes, size, seed=seed + i)
        shard = write_plain_shard(plain, client_dir / "plain", client_id, key.key_id)
        manifests[client_id] = encrypt_shard(
            shard, key, config, client_dir / "enc", jobs=jobs, manifest_path=client_dir / "manifest.json"
        )
        key_ids[client_id] = key.key_id

    train, val = merge_and_split(list(manifests.values()), val_fraction, seed)
    server = ensure_directory(root / "server")
    save_manifest(train, server / "train.json")
    save_manifest(val, server / "val.json")
    return BuildResult(client_manifests=manifests, key_ids=key_ids, train=train, val=val, root=root)


def ingest_directory(root: Union[str, Path], client_id: str = "local", key_id: Optional[str] = None) -> DatasetManifest:
    """
    Turn a directory of class subdirectories into a manifest.

    Class names are the sorted subdirectory names; images are PNG, PPM or PGM files.
    """
    root = Path(root)
    if not root.is_dir():
        raise InvalidArgumentError(f"Not a directory: {root}")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise InvalidArgumentError(f"{root} has no class subdirectories")
    entries: List[ManifestEntry] = []
    for label, class_dir in enumerate(class_dirs):
        for path in sorted(class_dir.iterdir()):
            if path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES:
                entries.append(ManifestEntry(str(path), label, client_id, key_id))
    logger.info(f"Ingested {len(entries)} image(s) in {len(class_dirs)} class(es) from {root}")
    return DatasetManifest(entries=entries, class_names=[d.name for d in class_dirs])
