"""
Training and evaluation of the Vision Transformer.

Includes the two optimizers, a seeded minibatch loop that aborts on non-finite
losses, argmax evaluation, per-epoch reports and the plain-versus-encrypted
learnability experiment.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from app.codec import CipherConfig, encrypt
from app.error_handler import DimensionMismatchError, InvalidArgumentError, NonFiniteLossError
from app.imagecore import ImageTensor, read_image
from app.keyschedule import MasterKey
from app.pipeline import DatasetManifest, generate_synthetic, stratified_split_indices
from app.vit import Batch, ParamSet, ViTConfig, init_params, loss_and_gradients, predict_logits

logger = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")
REPORT_COLUMNS = ["epoch", "train_loss", "train_acc", "val_acc", "train_time_s", "val_time_s"]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise InvalidArgumentError(f"Optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidArgumentError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0:
            raise InvalidArgumentError(f"learning_rate must be non-negative, got {self.learning_rate}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class SGDMomentum:
    """Heavy-ball SGD: v <- momentum * v + g; p <- p - lr * v."""

    def __init__(self, learning_rate: float, momentum: float = 0.9):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: Optional[ParamSet] = None

    def step(self, params: ParamSet, grads: ParamSet) -> None:
        if self.velocity is None:
            self.velocity = params.zeros_like()
        for name in params:
            self.velocity[name] = self.momentum * self.velocity[name] + grads[name]
            params[name] = params[name] - self.learning_rate * self.velocity[name]


class Adam:
    """Adam with bias correction."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Optional[ParamSet] = None
        self.v: Optional[ParamSet] = None

    def step(self, params: ParamSet, grads: ParamSet) -> None:
        if self.m is None or self.v is None:
            self.m = params.zeros_like()
            self.v = params.zeros_like()
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name in params:
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            params[name] = params[name] - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return SGDMomentum(config.learning_rate, config.momentum)
    return Adam(config.learning_rate, config.beta1, config.beta2, config.eps)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: Optional[float]
    train_time_s: float
    val_time_s: float


@dataclass
class TrainReport:
    vit_config: ViTConfig
    train_config: TrainConfig
    epochs: List[EpochStats] = field(default_factory=list)
    initial_loss: Optional[float] = None
    wall_time: float = 0.0
    params: Optional[ParamSet] = field(default=None, repr=False, compare=False)

    @property
    def final_val_acc(self) -> Optional[float]:
        return self.epochs[-1].val_acc if self.epochs else None

    @property
    def best_val_acc(self) -> Optional[float]:
        scores = [e.val_acc for e in self.epochs if e.val_acc is not None]
        return max(scores) if scores else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(e) for e in self.epochs], columns=REPORT_COLUMNS)

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    def to_dict(self) -> Dict[str, Any]:
        return {
            "vit_config": self.vit_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "initial_loss": self.initial_loss,
            "wall_time": self.wall_time,
            "final_val_acc": self.final_val_acc,
            "epochs": [asdict(e) for e in self.epochs],
        }


def load_manifest_batch(manifest: DatasetManifest, config: Optional[ViTConfig] = None, base_dir: Optional[Path] = None) -> Batch:
    """
    Read every image a manifest lists into a Batch.

    Raises:
        DimensionMismatchError: if an image does not match the ViT input shape
    """
    images: List[ImageTensor] = []
    for entry in manifest.entries:
        img = read_image(manifest.resolve(entry.path, base_dir))
        if config is not None and img.shape != (config.image_h, config.image_w, config.channels):
            raise DimensionMismatchError(
                f"{entry.path} is {img.height}x{img.width}x{img.channels}, model expects "
                f"{config.image_h}x{config.image_w}x{config.channels}",
                context={"file_path": entry.path},
            )
        images.append(img)
    return Batch.from_images(images, [entry.label for entry in manifest.entries])


def evaluate(data: Batch, params: ParamSet, config: ViTConfig) -> float:
    """
    Argmax accuracy (ties go to the lowest class index).

    Raises:
        InvalidArgumentError: on an empty dataset
    """
    if len(data) == 0:
        raise InvalidArgumentError("Cannot evaluate on an empty dataset")
    logits = predict_logits(data.inputs, params, config)
    return float((np.argmax(logits, axis=1) == data.labels).mean())


def train(
    train_data: Batch,
    val_data: Optional[Batch],
    vit_config: ViTConfig,
    train_config: TrainConfig,
    params: Optional[ParamSet] = None,
    show_progress: bool = False,
) -> TrainReport:
    """
    Minibatch training with a seeded shuffle every epoch.

    Fully deterministic for fixed seeds. The returned report carries the final parameters.

    Raises:
        NonFiniteLossError: if a loss or a parameter becomes NaN or infinite
    """
    if len(train_data) == 0:
        raise InvalidArgumentError("Cannot train on an empty dataset")
    params = params.copy() if params is not None else init_params(vit_config)
    optimizer = make_optimizer(train_config)
    rng = np.random.default_rng(train_config.seed)
    report = TrainReport(vit_config=vit_config, train_config=train_config)
    started = time.perf_counter()

    epochs = tqdm(range(1, train_config.epochs + 1), desc="Training", unit="epoch", disable=not show_progress)
    for epoch in epochs:
        epoch_start = time.perf_counter()
        order = rng.permutation(len(train_data))
        loss_sum, correct = 0.0, 0
        for start in range(0, len(order), train_config.batch_size):
            batch = train_data.subset(order[start : start + train_config.batch_size])
            loss, logits, grads = loss_and_gradients(batch, params, vit_config)
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"Non-finite loss {loss} at epoch {epoch}, step {start // train_config.batch_size}",
                    context={"epoch": epoch, "learning_rate": train_config.learning_rate},
                )
            if report.initial_loss is None:
                report.initial_loss = loss
            loss_sum += loss * len(batch)
            correct += int((np.argmax(logits, axis=1) == batch.labels).sum())
            optimizer.step(params, grads)
            if not params.all_finite():
                raise NonFiniteLossError(f"Parameters became non-finite at epoch {epoch}", context={"epoch": epoch})
        train_time = time.perf_counter() - epoch_start

        val_start = time.perf_counter()
        val_acc = evaluate(val_data, params, vit_config) if val_data is not None and len(val_data) else None
        val_time = time.perf_counter() - val_start

        stats = EpochStats(
            epoch=epoch,
            train_loss=loss_sum / len(train_data),
            train_acc=correct / len(train_data),
            val_acc=val_acc,
            train_time_s=train_time,
            val_time_s=val_time,
        )
        report.epochs.append(stats)
        logger.info(
            f"Epoch {epoch}/{train_config.epochs}: loss={stats.train_loss:.4f} train_acc={stats.train_acc:.3f} "
            f"val_acc={'n/a' if val_acc is None else f'{val_acc:.3f}'}"
        )

    report.wall_time = time.perf_counter() - started
    report.params = params
    return report


@dataclass
class LearnabilityReport:
    """Validation accuracy of the same model trained on plain and encrypted copies of one dataset."""

    arms: Dict[str, TrainReport]
    clients: int

    def summary(self) -> Dict[str, Any]:
        return {
            name: {
                "final_val_acc": report.final_val_acc,
                "best_val_acc": report.best_val_acc,
                "train_time_s": sum(e.train_time_s for e in report.epochs),
                "val_time_s": sum(e.val_time_s for e in report.epochs),
            }
            for name, report in self.arms.items()
        }

    def gap(self, arm: str = "shared_key") -> Optional[float]:
        plain, other = self.arms["plain"].final_val_acc, self.arms[arm].final_val_acc
        return None if plain is None or other is None else plain - other


def _encrypt_all(images: Sequence[ImageTensor], keys: Sequence[MasterKey], config: CipherConfig) -> List[ImageTensor]:
    return [encrypt(img, keys[i % len(keys)], config, record_digest=False).tensor for i, img in enumerate(images)]


def learnability_experiment(
    vit_config: ViTConfig,
    train_config: TrainConfig,
    num_per_class: int = 250,
    val_fraction: float = 0.2,
    clients: int = 3,
    seed: int = 0,
    cipher: Optional[CipherConfig] = None,
    arms: Sequence[str] = ("plain", "shared_key", "distinct_keys"),
) -> LearnabilityReport:
    """
    Train one ViT configuration on three copies of a synthetic dataset.

    ``plain`` uses the plaintext, ``shared_key`` encrypts every image under one key and
    ``distinct_keys`` assigns images round-robin to ``clients`` with a key each. The cipher
    grid defaults to one block per ViT patch.
    """
    unknown = sorted(set(arms) - {"plain", "shared_key", "distinct_keys"})
    if unknown:
        raise InvalidArgumentError(f"Unknown experiment arms: {unknown}")
    if vit_config.image_h != vit_config.image_w:
        raise InvalidArgumentError("The learnability experiment uses square images")
    if cipher is None:
        cipher = CipherConfig.preset("block-pixel", vit_config.grid_h, vit_config.grid_w)

    shard = generate_synthetic(
        num_per_class, vit_config.num_classes, vit_config.image_h, seed=seed, channels=vit_config.channels
    )
    train_idx, val_idx = stratified_split_indices(shard.labels, val_fraction, seed)
    copies = {
        "plain": list(shard.images),
        "shared_key": _encrypt_all(shard.images, [MasterKey.from_seed(seed, "shared")], cipher),
        "distinct_keys": _encrypt_all(
            shard.images, [MasterKey.from_seed(seed, f"client-{i + 1}") for i in range(clients)], cipher
        ),
    }

    results: Dict[str, TrainReport] = {}
    for arm in arms:
        data = Batch.from_images(copies[arm], shard.labels)
        logger.info(f"Learnability arm {arm}: {len(train_idx)} train / {len(val_idx)} val images")
        results[arm] = train(data.subset(train_idx), data.subset(val_idx), vit_config, train_config)
    return LearnabilityReport(arms=results, clients=clients)
