"""
A compact Vision Transformer in numpy with hand-written backpropagation.

Images are cut into non-overlapping square patches, linearly embedded, prefixed with a
class token and passed through pre-norm encoder blocks (multi-head self-attention and a
GELU MLP, each wrapped in a residual connection). The classifier reads the class token
after a final layer norm. Everything runs in float64 so finite-difference gradient
checks stay meaningful.
"""

import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.error_handler import DataFormatError, DimensionMismatchError, InvalidArgumentError
from app.imagecore import ImageTensor
from app.utils import load_json, save_json, validate_data_schema

logger = logging.getLogger(__name__)

INIT_STD = 0.02
GELU_C = np.sqrt(2.0 / np.pi)
CHECKPOINT_FORMAT = "blockvit-vit"
CHECKPOINT_VERSION = 1

LAYER_PARAMS = (
    "ln1.scale",
    "ln1.shift",
    "attn.wq",
    "attn.bq",
    "attn.wk",
    "attn.bk",
    "attn.wv",
    "attn.bv",
    "attn.wo",
    "attn.bo",
    "ln2.scale",
    "ln2.shift",
    "mlp.w1",
    "mlp.b1",
    "mlp.w2",
    "mlp.b2",
)

CHECKPOINT_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["format", "version", "dtype", "config", "parameters"],
    "properties": {
        "format": {"const": CHECKPOINT_FORMAT},
        "version": {"const": CHECKPOINT_VERSION},
        "dtype": {"const": "<f8"},
        "config": {"type": "object"},
        "parameters": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "shape"],
                "properties": {
                    "name": {"type": "string"},
                    "shape": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class ViTConfig:
    image_h: int
    image_w: int
    channels: int
    patch_size: int
    embed_dim: int
    num_heads: int
    num_layers: int
    mlp_dim: int
    num_classes: int
    use_positional_embedding: bool = False
    seed: int = 0
    zero_init_head: bool = True
    ln_eps: float = 1e-5

    def __post_init__(self):
        counts = {
            "image_h": self.image_h,
            "image_w": self.image_w,
            "channels": self.channels,
            "patch_size": self.patch_size,
            "embed_dim": self.embed_dim,
            "num_heads": self.num_heads,
            "num_layers": self.num_layers,
            "mlp_dim": self.mlp_dim,
            "num_classes": self.num_classes,
        }
        bad = [name for name, value in counts.items() if value < 1]
        if bad:
            raise InvalidArgumentError(f"ViT sizes must be positive: {bad}")
        if self.image_h % self.patch_size or self.image_w % self.patch_size:
            raise DimensionMismatchError(
                f"Patch size {self.patch_size} does not divide the {self.image_h}x{self.image_w} image"
            )
        if self.embed_dim % self.num_heads:
            raise InvalidArgumentError(f"embed_dim {self.embed_dim} is not divisible by num_heads {self.num_heads}")
        if self.ln_eps <= 0:
            raise InvalidArgumentError("ln_eps must be positive")

    @property
    def grid_h(self) -> int:
        return self.image_h // self.patch_size

    @property
    def grid_w(self) -> int:
        return self.image_w // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def seq_len(self) -> int:
        return self.num_patches + 1

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ViTConfig":
        try:
            return cls(**data)
        except TypeError as e:
            raise DataFormatError(f"Invalid ViT configuration: {e}", original_error=e)


def param_shapes(config: ViTConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    """Every parameter name and shape in checkpoint order."""
    d, m = config.embed_dim, config.mlp_dim
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
    shapes["patch_proj.weight"] = (config.patch_dim, d)
    shapes["patch_proj.bias"] = (d,)
    shapes["cls_token"] = (d,)
    if config.use_positional_embedding:
        shapes["pos_embed"] = (config.seq_len, d)
    per_layer = {
        "ln1.scale": (d,),
        "ln1.shift": (d,),
        "attn.wq": (d, d),
        "attn.bq": (d,),
        "attn.wk": (d, d),
        "attn.bk": (d,),
        "attn.wv": (d, d),
        "attn.bv": (d,),
        "attn.wo": (d, d),
        "attn.bo": (d,),
        "ln2.scale": (d,),
        "ln2.shift": (d,),
        "mlp.w1": (d, m),
        "mlp.b1": (m,),
        "mlp.w2": (m, d),
        "mlp.b2": (d,),
    }
    for layer in range(config.num_layers):
        for name in LAYER_PARAMS:
            shapes[f"layers.{layer}.{name}"] = per_layer[name]
    shapes["final_ln.scale"] = (d,)
    shapes["final_ln.shift"] = (d,)
    shapes["head.weight"] = (d, config.num_classes)
    shapes["head.bias"] = (config.num_classes,)
    return shapes


class ParamSet:
    """Named float64 tensors in a fixed order; gradients use the same container."""

    def __init__(self, tensors: "OrderedDict[str, np.ndarray]"):
        self.tensors = OrderedDict((name, np.asarray(value, dtype=np.float64)) for name, value in tensors.items())

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name not in self.tensors:
            raise KeyError(name)
        self.tensors[name] = np.asarray(value, dtype=np.float64)

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self) -> List[str]:
        return list(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy(self) -> "ParamSet":
        return ParamSet(OrderedDict((name, value.copy()) for name, value in self.tensors.items()))

    def zeros_like(self) -> "ParamSet":
        return ParamSet(OrderedDict((name, np.zeros_like(value)) for name, value in self.tensors.items()))

    def num_parameters(self) -> int:
        return int(sum(value.size for value in self.tensors.values()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(value)) for value in self.tensors.values())

    def flatten(self) -> np.ndarray:
        return np.concatenate([value.ravel() for value in self.tensors.values()])

    @classmethod
    def from_flat(cls, vector: np.ndarray, shapes: "OrderedDict[str, Tuple[int, ...]]") -> "ParamSet":
        expected = int(sum(int(np.prod(shape)) for shape in shapes.values()))
        if vector.size != expected:
            raise DataFormatError(f"Expected {expected} parameter values, got {vector.size}")
        tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
        offset = 0
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            tensors[name] = vector[offset : offset + size].reshape(shape).copy()
            offset += size
        return cls(tensors)

    def equals(self, other: "ParamSet") -> bool:
        return self.names() == other.names() and all(np.array_equal(self[n], other[n]) for n in self)


@dataclass(frozen=True)
class Batch:
    """Inputs scaled to [0, 1] with shape (N, H, W, C) and integer labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if inputs.ndim != 4:
            raise DimensionMismatchError(f"Batch inputs must be N x H x W x C, got shape {inputs.shape}")
        if inputs.shape[0] != labels.shape[0]:
            raise DimensionMismatchError(f"{inputs.shape[0]} inputs but {labels.shape[0]} labels")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @classmethod
    def from_images(cls, images: Sequence[ImageTensor], labels: Sequence[int]) -> "Batch":
        if not images:
            return cls(np.zeros((0, 1, 1, 1)), np.zeros(0, dtype=np.int64))
        return cls(np.stack([img.data for img in images]).astype(np.float64) / 255.0, np.asarray(labels))

    def subset(self, indices: np.ndarray) -> "Batch":
        return Batch(self.inputs[indices], self.labels[indices])


def truncated_normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float = INIT_STD) -> np.ndarray:
    """Normal draws with out-of-range values (beyond 2 std) redrawn until all are inside."""
    values = rng.normal(0.0, std, size=shape)
    outside = np.abs(values) > 2 * std
    while np.any(outside):
        values[outside] = rng.normal(0.0, std, size=int(outside.sum()))
        outside = np.abs(values) > 2 * std
    return values


def init_params(config: ViTConfig) -> ParamSet:
    """
    Seeded initialisation: truncated normal (std 0.02) weights, zero biases and shifts,
    unit layer-norm scales. The classifier weight starts at zero when ``zero_init_head``.
    """
    rng = np.random.default_rng(config.seed)
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "scale":
            tensors[name] = np.ones(shape)
        elif leaf in ("shift", "bias", "bq", "bk", "bv", "bo", "b1", "b2"):
            tensors[name] = np.zeros(shape)
        elif name == "head.weight" and config.zero_init_head:
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = truncated_normal(rng, shape)
    return ParamSet(tensors)


def extract_patches(inputs: np.ndarray, patch_size: int) -> np.ndarray:
    """(B, H, W, C) -> (B, num_patches, p*p*C), patches in row-major order, pixels row-major, channels interleaved."""
    b, h, w, c = inputs.shape
    gh, gw = h // patch_size, w // patch_size
    return (
        inputs.reshape(b, gh, patch_size, gw, patch_size, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, gh * gw, patch_size * patch_size * c)
    )


def _check_inputs(inputs: np.ndarray, config: ViTConfig) -> None:
    expected = (config.image_h, config.image_w, config.channels)
    if inputs.ndim != 4 or tuple(inputs.shape[1:]) != expected:
        raise DimensionMismatchError(f"Expected inputs of shape (N, {expected[0]}, {expected[1]}, {expected[2]}), got {inputs.shape}")


def patch_embed(inputs: np.ndarray, params: ParamSet, config: ViTConfig) -> np.ndarray:
    """
    Embed images into token sequences.

    Accepts one image (H, W, C) or a batch (B, H, W, C); returns (T, D) or (B, T, D)
    where T = num_patches + 1 and token 0 is the class token.
    """
    single = np.ndim(inputs) == 3
    batch = np.asarray(inputs, dtype=np.float64)[np.newaxis] if single else np.asarray(inputs, dtype=np.float64)
    _check_inputs(batch, config)
    tokens = _embed(extract_patches(batch, config.patch_size), params, config)
    return tokens[0] if single else tokens


def _embed(patches: np.ndarray, params: ParamSet, config: ViTConfig) -> np.ndarray:
    b = patches.shape[0]
    projected = patches @ params["patch_proj.weight"] + params["patch_proj.bias"]
    cls = np.broadcast_to(params["cls_token"], (b, 1, config.embed_dim))
    tokens = np.concatenate([cls, projected], axis=1)
    if config.use_positional_embedding:
        tokens = tokens + params["pos_embed"]
    return tokens


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(GELU_C * (x + 0.044715 * x**3)))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(GELU_C * (x + 0.044715 * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3 * 0.044715 * x * x)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _layer_norm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray, eps: float):
    mu = x.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + eps)
    xhat = (x - mu) * inv_std
    return xhat * scale + shift, (xhat, inv_std)


def _layer_norm_backward(dy: np.ndarray, cache, scale: np.ndarray):
    xhat, inv_std = cache
    axes = tuple(range(dy.ndim - 1))
    dscale = (dy * xhat).sum(axis=axes)
    dshift = dy.sum(axis=axes)
    dxhat = dy * scale
    dx = inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dscale, dshift


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, t, d = x.shape
    return x.reshape(b, t, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, t, hd = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * hd)


def multi_head_attention(x: np.ndarray, params: ParamSet, prefix: str, num_heads: int, return_cache: bool = False):
    """
    Scaled dot-product self-attention over (B, T, D) tokens.

    Returns (output, attention weights of shape (B, heads, T, T)) and, when asked, the
    backward cache.
    """
    head_dim = x.shape[-1] // num_heads
    q = _split_heads(x @ params[f"{prefix}wq"] + params[f"{prefix}bq"], num_heads)
    k = _split_heads(x @ params[f"{prefix}wk"] + params[f"{prefix}bk"], num_heads)
    v = _split_heads(x @ params[f"{prefix}wv"] + params[f"{prefix}bv"], num_heads)
    scale = 1.0 / np.sqrt(head_dim)
    weights = softmax((q @ k.transpose(0, 1, 3, 2)) * scale, axis=-1)
    merged = _merge_heads(weights @ v)
    out = merged @ params[f"{prefix}wo"] + params[f"{prefix}bo"]
    if return_cache:
        return out, weights, (x, q, k, v, weights, merged, scale)
    return out, weights


def _attention_backward(dout: np.ndarray, cache, params: ParamSet, prefix: str, grads: ParamSet, num_heads: int):
    x, q, k, v, weights, merged, scale = cache
    grads[f"{prefix}wo"] += np.einsum("btd,bte->de", merged, dout)
    grads[f"{prefix}bo"] += dout.sum(axis=(0, 1))
    dctx = _split_heads(dout @ params[f"{prefix}wo"].T, num_heads)
    dweights = dctx @ v.transpose(0, 1, 3, 2)
    dv = weights.transpose(0, 1, 3, 2) @ dctx
    dscores = weights * (dweights - (dweights * weights).sum(axis=-1, keepdims=True)) * scale
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q

    dx = np.zeros_like(x)
    for name, d in (("q", dq), ("k", dk), ("v", dv)):
        d = _merge_heads(d)
        grads[f"{prefix}w{name}"] += np.einsum("btd,bte->de", x, d)
        grads[f"{prefix}b{name}"] += d.sum(axis=(0, 1))
        dx += d @ params[f"{prefix}w{name}"].T
    return dx


def _block_forward(x: np.ndarray, params: ParamSet, layer: int, config: ViTConfig):
    p = f"layers.{layer}."
    a_in, ln1 = _layer_norm(x, params[p + "ln1.scale"], params[p + "ln1.shift"], config.ln_eps)
    a_out, weights, attn = multi_head_attention(a_in, params, p + "attn.", config.num_heads, return_cache=True)
    x1 = x + a_out
    m_in, ln2 = _layer_norm(x1, params[p + "ln2.scale"], params[p + "ln2.shift"], config.ln_eps)
    hidden = m_in @ params[p + "mlp.w1"] + params[p + "mlp.b1"]
    activated = gelu(hidden)
    x2 = x1 + activated @ params[p + "mlp.w2"] + params[p + "mlp.b2"]
    return x2, weights, (ln1, attn, ln2, m_in, hidden, activated)


def _block_backward(dx2: np.ndarray, cache, params: ParamSet, layer: int, grads: ParamSet, config: ViTConfig):
    p = f"layers.{layer}."
    ln1, attn, ln2, m_in, hidden, activated = cache
    grads[p + "mlp.w2"] += np.einsum("btm,btd->md", activated, dx2)
    grads[p + "mlp.b2"] += dx2.sum(axis=(0, 1))
    dhidden = (dx2 @ params[p + "mlp.w2"].T) * _gelu_grad(hidden)
    grads[p + "mlp.w1"] += np.einsum("btd,btm->dm", m_in, dhidden)
    grads[p + "mlp.b1"] += dhidden.sum(axis=(0, 1))
    dm_in = dhidden @ params[p + "mlp.w1"].T
    dx1_ln, dscale, dshift = _layer_norm_backward(dm_in, ln2, params[p + "ln2.scale"])
    grads[p + "ln2.scale"] += dscale
    grads[p + "ln2.shift"] += dshift
    dx1 = dx2 + dx1_ln

    da_in = _attention_backward(dx1, attn, params, p + "attn.", grads, config.num_heads)
    dx_ln, dscale, dshift = _layer_norm_backward(da_in, ln1, params[p + "ln1.scale"])
    grads[p + "ln1.scale"] += dscale
    grads[p + "ln1.shift"] += dshift
    return dx1 + dx_ln


def encoder_forward(tokens: np.ndarray, params: ParamSet, config: ViTConfig, return_attention: bool = False):
    """
    Run the encoder blocks and the final layer norm.

    Accepts (T, D) or (B, T, D) tokens. With ``return_attention`` also returns the
    per-layer attention weights, each (B, heads, T, T).
    """
    single = np.ndim(tokens) == 2
    x = np.asarray(tokens, dtype=np.float64)
    if single:
        x = x[np.newaxis]
    if x.ndim != 3 or x.shape[-1] != config.embed_dim:
        raise DimensionMismatchError(f"Tokens must end in embed_dim {config.embed_dim}, got shape {x.shape}")
    maps = []
    for layer in range(config.num_layers):
        x, weights, _ = _block_forward(x, params, layer, config)
        maps.append(weights)
    out, _ = _layer_norm(x, params["final_ln.scale"], params["final_ln.shift"], config.ln_eps)
    if single:
        out = out[0]
    return (out, maps) if return_attention else out


def _check_labels(labels: np.ndarray, config: ViTConfig) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= config.num_classes):
        raise InvalidArgumentError(f"Labels must lie in [0, {config.num_classes}), got range [{labels.min()}, {labels.max()}]")


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean softmax cross-entropy with max subtraction; also returns d loss / d logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(labels.shape[0])
    loss = float((log_norm - shifted[rows, labels]).mean())
    dlogits = softmax(logits, axis=1)
    dlogits[rows, labels] -= 1.0
    return loss, dlogits / labels.shape[0]


def _forward(inputs: np.ndarray, params: ParamSet, config: ViTConfig):
    _check_inputs(inputs, config)
    patches = extract_patches(inputs, config.patch_size)
    x = _embed(patches, params, config)
    caches = []
    for layer in range(config.num_layers):
        x, _, cache = _block_forward(x, params, layer, config)
        caches.append(cache)
    encoded, final_cache = _layer_norm(x, params["final_ln.scale"], params["final_ln.shift"], config.ln_eps)
    cls = encoded[:, 0, :]
    logits = cls @ params["head.weight"] + params["head.bias"]
    return logits, (patches, caches, final_cache, cls, x.shape)


def predict_logits(inputs: np.ndarray, params: ParamSet, config: ViTConfig, batch_size: int = 256) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    _check_inputs(inputs, config)
    chunks = [_forward(inputs[i : i + batch_size], params, config)[0] for i in range(0, inputs.shape[0], batch_size)]
    return np.concatenate(chunks) if chunks else np.zeros((0, config.num_classes))


def forward_loss(batch: Batch, params: ParamSet, config: ViTConfig) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy of the class-token logits; returns (loss, logits)."""
    if len(batch) == 0:
        raise InvalidArgumentError("Cannot compute a loss on an empty batch")
    _check_labels(batch.labels, config)
    logits, _ = _forward(batch.inputs, params, config)
    loss, _ = cross_entropy(logits, batch.labels)
    return loss, logits


def loss_and_gradients(batch: Batch, params: ParamSet, config: ViTConfig) -> Tuple[float, np.ndarray, ParamSet]:
    """Forward and reverse pass in one go: (loss, logits, gradients)."""
    if len(batch) == 0:
        raise InvalidArgumentError("Cannot compute gradients on an empty batch")
    _check_labels(batch.labels, config)
    logits, (patches, caches, final_cache, cls, shape) = _forward(batch.inputs, params, config)
    loss, dlogits = cross_entropy(logits, batch.labels)

    grads = params.zeros_like()
    grads["head.weight"] += cls.T @ dlogits
    grads["head.bias"] += dlogits.sum(axis=0)
    dencoded = np.zeros(shape)
    dencoded[:, 0, :] = dlogits @ params["head.weight"].T
    dx, dscale, dshift = _layer_norm_backward(dencoded, final_cache, params["final_ln.scale"])
    grads["final_ln.scale"] += dscale
    grads["final_ln.shift"] += dshift

    for layer in reversed(range(config.num_layers)):
        dx = _block_backward(dx, caches[layer], params, layer, grads, config)

    if config.use_positional_embedding:
        grads["pos_embed"] += dx.sum(axis=0)
    grads["cls_token"] += dx[:, 0, :].sum(axis=0)
    dprojected = dx[:, 1:, :]
    grads["patch_proj.weight"] += np.einsum("bnp,bnd->pd", patches, dprojected)
    grads["patch_proj.bias"] += dprojected.sum(axis=(0, 1))
    return loss, logits, grads


def backward(batch: Batch, params: ParamSet, config: ViTConfig) -> ParamSet:
    """Exact gradients of the mean loss with respect to every parameter."""
    return loss_and_gradients(batch, params, config)[2]


def numeric_gradients(batch: Batch, params: ParamSet, config: ViTConfig, h: float = 1e-5) -> Dict[str, np.ndarray]:
    """Central finite differences of the batch loss for every parameter element."""
    shifted = params.copy()
    grads: Dict[str, np.ndarray] = {}
    for name in shifted:
        tensor = shifted[name]
        numeric = np.zeros_like(tensor)
        flat, out = tensor.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus, _ = forward_loss(batch, shifted, config)
            flat[i] = original - h
            minus, _ = forward_loss(batch, shifted, config)
            flat[i] = original
            out[i] = (plus - minus) / (2 * h)
        grads[name] = numeric
    return grads


def gradient_check(
    batch: Batch,
    params: ParamSet,
    config: ViTConfig,
    h: float = 1e-5,
    floor: float = 1e-5,
    elementwise: bool = False,
) -> Dict[str, float]:
    """
    Compare analytic gradients with central finite differences.

    By default returns ||g - g_num|| / max(||g||, ||g_num||, floor) per parameter. With
    ``elementwise`` the error is instead the largest |g_i - g_num_i| / max(|g_i|, |g_num_i|, floor)
    over the tensor's elements.
    """
    analytic = backward(batch, params, config)
    numeric = numeric_gradients(batch, params, config, h)
    errors: Dict[str, float] = {}
    for name, g_num in numeric.items():
        g = analytic[name]
        if elementwise:
            denom = np.maximum(np.maximum(np.abs(g), np.abs(g_num)), floor)
            errors[name] = float(np.max(np.abs(g - g_num) / denom)) if g.size else 0.0
        else:
            denom = max(np.linalg.norm(g), np.linalg.norm(g_num), floor)
            errors[name] = float(np.linalg.norm(g - g_num) / denom)
    worst = max(errors, key=errors.get)
    kind = "elementwise" if elementwise else "norm"
    logger.debug(f"Gradient check ({kind}): worst relative error {errors[worst]:.3e} at {worst}")
    return errors


def checkpoint_header_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_checkpoint(params: ParamSet, config: ViTConfig, path: Union[str, Path]) -> Path:
    """Write parameters as little-endian float64 in checkpoint order plus a JSON header."""
    path = Path(path)
    shapes = param_shapes(config)
    if list(shapes) != params.names():
        raise InvalidArgumentError("Parameter set does not match the configuration")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(params.flatten().astype("<f8").tobytes())
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dtype": "<f8",
        "config": config.to_dict(),
        "parameters": [{"name": name, "shape": list(shape)} for name, shape in shapes.items()],
    }
    save_json(header, checkpoint_header_path(path))
    logger.info(f"Saved checkpoint with {params.num_parameters()} parameters to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[ParamSet, ViTConfig]:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        DataFormatError: on a missing or invalid header or a size mismatch
    """
    path = Path(path)
    header_path = checkpoint_header_path(path)
    if not header_path.exists():
        raise DataFormatError(f"Missing checkpoint header {header_path.name}", context={"file_path": str(path)})
    header = load_json(header_path)
    validate_data_schema(header, CHECKPOINT_SCHEMA, str(header_path))
    config = ViTConfig.from_dict(header["config"])
    shapes = param_shapes(config)
    listed = [(entry["name"], tuple(entry["shape"])) for entry in header["parameters"]]
    if listed != list(shapes.items()):
        raise DataFormatError("Checkpoint parameter list does not match its configuration", context={"file_path": str(path)})
    vector = np.frombuffer(path.read_bytes(), dtype="<f8").astype(np.float64)
    return ParamSet.from_flat(vector, shapes), config


def perturbed(params: ParamSet, scale: float, seed: Optional[int] = None) -> ParamSet:
    """Copy of ``params`` with Gaussian noise of std ``scale`` added to every entry."""
    rng = np.random.default_rng(seed)
    out = params.copy()
    for name in out:
        out[name] = out[name] + rng.normal(0.0, scale, size=out[name].shape)
    return out
