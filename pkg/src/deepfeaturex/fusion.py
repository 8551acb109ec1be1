"""The complete detector: three frozen base models feeding a conv-1D head."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .basemodel import BaseModel, extract_phi_batch, load_base_model, save_base_model
from .data.images import load_images
from .data.manifest import CLASSES, ClassLabel, Manifest
from .errors import BadConfig, InputTooShort, LengthMismatch, NotFrozenBase, ShapeMismatch
from .nn import checkpoint
from .nn.functional import conv1d, cross_entropy, global_avg_pool, linear, relu, softmax
from .nn.init import fan_in_uniform, zeros
from .nn.loss import ClassWeights, class_weights
from .nn.tensor import Parameter, Tensor, no_grad, params_digest
from .training import TrainConfig, fit

KERNEL_SIZES = (7, 5, 3, 3, 3)
PADDING = 1
STRIDE = 1
INPUT_CHANNELS = 3
# feature channels, in concatenation order
BRANCH_ORDER = (ClassLabel.DM, ClassLabel.GAN, ClassLabel.REAL)
MIN_FEATURE_LENGTH = 7


@dataclass(frozen=True)
class HeadConfig:
    channel_widths: tuple[int, ...] = (16, 32, 64, 64, 64)
    kernel_sizes: tuple[int, ...] = KERNEL_SIZES
    padding: int = PADDING
    stride: int = STRIDE
    input_channels: int = INPUT_CHANNELS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channel_widths", tuple(int(w) for w in self.channel_widths))
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        if self.kernel_sizes != KERNEL_SIZES or self.padding != PADDING or self.stride != STRIDE:
            raise BadConfig("head kernels (7,5,3,3,3), padding 1 and stride 1 are fixed")
        if self.input_channels != INPUT_CHANNELS:
            raise BadConfig("head input has exactly three channels")
        if len(self.channel_widths) != 5 or any(w <= 0 for w in self.channel_widths):
            raise BadConfig(f"need five positive channel widths, got {self.channel_widths}")

    def to_dict(self) -> dict:
        return {
            "channel_widths": list(self.channel_widths),
            "kernel_sizes": list(self.kernel_sizes),
            "padding": self.padding,
            "stride": self.stride,
            "input_channels": self.input_channels,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> HeadConfig:
        return cls(channel_widths=tuple(d["channel_widths"]), seed=d.get("seed", 0))


class FusionHead:
    def __init__(self, config: HeadConfig | None = None, zero_init: bool = False):
        self.config = config or HeadConfig()
        rng = np.random.default_rng([self.config.seed, 31])
        self.convs: list[tuple[Parameter, Parameter]] = []
        self.params: list[Parameter] = []
        c_prev = self.config.input_channels
        for i, (c, k) in enumerate(zip(self.config.channel_widths, self.config.kernel_sizes)):
            shape = (c, c_prev, k)
            w = zeros(shape, f"head.conv{i}.weight") if zero_init else fan_in_uniform(rng, shape, f"head.conv{i}.weight")
            b = zeros((c,), f"head.conv{i}.bias")
            self.convs.append((w, b))
            self.params += [w, b]
            c_prev = c
        shape = (len(CLASSES), c_prev)
        self.out_weight = zeros(shape, "head.linear.weight") if zero_init else fan_in_uniform(rng, shape, "head.linear.weight", gain=3.0)
        self.out_bias = zeros((len(CLASSES),), "head.linear.bias")
        self.params += [self.out_weight, self.out_bias]

    def trunk(self, x: Tensor) -> Tensor:
        """Conv stack output before pooling; length L - 6."""
        for w, b in self.convs:
            x = relu(conv1d(x, w, b, pad=self.config.padding, stride=self.config.stride))
        return x

    def forward(self, x: Tensor) -> Tensor:
        h = self.trunk(x)
        return linear(global_avg_pool(h, channel_axis=h.ndim - 2), self.out_weight, self.out_bias)

    def digest(self) -> str:
        return params_digest(self.params)


def pre_pool_length(length: int) -> int:
    for k in KERNEL_SIZES:
        length = (length + 2 * PADDING - k) // STRIDE + 1
    return length


def head_forward(x: Tensor | np.ndarray, head: FusionHead) -> Tensor:
    """(3, L) -> 3 logits, or (N, 3, L) -> (N, 3)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim not in (2, 3) or x.shape[-2] != INPUT_CHANNELS:
        raise ShapeMismatch(f"head input must be (3, L) or (N, 3, L), got {x.shape}")
    if x.shape[-1] < MIN_FEATURE_LENGTH:
        raise InputTooShort(f"feature length {x.shape[-1]} < {MIN_FEATURE_LENGTH}")
    return head.forward(x)


def concat_features(f_dm, f_gan, f_real) -> Tensor:
    """Stack the three feature vectors as channels (DM, GAN, REAL)."""
    parts = [np.asarray(f.data if isinstance(f, Tensor) else f) for f in (f_dm, f_gan, f_real)]
    if any(p.ndim != 1 for p in parts):
        raise ShapeMismatch("feature vectors must be one-dimensional")
    if len({p.shape[0] for p in parts}) != 1:
        raise LengthMismatch(f"feature lengths differ: {[p.shape[0] for p in parts]}")
    return Tensor(np.stack(parts))


@dataclass
class FusionModel:
    base_models: tuple[BaseModel, BaseModel, BaseModel]
    head: FusionHead
    class_order: tuple[ClassLabel, ...] = CLASSES
    weights: ClassWeights | None = None
    training_log: list[dict] = field(default_factory=list)
    selected_epoch: int = 0

    def __post_init__(self):
        order = tuple(bm.predominant for bm in self.base_models)
        if order != BRANCH_ORDER:
            raise BadConfig(f"base models must be ordered (DM, GAN, REAL), got {[c.name for c in order]}")
        dims = {bm.feature_dim for bm in self.base_models}
        if len(dims) != 1:
            raise LengthMismatch(f"base models disagree on feature length: {sorted(dims)}")
        if dims.pop() < MIN_FEATURE_LENGTH:
            raise InputTooShort(f"feature length must be >= {MIN_FEATURE_LENGTH}")

    @property
    def input_size(self) -> tuple[int, int]:
        return tuple(self.base_models[0].backbone.input_size)

    @property
    def feature_dim(self) -> int:
        return self.base_models[0].feature_dim

    def base_digests(self) -> dict[str, str]:
        return {bm.predominant.tag: bm.digest() for bm in self.base_models}


def build_fusion_model(base_models: Sequence[BaseModel], config: HeadConfig | None = None) -> FusionModel:
    """Order base models as (DM, GAN, REAL) regardless of how they are passed in."""
    by_class = {bm.predominant: bm for bm in base_models}
    missing = [c.name for c in BRANCH_ORDER if c not in by_class]
    if missing:
        raise BadConfig(f"missing base models for {missing}")
    return FusionModel(tuple(by_class[c] for c in BRANCH_ORDER), FusionHead(config))


def fused_features(fm: FusionModel, images: np.ndarray) -> np.ndarray:
    """(N, 3, H, W) images -> (N, 3, L) stacked features."""
    return np.stack([extract_phi_batch(bm, images) for bm in fm.base_models], axis=1)


def manifest_features(fm: FusionModel, m: Manifest, chunk: int = 64) -> np.ndarray:
    parts = []
    for s in range(0, len(m), chunk):
        parts.append(fused_features(fm, load_images(m.paths[s:s + chunk], fm.input_size)))
    if not parts:
        return np.zeros((0, INPUT_CHANNELS, fm.feature_dim), dtype=np.float32)
    return np.concatenate(parts)


def _labels(m: Manifest) -> np.ndarray:
    return np.array([int(r.label) for r in m], dtype=np.int64)


def _check_frozen(fm: FusionModel) -> None:
    for bm in fm.base_models:
        loose = [p.name for p in bm.backbone.params if not p.frozen]
        if loose or not bm.finalized:
            raise NotFrozenBase(f"{bm.predominant.name} base model has trainable parameters: {loose[:3]}")


def train_head(
    fm: FusionModel,
    train: Manifest,
    val: Manifest,
    weights: ClassWeights | None = None,
    config: TrainConfig | None = None,
) -> FusionModel:
    """Fit only the head under inverse-frequency weighted cross-entropy; restores the best validation epoch."""
    _check_frozen(fm)
    config = config or TrainConfig()
    weights = weights or class_weights(train)
    w = weights.as_array()
    x_train = manifest_features(fm, train)
    y_train = _labels(train)
    x_val = manifest_features(fm, val)
    y_val = _labels(val)

    def batch_loss(idx):
        return cross_entropy(head_forward(Tensor(x_train[idx]), fm.head), y_train[idx], w)

    def val_loss():
        with no_grad():
            return float(cross_entropy(head_forward(Tensor(x_val), fm.head), y_val, w).data)

    result = fit(fm.head.params, len(y_train), batch_loss, val_loss, config)
    fm.weights = weights
    fm.training_log = result.log
    fm.selected_epoch = result.selected_epoch
    return fm


def predict_batch(fm: FusionModel, images: np.ndarray) -> tuple[list[ClassLabel], np.ndarray]:
    """Returns (labels, probabilities); argmax ties resolve in (REAL, GAN, DM) order."""
    feats = fused_features(fm, images)
    with no_grad():
        logits = head_forward(Tensor(feats), fm.head).data
    probs = softmax(logits)
    return [fm.class_order[i] for i in np.argmax(probs, axis=1)], probs


def predict(fm: FusionModel, image: np.ndarray | Tensor) -> tuple[ClassLabel, np.ndarray]:
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    if data.ndim != 3:
        raise ShapeMismatch(f"expected a (3, H, W) image, got {data.shape}")
    labels, probs = predict_batch(fm, data[None])
    return labels[0], probs[0]


def save_fusion_model(fm: FusionModel, directory: str | Path) -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for bm in fm.base_models:
        save_base_model(bm, directory / f"base_{bm.predominant.tag}")
    head_digest = checkpoint.save(directory / "head.dfxckpt", fm.head.params)
    meta = {
        "head_config": fm.head.config.to_dict(),
        "class_order": [c.tag for c in fm.class_order],
        "branch_order": [c.tag for c in BRANCH_ORDER],
        "class_weights": fm.weights.to_dict() if fm.weights else None,
        "training_log": fm.training_log,
        "selected_epoch": fm.selected_epoch,
        "head_digest": head_digest,
        "base_digests": fm.base_digests(),
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return meta


def load_fusion_model(directory: str | Path) -> FusionModel:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    bases = tuple(load_base_model(directory / f"base_{c.tag}") for c in BRANCH_ORDER)
    head = FusionHead(HeadConfig.from_dict(meta["head_config"]))
    loaded, _ = checkpoint.load(directory / "head.dfxckpt")
    checkpoint.restore_into(head.params, loaded)
    return FusionModel(
        base_models=bases,
        head=head,
        weights=ClassWeights.from_dict(meta["class_weights"]) if meta.get("class_weights") else None,
        training_log=meta.get("training_log", []),
        selected_epoch=meta.get("selected_epoch", 0),
    )
