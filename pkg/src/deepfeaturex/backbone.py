"""Feature-extractor backbones and the binary head used while training them."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import BadConfig, CheckpointError, ShapeMismatch
from .nn import checkpoint
from .nn.functional import avg_pool2d, conv2d, global_avg_pool, linear, relu
from .nn.init import fan_in_uniform, zeros
from .nn.tensor import Parameter, Tensor, params_digest


class FeatureExtractor(Protocol):
    """What a Base Model needs from a backbone: image batch -> (N, C, H', W') feature map."""

    feature_channels: int
    input_size: tuple[int, int]
    params: list[Parameter]

    def forward(self, batch: Tensor) -> Tensor: ...

    def architecture(self) -> dict: ...


@dataclass(frozen=True)
class BackboneConfig:
    widths: tuple[int, ...] = (16, 32, 64, 128)
    input_size: tuple[int, int] = (64, 64)
    in_channels: int = 3
    seed: int = 0
    depth: int | None = None
    # fixed affine map applied to [0, 1] pixels before the first conv
    input_mean: float = 0.5
    input_std: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "input_size", tuple(int(s) for s in self.input_size))
        if self.depth is not None and self.depth != len(self.widths):
            raise BadConfig(f"depth {self.depth} does not match {len(self.widths)} widths")
        if len(self.widths) < 2:
            raise BadConfig("reference backbone needs depth >= 2")
        if not self.input_std > 0:
            raise BadConfig("input_std must be positive")
        if any(w <= 0 for w in self.widths) or self.in_channels <= 0:
            raise BadConfig("channel widths must be positive")
        h, w = self.input_size
        if h >> len(self.widths) == 0 or w >> len(self.widths) == 0:
            raise BadConfig(f"input {h}x{w} collapses to nothing after {len(self.widths)} halvings")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["input_size"] = list(self.input_size)
        d.pop("depth")
        return d


class Backbone:
    """Reference mini-CNN: per block conv3x3(pad 1) -> relu -> 2x2 average pool.

    Odd spatial extents are floored by the pooling, so a 70x70 input and a
    64x64 input give the same 4x4 map at depth 4.
    """

    arch = "reference-cnn"

    def __init__(self, config: BackboneConfig | None = None):
        self.config = config or BackboneConfig()
        rng = np.random.default_rng([self.config.seed, 17])
        self.params: list[Parameter] = []
        self._blocks: list[tuple[Parameter, Parameter]] = []
        c_prev = self.config.in_channels
        for i, c in enumerate(self.config.widths):
            w = fan_in_uniform(rng, (c, c_prev, 3, 3), f"backbone.conv{i}.weight")
            b = zeros((c,), f"backbone.conv{i}.bias")
            self._blocks.append((w, b))
            self.params += [w, b]
            c_prev = c

    @property
    def feature_channels(self) -> int:
        return self.config.widths[-1]

    @property
    def input_size(self) -> tuple[int, int]:
        return self.config.input_size

    @property
    def output_spatial(self) -> tuple[int, int]:
        h, w = self.input_size
        for _ in self.config.widths:
            h, w = h // 2, w // 2
        return h, w

    @property
    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params)

    def digest(self) -> str:
        return params_digest(self.params)

    def forward(self, batch: Tensor) -> Tensor:
        x = (batch + (-self.config.input_mean)) * (1.0 / self.config.input_std)
        for w, b in self._blocks:
            x = avg_pool2d(relu(conv2d(x, w, b, pad=1, stride=1)), 2)
        return x

    def architecture(self) -> dict:
        return {"arch": self.arch, **self.config.to_dict()}


ARCHITECTURES: dict[str, Callable[[dict], FeatureExtractor]] = {
    "reference-cnn": lambda cfg: Backbone(
        BackboneConfig(
            widths=tuple(cfg["widths"]),
            input_size=tuple(cfg["input_size"]),
            in_channels=cfg.get("in_channels", 3),
            seed=cfg.get("seed", 0),
            input_mean=cfg.get("input_mean", 0.5),
            input_std=cfg.get("input_std", 0.25),
        )
    ),
}


def register_architecture(name: str, factory: Callable[[dict], FeatureExtractor]) -> None:
    """Make an external extractor loadable from a checkpoint whose sidecar names ``name``."""
    ARCHITECTURES[name] = factory


def build_reference_backbone(config: BackboneConfig | None = None, **overrides) -> Backbone:
    if config is None:
        config = BackboneConfig(**overrides)
    elif overrides:
        raise BadConfig("pass either a config or keyword overrides, not both")
    return Backbone(config)


def forward_features(b: FeatureExtractor, batch: Tensor | np.ndarray) -> Tensor:
    batch = batch if isinstance(batch, Tensor) else Tensor(batch)
    if batch.ndim != 4 or batch.shape[1] != 3:
        raise ShapeMismatch(f"expected (N, 3, H, W) batch, got {batch.shape}")
    if tuple(batch.shape[2:]) != tuple(b.input_size):
        raise ShapeMismatch(f"expected {tuple(b.input_size)} images, got {batch.shape[2:]}")
    return b.forward(batch)


class BinaryHead:
    """GAP over the feature map, then linear C -> 2 (index 1 = predominant)."""

    def __init__(self, channels: int, seed: int = 0, zero_init: bool = False):
        if zero_init:
            self.weight = zeros((2, channels), "head.linear.weight")
        else:
            rng = np.random.default_rng([seed, 29])
            self.weight = fan_in_uniform(rng, (2, channels), "head.linear.weight", gain=3.0)
        self.bias = zeros((2,), "head.linear.bias")
        self.params = [self.weight, self.bias]

    def forward(self, fmap: Tensor) -> Tensor:
        return linear(global_avg_pool(fmap, channel_axis=1), self.weight, self.bias)


class BinaryClassifier:
    def __init__(self, backbone: FeatureExtractor, head: BinaryHead):
        self.backbone = backbone
        self.head = head

    @property
    def params(self) -> list[Parameter]:
        return list(self.backbone.params) + list(self.head.params)

    def forward(self, batch: Tensor) -> Tensor:
        return self.head.forward(forward_features(self.backbone, batch))

    def strip(self) -> tuple[FeatureExtractor, BinaryHead]:
        return self.backbone, self.head


def attach_binary_head(b: FeatureExtractor, seed: int = 0, zero_init: bool = False) -> BinaryClassifier:
    return BinaryClassifier(b, BinaryHead(b.feature_channels, seed=seed, zero_init=zero_init))


def freeze(model):
    """Mark every parameter of ``model`` (anything with ``.params``) frozen. Idempotent."""
    for p in model.params:
        p.freeze()
    return model


def save_backbone(path: str | Path, b: FeatureExtractor) -> str:
    path = Path(path)
    digest = checkpoint.save(path, b.params, meta={"architecture": b.architecture()})
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(b.architecture(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return digest


def load_backbone(path: str | Path) -> FeatureExtractor:
    path = Path(path)
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        raise CheckpointError(f"missing architecture sidecar {sidecar}")
    arch = json.loads(sidecar.read_text(encoding="utf-8"))
    factory = ARCHITECTURES.get(arch.get("arch"))
    if factory is None:
        raise CheckpointError(f"unknown architecture {arch.get('arch')!r}")
    b = factory(arch)
    loaded, _ = checkpoint.load(path)
    checkpoint.restore_into(b.params, loaded)
    return b


def stack_images(images: Sequence[np.ndarray]) -> Tensor:
    return Tensor(np.stack(images).astype(np.float32, copy=False))
