"""Run configuration: one JSON document, overridable with dotted ``key=value`` pairs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .backbone import BackboneConfig
from .data.benchmarks import toy_bench_specs
from .errors import ValidationError
from .fusion import HeadConfig
from .training import TrainConfig


@dataclass
class BackboneSection:
    widths: list[int] = field(default_factory=lambda: [16, 32, 64, 128])
    input_size: list[int] = field(default_factory=lambda: [64, 64])


@dataclass
class HeadSection:
    channel_widths: list[int] = field(default_factory=lambda: [16, 32, 64, 64, 64])


@dataclass
class OptimSection:
    epochs: int = 10
    learning_rate: float = 1e-2
    batch_size: int = 32


@dataclass
class RunConfig:
    corpus_root: str = "corpus"
    workdir: str = "work"
    seed: int = 0
    split_fractions: list[float] = field(default_factory=lambda: [0.4, 0.4, 0.2])
    val_fraction: float = 0.1
    unbalance_ratio: float = 0.9
    backbone: BackboneSection = field(default_factory=BackboneSection)
    head: HeadSection = field(default_factory=HeadSection)
    base_train: OptimSection = field(default_factory=OptimSection)
    head_train: OptimSection = field(default_factory=OptimSection)
    qf_list: list[int] = field(default_factory=lambda: [90, 80, 70, 60, 50])
    benches: list[dict] = field(default_factory=list)
    bench_pool: str = "test"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> RunConfig:
        return _build(cls, doc, "")

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def override(self, assignment: str) -> None:
        """Apply ``a.b=value``; the value is parsed as JSON, falling back to a bare string."""
        key, sep, raw = assignment.partition("=")
        if not sep:
            raise ValidationError(f"override {assignment!r} is not key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        *parents, leaf = key.strip().split(".")
        target = self
        for p in parents:
            if not hasattr(target, p):
                raise ValidationError(f"unknown config key {key!r}")
            target = getattr(target, p)
        if not is_dataclass(target) or leaf not in {f.name for f in fields(target)}:
            raise ValidationError(f"unknown config key {key!r}")
        setattr(target, leaf, value)

    # typed views
    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(widths=tuple(self.backbone.widths), input_size=tuple(self.backbone.input_size), seed=self.seed)

    def head_config(self) -> HeadConfig:
        return HeadConfig(channel_widths=tuple(self.head.channel_widths), seed=self.seed)

    def base_train_config(self, stream: int = 0) -> TrainConfig:
        o = self.base_train
        return TrainConfig(epochs=o.epochs, learning_rate=o.learning_rate, batch_size=o.batch_size, seed=self.seed + stream)

    def head_train_config(self) -> TrainConfig:
        o = self.head_train
        return TrainConfig(epochs=o.epochs, learning_rate=o.learning_rate, batch_size=o.batch_size, seed=self.seed)


def _build(cls, doc: dict, prefix: str):
    if not isinstance(doc, dict):
        raise ValidationError(f"config section {prefix or '<root>'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(prefix + k for k in unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in doc.items():
        current = getattr(defaults, name)
        kwargs[name] = _build(type(current), value, f"{prefix}{name}.") if is_dataclass(current) else value
    return cls(**kwargs)


def toy_config(corpus_root: str, workdir: str, seed: int = 0) -> RunConfig:
    """Settings that train the reference pipeline on the procedural corpus in a few minutes."""
    cfg = RunConfig(corpus_root=corpus_root, workdir=workdir, seed=seed)
    cfg.base_train = OptimSection(epochs=20, learning_rate=0.1, batch_size=16)
    # the loss weights are raw 1/count, so the step size scales with class size
    cfg.head_train = OptimSection(epochs=30, learning_rate=5.0, batch_size=32)
    cfg.benches = [s.to_dict() for s in toy_bench_specs(seed=seed)]
    return cfg
