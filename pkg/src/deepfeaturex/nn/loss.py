from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..data.manifest import CLASSES, ClassLabel, Manifest
from ..errors import MissingClass, ValidationError
from .functional import cross_entropy
from .tensor import Tensor


@dataclass(frozen=True)
class ClassWeights:
    """Per-class loss weights, indexed in logit order (REAL, GAN, DM)."""

    w: Mapping[ClassLabel, float]

    def __post_init__(self):
        for c in CLASSES:
            v = self.w.get(c)
            if v is None or not v > 0:
                raise ValidationError(f"class weight for {c.name} must be positive, got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.w[c] for c in CLASSES], dtype=np.float64)

    def to_dict(self) -> dict[str, float]:
        return {c.tag: float(self.w[c]) for c in CLASSES}

    @classmethod
    def from_dict(cls, doc: Mapping[str, float]) -> ClassWeights:
        return cls({ClassLabel.parse(k): float(v) for k, v in doc.items()})

    @classmethod
    def uniform(cls) -> ClassWeights:
        return cls({c: 1.0 for c in CLASSES})


def class_weights(m: Manifest) -> ClassWeights:
    """Inverse class frequency, w_c = 1 / count_c, left unnormalized."""
    counts = m.class_counts()
    for c in CLASSES:
        if counts[c] == 0:
            raise MissingClass(c)
    return ClassWeights({c: 1.0 / counts[c] for c in CLASSES})


def weighted_cross_entropy(logits: Tensor, labels: Sequence[ClassLabel | int], weights: ClassWeights) -> Tensor:
    targets = [int(ClassLabel.parse(y)) for y in labels]
    return cross_entropy(logits, targets, weights.as_array())
