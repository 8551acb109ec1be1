"""Confusion matrices and accuracy / recall / precision / F1.

Multiclass scores are macro averages of per-class one-vs-rest values and the
macro F1 is the mean of per-class F1s. Binary scores treat column/row 1 as
the positive class (FAKE after a collapse, PREDOMINANT for base models). A
precision or recall whose denominator is zero counts as 0 and raises a flag
on the report.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..data.manifest import CLASSES, ClassLabel
from ..errors import EmptyMatrix, LengthMismatch, ValidationError, WrongShape

MULTICLASS_NAMES = tuple(c.tag for c in CLASSES)
BINARY_NAMES = ("real", "fake")


class Mode(enum.Enum):
    MULTICLASS = "multiclass"
    BINARY = "binary"


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    classes: tuple[str, ...] = MULTICLASS_NAMES

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if counts.shape != (k, k):
            raise WrongShape(f"counts shape {counts.shape} does not match {k} classes")
        if (counts < 0).any():
            raise ValidationError("confusion counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ConfusionMatrix)
            and self.classes == other.classes
            and np.array_equal(self.counts, other.counts)
        )

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}


@dataclass(frozen=True)
class MetricsReport:
    setting: str
    mode: Mode
    accuracy: float
    recall: float
    precision: float
    f1: float
    n: int
    flags: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "mode": self.mode.value,
            "accuracy": self.accuracy,
            "recall": self.recall,
            "precision": self.precision,
            "f1": self.f1,
            "n": self.n,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        return cls(
            setting=d["setting"],
            mode=Mode(d["mode"]),
            accuracy=float(d["accuracy"]),
            recall=float(d["recall"]),
            precision=float(d["precision"]),
            f1=float(d["f1"]),
            n=int(d["n"]),
            flags=tuple(d.get("flags", ())),
        )


def _index(v) -> int:
    if isinstance(v, (ClassLabel, int, np.integer)):
        return int(v)
    return int(ClassLabel.parse(v))


def confusion_matrix(
    preds: Sequence,
    labels: Sequence,
    classes: tuple[str, ...] = MULTICLASS_NAMES,
) -> ConfusionMatrix:
    if len(preds) != len(labels):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(labels)} labels")
    if len(labels) == 0:
        raise EmptyMatrix("no samples to tally")
    k = len(classes)
    p = np.fromiter((_index(v) for v in preds), dtype=np.int64, count=len(preds))
    t = np.fromiter((_index(v) for v in labels), dtype=np.int64, count=len(labels))
    if p.min() < 0 or t.min() < 0 or p.max() >= k or t.max() >= k:
        raise ValidationError(f"class index outside [0, {k})")
    counts = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts, classes)


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def metrics_from_confusion(cm: ConfusionMatrix, mode: Mode = Mode.MULTICLASS, setting: str = "") -> MetricsReport:
    c = cm.counts
    total = cm.total
    if total == 0:
        raise EmptyMatrix("confusion matrix is empty")
    accuracy = int(np.trace(c)) / total
    flags: list[str] = []

    def pr(i: int) -> tuple[float, float]:
        tp = int(c[i, i])
        r = _ratio(tp, int(c[i, :].sum()))
        p = _ratio(tp, int(c[:, i].sum()))
        if r is None:
            flags.append(f"recall_undefined:{cm.classes[i]}")
        if p is None:
            flags.append(f"precision_undefined:{cm.classes[i]}")
        return (p or 0.0), (r or 0.0)

    if mode is Mode.BINARY:
        if c.shape != (2, 2):
            raise WrongShape(f"binary metrics need a 2x2 matrix, got {c.shape}")
        precision, recall = pr(1)
        f1 = _f1(precision, recall)
    else:
        per = [pr(i) for i in range(c.shape[0])]
        precision = sum(p for p, _ in per) / len(per)
        recall = sum(r for _, r in per) / len(per)
        f1 = sum(_f1(p, r) for p, r in per) / len(per)
    return MetricsReport(setting, mode, accuracy, recall, precision, f1, total, tuple(flags))


def collapse_binary(cm: ConfusionMatrix) -> ConfusionMatrix:
    """Merge GAN and DM rows/columns into FAKE; REAL stays at index 0."""
    c = cm.counts
    if c.shape != (3, 3):
        raise WrongShape(f"collapse needs a 3x3 matrix, got {c.shape}")
    fake = [int(ClassLabel.GAN), int(ClassLabel.DM)]
    real = int(ClassLabel.REAL)
    out = np.array(
        [
            [c[real, real], c[real, fake].sum()],
            [c[fake, real].sum(), c[np.ix_(fake, fake)].sum()],
        ],
        dtype=np.int64,
    )
    return ConfusionMatrix(out, BINARY_NAMES)


def collapse_labels(values: Sequence) -> list[int]:
    """Per-sample collapse: REAL -> 0, GAN/DM -> 1."""
    return [0 if _index(v) == int(ClassLabel.REAL) else 1 for v in values]
