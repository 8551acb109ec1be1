"""Exception hierarchy.

``ValidationError`` subclasses signal bad inputs or violated preconditions
(CLI exit code 3); everything else deriving from ``DeepFeatureXError`` is a
runtime failure (exit code 1).
"""

from __future__ import annotations


class DeepFeatureXError(Exception):
    pass


class ValidationError(DeepFeatureXError, ValueError):
    pass


# data pipeline
class EmptyCorpus(ValidationError):
    pass


class UnreadableImage(DeepFeatureXError):
    def __init__(self, path, reason: str = ""):
        self.path = str(path)
        super().__init__(f"cannot decode image {self.path}" + (f": {reason}" if reason else ""))


class EncodeFailure(DeepFeatureXError):
    def __init__(self, path, qf: int, reason: str = ""):
        self.path = str(path)
        self.qf = qf
        super().__init__(f"JPEG encode failed for {self.path} at QF {qf}" + (f": {reason}" if reason else ""))


class BadFractions(ValidationError):
    pass


class TooFewRecords(ValidationError):
    pass


class MissingClass(ValidationError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"class {getattr(label, 'name', label)} is absent")


class InsufficientOthers(ValidationError):
    pass


class InsufficientPool(ValidationError):
    def __init__(self, tag: str, needed: int, available: int):
        self.tag, self.needed, self.available = tag, needed, available
        super().__init__(f"tag {tag!r}: needed {needed}, available {available}")


class DuplicatePath(ValidationError):
    pass


# numeric substrate
class ShapeMismatch(ValidationError):
    pass


class KernelTooLarge(ShapeMismatch):
    pass


class EmptyBatch(ValidationError):
    pass


class NoGraph(DeepFeatureXError):
    pass


class MissingGradient(DeepFeatureXError):
    pass


class CheckpointError(DeepFeatureXError):
    pass


# models
class BadConfig(ValidationError):
    pass


class NotFinalized(DeepFeatureXError):
    pass


class MissingOtherClass(ValidationError):
    pass


class NotFrozenBase(ValidationError):
    pass


class DivergedLoss(DeepFeatureXError):
    pass


class InputTooShort(ShapeMismatch):
    pass


class LengthMismatch(ValidationError):
    pass


# evaluation
class EmptyTestSet(ValidationError):
    pass


class EmptyBench(ValidationError):
    pass


class EmptyMatrix(ValidationError):
    pass


class WrongShape(ValidationError):
    pass


class IoFailure(DeepFeatureXError):
    pass
