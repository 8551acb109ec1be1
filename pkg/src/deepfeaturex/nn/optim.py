from __future__ import annotations

from typing import Iterable

from ..errors import MissingGradient, ValidationError
from .tensor import Parameter


def sgd_step(params: Iterable[Parameter], learning_rate: float) -> None:
    """Plain gradient descent on trainable parameters, then clear all gradients.

    Frozen parameters are skipped. A trainable parameter without a gradient
    is an error, since it means the loss never reached it.
    """
    if not learning_rate > 0:
        raise ValidationError(f"learning rate must be positive, got {learning_rate}")
    params = list(params)
    for p in params:
        if not p.frozen and p.grad is None:
            raise MissingGradient(f"parameter {p.name} has no gradient")
    for p in params:
        if not p.frozen:
            p.data -= (learning_rate * p.grad).astype(p.data.dtype, copy=False)
        p.grad = None


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad = None
