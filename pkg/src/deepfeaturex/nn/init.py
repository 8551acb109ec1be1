from __future__ import annotations

import numpy as np

from .tensor import Parameter


def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], name: str, gain: float = 6.0) -> Parameter:
    """U(-b, b) with b = sqrt(gain / fan_in); gain 6 is the He bound for relu stacks."""
    fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
    bound = np.sqrt(gain / fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape), name=name)


def zeros(shape: tuple[int, ...], name: str) -> Parameter:
    return Parameter(np.zeros(shape), name=name)
