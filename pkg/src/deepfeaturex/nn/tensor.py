"""Reverse-mode autodiff on top of numpy arrays."""

from __future__ import annotations

import contextlib
import hashlib
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import NoGraph

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """n-dimensional array with an optional gradient slot.

    Operations on tensors that require gradients record a backward closure;
    ``backward`` walks the recorded graph in reverse topological order.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def sum(self) -> Tensor:
        out = record(np.asarray(self.data.sum()), (self,))
        if out._parents:
            shape = self.shape
            out._backward = lambda g: self.accumulate_grad(np.broadcast_to(g, shape))
        return out

    def __mul__(self, other) -> Tensor:
        other_data = other.data if isinstance(other, Tensor) else np.asarray(other)
        parents = (self, other) if isinstance(other, Tensor) else (self,)
        out = record(self.data * other_data, parents)
        if out._parents:
            def backward(g):
                if self.requires_grad:
                    self.accumulate_grad(_unbroadcast(g * other_data, self.shape))
                if isinstance(other, Tensor) and other.requires_grad:
                    other.accumulate_grad(_unbroadcast(g * self.data, other.shape))
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __add__(self, other) -> Tensor:
        other_data = other.data if isinstance(other, Tensor) else np.asarray(other)
        parents = (self, other) if isinstance(other, Tensor) else (self,)
        out = record(self.data + other_data, parents)
        if out._parents:
            def backward(g):
                if self.requires_grad:
                    self.accumulate_grad(_unbroadcast(g, self.shape))
                if isinstance(other, Tensor) and other.requires_grad:
                    other.accumulate_grad(_unbroadcast(g, other.shape))
            out._backward = backward
        return out

    __radd__ = __add__

    def backward(self, grad: np.ndarray | None = None) -> None:
        if self._backward is None:
            if self.requires_grad and not self._parents:
                # leaf: d(self)/d(self) is the identity
                self.accumulate_grad(np.ones_like(self.data) if grad is None else grad)
                return
            raise NoGraph("tensor was not produced by a recorded computation")
        if grad is None:
            if self.data.size != 1:
                raise NoGraph("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in order:
            if node._backward is None or node.grad is None:
                continue
            g, node.grad = node.grad, None
            node._backward(g)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def record(data: np.ndarray, parents: Sequence[Tensor]) -> Tensor:
    """Wrap an op result; keep graph links only if a parent needs gradients."""
    out = Tensor(data)
    if _grad_enabled:
        tracked = tuple(p for p in parents if p.requires_grad or p._backward is not None)
        if tracked:
            out._parents = tracked
            out.requires_grad = True
    return out


class Parameter(Tensor):
    __slots__ = ("name", "frozen")

    def __init__(self, data, name: str, frozen: bool = False, dtype=np.float32):
        super().__init__(np.array(data, dtype=dtype, copy=True), requires_grad=not frozen)
        self.name = name
        self.frozen = frozen

    def freeze(self) -> None:
        self.frozen = True
        self.requires_grad = False
        self.grad = None

    def unfreeze(self) -> None:
        self.frozen = False
        self.requires_grad = True

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, frozen={self.frozen})"


def payload_bytes(params: Iterable[Parameter]) -> bytes:
    """Little-endian float32 bytes of all parameter values, in order."""
    return b"".join(np.ascontiguousarray(p.data, dtype="<f4").tobytes() for p in params)


def params_digest(params: Iterable[Parameter]) -> str:
    return hashlib.sha256(payload_bytes(params)).hexdigest()
