"""Tensors and the tape that records operations on them for reverse mode.

Operations run eagerly. While a :class:`Tape` is active (``with Tape() as
tape:``) every operation whose inputs require gradients is appended to the
tape in execution order, which is already a topological order. Calling
``tape.backward(output)`` walks the records in reverse and leaves the
gradient of ``output`` in the ``grad`` buffer of every leaf tensor that
requires it.

Outside a tape operations still work, they simply record nothing, which is
the cheap path for inference.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import NumericalError, ShapeError

LEAKY_SLOPE = 0.01

_local = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("values", "grad", "requires_grad", "name", "_leaf")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        self.values = np.array(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad = np.zeros_like(self.values) if requires_grad else None
        self._leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class TapeRecord:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of primitive operations for one forward pass."""

    def __init__(self):
        self.records: list[TapeRecord] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:
            stack.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def _record(self, op, inputs, output, backward) -> None:
        self.records.append(TapeRecord(op, tuple(inputs), output, backward))

    def leaves(self) -> list[Tensor]:
        seen: dict[int, Tensor] = {}
        for rec in self.records:
            for t in rec.inputs:
                if t._leaf and t.requires_grad:
                    seen.setdefault(id(t), t)
        return list(seen.values())

    def backward(self, output: Tensor, seed=None, params: Iterable[Tensor] = ()) -> None:
        """Propagate ``seed`` (default ones) from ``output`` back to the leaves.

        Leaf gradient buffers are reset to zero first, so the result is the
        gradient of this call alone. ``params`` lists extra trainable tensors
        to zero even if they did not take part in the recorded pass.
        """
        if not self.records:
            raise NumericalError("backward called before any forward operation was recorded")
        if seed is None:
            seed = np.ones_like(output.values)
        else:
            seed = np.asarray(seed.values if isinstance(seed, Tensor) else seed, dtype=np.float64)
            if seed.shape != output.shape:
                raise ShapeError(f"seed gradient shape {seed.shape} does not match output shape {output.shape}")
        leaves = self.leaves()
        for t in list(params) + leaves:
            if t.requires_grad:
                t.grad = np.zeros_like(t.values)
        if output._leaf:
            if output.requires_grad:
                output.grad = output.grad + seed
            return
        if not any(rec.output is output for rec in self.records):
            raise NumericalError("output tensor was not produced on this tape")

        grads: dict[int, np.ndarray] = {id(output): seed}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            in_grads = rec.backward(g)
            for inp, gi in zip(rec.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                if inp._leaf:
                    inp.grad = inp.grad + gi
                else:
                    key = id(inp)
                    prev = grads.get(key)
                    grads[key] = gi if prev is None else prev + gi


def _check_finite(op: str, values: np.ndarray) -> None:
    if not np.isfinite(values).all():
        raise NumericalError(f"{op}: produced a non-finite value")


def _make(op: str, inputs: Sequence[Tensor], values: np.ndarray, backward) -> Tensor:
    values = np.asarray(values)
    _check_finite(op, values)
    out = Tensor.__new__(Tensor)
    out.values = values
    out.name = None
    out.grad = None
    out._leaf = False
    out.requires_grad = any(t.requires_grad for t in inputs)
    if out.requires_grad:
        tape = active_tape()
        if tape is not None:
            tape._record(op, inputs, out, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(op: str, a: Tensor, b: Tensor, fn):
    try:
        with np.errstate(all="ignore"):
            return fn(a.values, b.values)
    except ValueError as exc:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from exc


# --- elementwise arithmetic -------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _binary("add", a, b, np.add)
    return _make("add", (a, b), out, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _binary("sub", a, b, np.subtract)
    return _make("sub", (a, b), out, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _binary("mul", a, b, np.multiply)

    def backward(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _make("mul", (a, b), out, backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _binary("div", a, b, np.divide)

    def backward(g):
        return (
            _unbroadcast(g / b.values, a.shape),
            _unbroadcast(-g * a.values / (b.values * b.values), b.shape),
        )

    return _make("div", (a, b), out, backward)


def neg(a: Tensor) -> Tensor:
    return _make("neg", (a,), -a.values, lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    return _make("square", (a,), a.values * a.values, lambda g: (2.0 * a.values * g,))


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _binary("minimum", a, b, np.minimum)

    def backward(g):
        take_a = a.values <= b.values
        return _unbroadcast(np.where(take_a, g, 0.0), a.shape), _unbroadcast(np.where(take_a, 0.0, g), b.shape)

    return _make("minimum", (a, b), out, backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.values, lo, hi)
    inside = (a.values >= lo) & (a.values <= hi)
    return _make("clip", (a,), out, lambda g: (np.where(inside, g, 0.0),))


# --- activations ------------------------------------------------------------


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    scale = np.where(a.values > 0, 1.0, slope)
    return _make("leaky_relu", (a,), a.values * scale, lambda g: (g * scale,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)
    return _make("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so exp never overflows
    x = a.values
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.values)
    return _make("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.values)
    return _make("log", (a,), out, lambda g: (g / a.values,))


def identity(a: Tensor) -> Tensor:
    return a


# --- linear algebra and reductions -----------------------------------------


def matmul(a, b) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., n) and a 2-D ``b`` of shape (n, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.values @ b.values

    def backward(g):
        ga = g @ b.values.T
        a2 = a.values.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return _make("matmul", (a, b), out, backward)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.asarray(a.values.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make("sum", (a,), out, backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def mse(pred, target) -> Tensor:
    """Mean squared error over every element."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: prediction shape {pred.shape} differs from target shape {target.shape}")
    diff = pred.values - target.values
    n = max(diff.size, 1)
    out = np.asarray(np.sum(diff * diff) / n)

    def backward(g):
        gd = (2.0 / n) * g * diff
        return gd, -gd

    return _make("mse", (pred, target), out, backward)


# --- shape manipulation -----------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    try:
        out = a.values.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from exc
    return _make("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, np.integer)) or p is Ellipsis or p is None for p in parts)


def getitem(a: Tensor, index) -> Tensor:
    try:
        out = a.values[index]
    except IndexError as exc:
        raise ShapeError(f"getitem: index {index!r} invalid for shape {a.shape}") from exc
    basic = _is_basic(index)

    def backward(g):
        full = np.zeros_like(a.values)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make("getitem", (a,), np.asarray(out), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make("concat", tensors, out, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.values for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: incompatible shapes {[t.shape for t in tensors]}") from exc

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make("stack", tensors, out, backward)
