"""Trainable building blocks: dense layers, the LSTM cell and small MLPs."""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from ..errors import ShapeError
from . import tensor as T
from .tensor import Tensor

ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "leaky_relu": T.leaky_relu,
    "tanh": T.tanh,
    "sigmoid": T.sigmoid,
    "linear": T.identity,
}


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Module:
    """Container of named parameters and child modules.

    Registration order defines the order of ``named_parameters``, which in
    turn fixes the layout of serialized snapshots.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._modules: dict[str, Module] = {}

    def add_param(self, name: str, values: np.ndarray) -> Tensor:
        t = Tensor(values, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ShapeError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"parameter {name}: expected shape {p.shape}, got {arr.shape}")
            p.values = arr.copy()

    def shape_manifest(self) -> dict[str, tuple[int, ...]]:
        return {name: p.shape for name, p in self.named_parameters()}

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))


class Dense(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise ShapeError(f"Dense needs positive sizes, got {in_features}->{out_features}")
        self.in_features, self.out_features = in_features, out_features
        w = glorot_uniform(rng, in_features, out_features) if rng is not None else np.zeros((in_features, out_features))
        self.W = self.add_param("W", w)
        self.b = self.add_param("b", np.zeros(out_features))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"Dense expects last dimension {self.in_features}, got shape {x.shape}")
        return T.matmul(x, self.W) + self.b


class MLP(Module):
    """Stack of dense layers with a shared hidden activation."""

    def __init__(self, sizes: list[int], rng: np.random.Generator | None, activation: str = "tanh",
                 out_activation: str = "linear"):
        super().__init__()
        if len(sizes) < 2:
            raise ShapeError("MLP needs at least input and output sizes")
        self.layers = [self.add_module(f"l{i}", Dense(a, b, rng)) for i, (a, b) in enumerate(zip(sizes, sizes[1:]))]
        self.activation = ACTIVATIONS[activation]
        self.out_activation = ACTIVATIONS[out_activation]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = self.activation(layer(x))
        return self.out_activation(self.layers[-1](x))


class LSTMCell(Module):
    """Gated recurrent cell with fused gate parameters.

    ``W`` is (input, 4*hidden), ``U`` is (hidden, 4*hidden) and ``b`` is
    (4*hidden,), with gate blocks ordered input, forget, output, candidate.
    Each block is initialised separately with its own Glorot bound.
    """

    GATES = ("input", "forget", "output", "candidate")

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator | None = None):
        super().__init__()
        if input_size < 1 or hidden_size < 1:
            raise ShapeError(f"LSTMCell needs positive sizes, got {input_size}, {hidden_size}")
        self.input_size, self.hidden_size = input_size, hidden_size
        H = hidden_size
        if rng is None:
            w, u = np.zeros((input_size, 4 * H)), np.zeros((H, 4 * H))
        else:
            w = np.concatenate([glorot_uniform(rng, input_size, H) for _ in range(4)], axis=1)
            u = np.concatenate([glorot_uniform(rng, H, H) for _ in range(4)], axis=1)
        self.W = self.add_param("W", w)
        self.U = self.add_param("U", u)
        self.b = self.add_param("b", np.zeros(4 * H))

    def gate_params(self, gate: str) -> dict[str, np.ndarray]:
        k = self.GATES.index(gate)
        sl = slice(k * self.hidden_size, (k + 1) * self.hidden_size)
        return {"W": self.W.values[:, sl], "U": self.U.values[:, sl], "b": self.b.values[sl]}

    def step(self, xw_t: Tensor, h: Tensor | None, c: Tensor | None) -> tuple[Tensor, Tensor]:
        """One cell application given the precomputed input projection ``x W + b``."""
        H = self.hidden_size
        gates = xw_t if h is None else xw_t + T.matmul(h, self.U)
        sig = T.sigmoid(gates[..., : 3 * H])
        i, f, o = sig[..., :H], sig[..., H : 2 * H], sig[..., 2 * H :]
        g = T.tanh(gates[..., 3 * H :])
        c_new = i * g if c is None else f * c + i * g
        h_new = o * T.tanh(c_new)
        return h_new, c_new

    def run(self, sequence: Tensor) -> list[Tensor]:
        """Unroll over ``sequence`` of shape (steps, input) or (batch, steps, input)."""
        if sequence.ndim not in (2, 3) or sequence.shape[-1] != self.input_size:
            raise ShapeError(f"LSTMCell expects (..., steps, {self.input_size}), got {sequence.shape}")
        steps = sequence.shape[-2]
        if steps < 1:
            raise ShapeError("recurrent input sequence is empty")
        xw = T.matmul(sequence, self.W) + self.b
        h = c = None
        hiddens = []
        for t in range(steps):
            h, c = self.step(xw[..., t, :], h, c)
            hiddens.append(h)
        return hiddens

    def __call__(self, sequence: Tensor) -> Tensor:
        """Final hidden state."""
        return self.run(sequence)[-1]


def recurrent_forward(cell: LSTMCell, sequence: Tensor) -> Tensor:
    """Hidden state at every step, stacked along the step axis."""
    return T.stack(cell.run(sequence), axis=sequence.ndim - 2)
