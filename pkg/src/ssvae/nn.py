"""Small layers built on :mod:`ssvae.tensor`."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

STD_FLOOR = 1e-5


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class Linear:
    def __init__(self, fan_in: int, fan_out: int, rng=None, dtype=np.float32, name="linear"):
        if rng is None:
            w = np.zeros((fan_in, fan_out), dtype=dtype)
        else:
            w = _glorot(rng, fan_in, fan_out, dtype)
        self.weight = Tensor(w, requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros((1, fan_out), dtype=dtype), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.weight), self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class MLP:
    """Fully connected tanh network; no hidden sizes gives a single affine map."""

    def __init__(self, sizes: Sequence[int], rng=None, dtype=np.float32, name="mlp"):
        self.sizes = tuple(int(s) for s in sizes)
        self.layers = [
            Linear(a, b, rng, dtype, name=f"{name}.{i}")
            for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:]))
        ]

    def __call__(self, x: Tensor, final_activation=False) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or final_activation:
                x = T.tanh(x)
        return x

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


def positive_std(raw: Tensor) -> Tensor:
    return T.add(T.softplus(raw), STD_FLOOR)


class GaussianHead:
    """Affine map to (mean, stddev) with the stddev passed through softplus plus a floor."""

    def __init__(self, fan_in: int, dim: int, rng=None, dtype=np.float32, name="head"):
        self.dim = dim
        self.linear = Linear(fan_in, 2 * dim, rng, dtype, name=name)

    def __call__(self, h: Tensor) -> tuple[Tensor, Tensor]:
        out = self.linear(h)
        return out[:, : self.dim], positive_std(out[:, self.dim:])

    def parameters(self) -> list[Tensor]:
        return self.linear.parameters()


class GRUCell:
    """Gated recurrent unit; the input projection can be precomputed for a whole sequence."""

    def __init__(self, input_dim: int, hidden_dim: int, rng=None, dtype=np.float32, name="gru"):
        self.hidden_dim = hidden_dim
        self.input_proj = Linear(input_dim, 3 * hidden_dim, rng, dtype, name=f"{name}.input")
        self.hidden_proj = Linear(hidden_dim, 3 * hidden_dim, rng, dtype, name=f"{name}.hidden")

    def step(self, x_proj: Tensor, h: Tensor) -> Tensor:
        n = self.hidden_dim
        hp = self.hidden_proj(h)
        gates = T.sigmoid(T.add(x_proj[:, : 2 * n], hp[:, : 2 * n]))
        reset, update = gates[:, :n], gates[:, n:]
        candidate = T.tanh(T.add(x_proj[:, 2 * n:], T.mul(reset, hp[:, 2 * n:])))
        # h' = h + z * (c - h)
        return T.add(h, T.mul(update, T.sub(candidate, h)))

    def parameters(self) -> list[Tensor]:
        return self.input_proj.parameters() + self.hidden_proj.parameters()


def flatten_params(params: Sequence[Tensor]) -> np.ndarray:
    return np.concatenate([p.data.reshape(-1) for p in params]) if params else np.zeros(0)


def load_flat(params: Sequence[Tensor], flat: np.ndarray) -> None:
    offset = 0
    for p in params:
        n = p.data.size
        if offset + n > flat.size:
            raise ValueError(f"weights too short: need {offset + n} values at {p.name}, have {flat.size}")
        p.data = flat[offset: offset + n].reshape(p.data.shape).astype(p.data.dtype)
        offset += n
    if offset != flat.size:
        raise ValueError(f"weights length {flat.size} does not match parameter count {offset}")
