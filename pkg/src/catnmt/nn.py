"""Small neural building blocks: initialization, linear maps, GRU cells.

Weight matrices draw from uniform Glorot; biases start at zero.  Attention
score heads start at zero too, which makes every freshly built attention
distribution exactly uniform (a useful known start state for tests).
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as tt
from .tensor import Tensor


def glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Linear:
    """Affine map over the last axis: y = x @ w + b."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int,
                 name: str, zero_weight: bool = False):
        self.name = name
        w0 = np.zeros((n_in, n_out)) if zero_weight else glorot(rng, (n_in, n_out))
        self.w = Tensor(w0, requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim == 2:
            return tt.add_bias(tt.matmul(x, self.w), self.b)
        lead = x.data.shape[:-1]
        flat = tt.reshape(x, (-1, x.data.shape[-1]))
        out = tt.add_bias(tt.matmul(flat, self.w), self.b)
        return tt.reshape(out, (*lead, self.w.data.shape[1]))

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield f"{self.name}.w", self.w
        yield f"{self.name}.b", self.b


class Embedding:
    """Token-id to vector table."""

    def __init__(self, rng: np.random.Generator, vocab_size: int, dim: int, name: str):
        self.name = name
        self.table = Tensor(glorot(rng, (vocab_size, dim)), requires_grad=True)

    def __call__(self, ids: np.ndarray) -> Tensor:
        return tt.lookup(self.table, ids)

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield f"{self.name}.table", self.table


class GRUCell:
    """Gated recurrent unit with the update convention

        r = sigmoid(x W_r + h U_r + b_r)
        z = sigmoid(x W_z + h U_z + b_z)
        c = tanh(x W_h + (r * h) U_h + b_h)
        h' = (1 - z) * h + z * c

    With every parameter zero the state halves each step (z = 1/2, c = 0).
    """

    def __init__(self, rng: np.random.Generator, n_in: int, n_hidden: int, name: str):
        self.name = name
        self.n_hidden = n_hidden
        def mat(rows, cols):
            return Tensor(glorot(rng, (rows, cols)), requires_grad=True)
        self.w_r, self.u_r = mat(n_in, n_hidden), mat(n_hidden, n_hidden)
        self.w_z, self.u_z = mat(n_in, n_hidden), mat(n_hidden, n_hidden)
        self.w_h, self.u_h = mat(n_in, n_hidden), mat(n_hidden, n_hidden)
        self.b_r = Tensor(np.zeros(n_hidden), requires_grad=True)
        self.b_z = Tensor(np.zeros(n_hidden), requires_grad=True)
        self.b_h = Tensor(np.zeros(n_hidden), requires_grad=True)

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        r = tt.sigmoid(tt.add_bias(tt.add(tt.matmul(x, self.w_r),
                                          tt.matmul(h, self.u_r)), self.b_r))
        z = tt.sigmoid(tt.add_bias(tt.add(tt.matmul(x, self.w_z),
                                          tt.matmul(h, self.u_z)), self.b_z))
        c = tt.tanh(tt.add_bias(tt.add(tt.matmul(x, self.w_h),
                                       tt.matmul(tt.mul(r, h), self.u_h)), self.b_h))
        # (1-z)*h + z*c written as h + z*(c - h) to avoid a ones constant
        return tt.add(h, tt.mul(z, tt.sub(c, h)))

    def initial_state(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.n_hidden)))

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for gate in ("r", "z", "h"):
            yield f"{self.name}.w_{gate}", getattr(self, f"w_{gate}")
            yield f"{self.name}.u_{gate}", getattr(self, f"u_{gate}")
            yield f"{self.name}.b_{gate}", getattr(self, f"b_{gate}")


class LayerNorm:
    """Learned gain/bias layer normalization over the last axis."""

    def __init__(self, width: int, name: str, eps: float = 1e-6):
        self.name = name
        self.eps = eps
        self.gain = Tensor(np.ones(width), requires_grad=True)
        self.bias = Tensor(np.zeros(width), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return tt.layer_norm(x, self.gain, self.bias, eps=self.eps)

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield f"{self.name}.gain", self.gain
        yield f"{self.name}.bias", self.bias
