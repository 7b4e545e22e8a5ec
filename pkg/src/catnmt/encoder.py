"""Source-side encoding: bidirectional GRU states and the fixed-size combiners.

The inner attention scores the raw recurrent states (width u), normalizes
each head across time with PAD positions masked to exact zeros, and averages
a learned projection of the states, giving a heads x row_width sentence
matrix whose row-major flattening is the sentence embedding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as tt
from .nn import GRUCell, glorot
from .tensor import Tensor


@dataclass
class EncodedSource:
    """Everything the decoder side may need about one encoded batch."""

    H: Tensor                    # (B, T, u) bidirectional states
    mask: np.ndarray             # (B, T) 0/1
    fwd_final: Tensor            # (B, u/2) forward state at the last real token
    bwd_first: Tensor            # (B, u/2) backward state at the first token
    A: Tensor | None = None      # (B, r, T) inner attention, rows sum to 1
    M: Tensor | None = None      # (B, r, p) structured sentence matrix
    embedding: Tensor | None = None  # (B, size) fixed-size vector, arch dependent
    dec_keys: Tensor | None = None   # cached projected keys for decoder attention


class BiGruEncoder:
    """Two GRU passes over the embedded sequence; states carry through PAD.

    Because PAD steps re-emit the previous state, the forward loop variable
    ends at the last real token's state and the backward loop variable ends
    at position 0, no matter how much padding a row has.
    """

    def __init__(self, rng: np.random.Generator, n_in: int, n_hidden: int, name: str):
        self.fwd = GRUCell(rng, n_in, n_hidden, f"{name}.fwd")
        self.bwd = GRUCell(rng, n_in, n_hidden, f"{name}.bwd")

    def run(self, xs: list[Tensor], mask: np.ndarray) -> tuple[Tensor, Tensor, Tensor]:
        B = xs[0].data.shape[0]
        T = len(xs)
        h = self.fwd.initial_state(B)
        fwd_states: list[Tensor] = []
        for t in range(T):
            h = tt.masked_update(self.fwd.step(xs[t], h), h, mask[:, t : t + 1])
            fwd_states.append(h)
        g = self.bwd.initial_state(B)
        bwd_states: list[Tensor | None] = [None] * T
        for t in range(T - 1, -1, -1):
            g = tt.masked_update(self.bwd.step(xs[t], g), g, mask[:, t : t + 1])
            bwd_states[t] = g
        H = tt.stack(
            [tt.concat([f, b], axis=1) for f, b in zip(fwd_states, bwd_states)],
            axis=1)
        return H, h, g

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self.fwd.named_parameters()
        yield from self.bwd.named_parameters()


class InnerAttention:
    """Multi-head attention of the sentence over itself.

    Per head j and position t: score_jt = u_j . tanh(W h_t), normalized with
    softmax across t (PAD masked out).  The score head must start random:
    at zero every head would see identical gradients and stay tied forever.
    The sentence matrix averages projected states: M = A (H P).
    """

    def __init__(self, rng: np.random.Generator, state_width: int, score_width: int,
                 heads: int, row_width: int, name: str):
        self.name = name
        self.heads = heads
        self.row_width = row_width
        self.w_score = Tensor(glorot(rng, (state_width, score_width)), requires_grad=True)
        self.u_score = Tensor(glorot(rng, (score_width, heads)), requires_grad=True)
        self.proj = Tensor(glorot(rng, (state_width, row_width)), requires_grad=True)

    def __call__(self, H: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        B, T, u = H.data.shape
        flat = tt.reshape(H, (B * T, u))
        scores = tt.matmul(tt.tanh(tt.matmul(flat, self.w_score)), self.u_score)
        scores = tt.transpose(tt.reshape(scores, (B, T, self.heads)), (0, 2, 1))
        A = tt.softmax(scores, axis=2, mask=mask[:, None, :].astype(bool))
        projected = tt.reshape(tt.matmul(flat, self.proj), (B, T, self.row_width))
        M = tt.bmm(A, projected)
        return A, M

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield f"{self.name}.w_score", self.w_score
        yield f"{self.name}.u_score", self.u_score
        yield f"{self.name}.proj", self.proj


def flatten_matrix(M: Tensor) -> Tensor:
    """Row-major (head-major) flattening of (B, r, p) into (B, r*p)."""
    B, r, p = M.data.shape
    return tt.reshape(M, (B, r * p))


def pool_states(H: Tensor, mask: np.ndarray, mode: str) -> Tensor:
    """Average or per-feature max over unmasked positions."""
    if mode == "avg":
        return tt.masked_mean(H, mask)
    if mode == "max":
        return tt.masked_max(H, mask)
    raise ValueError(f"unknown pooling mode {mode!r}")


def final_concat(fwd_final: Tensor, bwd_first: Tensor) -> Tensor:
    """[forward state at the last real token; backward state at token 0]."""
    return tt.concat([fwd_final, bwd_first], axis=1)
