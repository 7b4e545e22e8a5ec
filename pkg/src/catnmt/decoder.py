"""Recurrent decoding: additive attention and the two-block conditional GRU."""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from . import tensor as tt
from .nn import GRUCell, Linear, glorot
from .tensor import Tensor

# A context provider maps the intermediate decoder state to a context vector
# and, when attention is involved, the attention weights over the keys.
ContextFn = Callable[[Tensor], tuple[Tensor, Tensor | None]]


class AdditiveAttention:
    """score_j = v . tanh(W_q s + W_k k_j), softmax over j, context = sum w_j v_j.

    Keys and values share the same source (recurrent states or sentence-matrix
    rows).  The score vector v starts at zero, so fresh weights are uniform.
    """

    def __init__(self, rng: np.random.Generator, query_width: int, key_width: int,
                 score_width: int, name: str):
        self.name = name
        self.score_width = score_width
        self.w_q = Tensor(glorot(rng, (query_width, score_width)), requires_grad=True)
        self.w_k = Tensor(glorot(rng, (key_width, score_width)), requires_grad=True)
        self.v = Tensor(np.zeros(score_width), requires_grad=True)

    def prepare_keys(self, values: Tensor) -> Tensor:
        """Project the (B, N, key_width) value rows once per sentence."""
        B, N, k = values.data.shape
        flat = tt.reshape(values, (B * N, k))
        return tt.reshape(tt.matmul(flat, self.w_k), (B, N, self.score_width))

    def __call__(self, query: Tensor, keys: Tensor, values: Tensor,
                 mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        B, N, d = keys.data.shape
        q = tt.matmul(query, self.w_q)
        spread = tt.tile(tt.reshape(q, (B, 1, d)), 1, N)
        scored = tt.tanh(tt.add(spread, keys))
        e = tt.reshape(
            tt.matmul(tt.reshape(scored, (B * N, d)), tt.reshape(self.v, (d, 1))),
            (B, N))
        weights = tt.softmax(e, axis=1, mask=mask)
        context = tt.reshape(tt.bmm(tt.reshape(weights, (B, 1, N)), values),
                             (B, values.data.shape[2]))
        return context, weights

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield f"{self.name}.w_q", self.w_q
        yield f"{self.name}.w_k", self.w_k
        yield f"{self.name}.v", self.v


class DecoderCell:
    """Conditional GRU: block 1 digests the previous token, block 2 the context.

    With no context width the second block is absent and the cell is a plain
    GRU over the token stream (variants whose only conditioning is the
    initial state).  Logits come from a learned affine map of the new state.
    """

    def __init__(self, rng: np.random.Generator, y_width: int, state_width: int,
                 ctx_width: int | None, vocab_size: int, name: str):
        self.name = name
        self.state_width = state_width
        self.gru1 = GRUCell(rng, y_width, state_width, f"{name}.block1")
        self.gru2 = (GRUCell(rng, ctx_width, state_width, f"{name}.block2")
                     if ctx_width is not None else None)
        self.out = Linear(rng, state_width, vocab_size, f"{name}.out")

    def step(self, y_emb: Tensor, s_prev: Tensor, context_fn: ContextFn | None
             ) -> tuple[Tensor, Tensor, Tensor | None]:
        """One decode step: returns (new state, logits, attention weights)."""
        s_mid = self.gru1.step(y_emb, s_prev)
        weights = None
        if self.gru2 is None:
            s_new = s_mid
        else:
            assert context_fn is not None, "cell built with context but none provided"
            context, weights = context_fn(s_mid)
            s_new = self.gru2.step(context, s_mid)
        return s_new, self.out(s_new), weights

    def initial_state(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.state_width)))

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self.gru1.named_parameters()
        if self.gru2 is not None:
            yield from self.gru2.named_parameters()
        yield from self.out.named_parameters()
