"""Transformer encoder/decoder around the structured sentence matrix.

Pre-norm residual blocks with sinusoidal position encoding.  The encoder
stack feeds the same multi-head inner attention the recurrent models use;
the decoder's cross-attention then sees only the matrix rows, never the
per-token encoder states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as tt
from .config import ModelConfig
from .data import BOS, EOS
from .encoder import InnerAttention, flatten_matrix
from .errors import UnsupportedArchitectureError
from .nn import Embedding, LayerNorm, Linear
from .tensor import Tensor


def sinusoid_positions(length: int, width: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    dim = np.arange(width)[None, :]
    angle = pos / np.power(10000.0, (2 * (dim // 2)) / width)
    pe = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return pe


class MultiHeadAttention:
    """Scaled dot-product attention with head splitting."""

    def __init__(self, rng: np.random.Generator, query_width: int, kv_width: int,
                 model_width: int, heads: int, name: str):
        self.name = name
        self.heads = heads
        self.model_width = model_width
        self.head_width = model_width // heads
        self.q = Linear(rng, query_width, model_width, f"{name}.q")
        self.k = Linear(rng, kv_width, model_width, f"{name}.k")
        self.v = Linear(rng, kv_width, model_width, f"{name}.v")
        self.o = Linear(rng, model_width, model_width, f"{name}.o")

    def _split(self, x: Tensor, B: int, T: int) -> Tensor:
        x = tt.reshape(x, (B, T, self.heads, self.head_width))
        return tt.reshape(tt.transpose(x, (0, 2, 1, 3)),
                          (B * self.heads, T, self.head_width))

    def __call__(self, queries: Tensor, keys_values: Tensor,
                 mask: np.ndarray | None = None) -> tuple[Tensor, np.ndarray]:
        """mask: boolean (B, Tq, Tk) of allowed key positions, or None.

        Returns the attended output and (as plain numpy) the per-head
        attention weights (B, heads, Tq, Tk) for analysis.
        """
        B, Tq, _ = queries.data.shape
        Tk = keys_values.data.shape[1]
        qh = self._split(self.q(queries), B, Tq)
        kh = self._split(self.k(keys_values), B, Tk)
        vh = self._split(self.v(keys_values), B, Tk)
        scores = tt.scale(tt.bmm(qh, tt.transpose(kh, (0, 2, 1))),
                          1.0 / np.sqrt(self.head_width))
        if mask is not None:
            mask = np.broadcast_to(mask[:, None, :, :], (B, self.heads, Tq, Tk))
            mask = mask.reshape(B * self.heads, Tq, Tk)
        att = tt.softmax(scores, axis=2, mask=mask)
        ctx = tt.bmm(att, vh)
        ctx = tt.reshape(ctx, (B, self.heads, Tq, self.head_width))
        out = self.o(tt.reshape(tt.transpose(ctx, (0, 2, 1, 3)),
                                (B, Tq, self.model_width)))
        weights = att.data.reshape(B, self.heads, Tq, Tk).copy()
        return out, weights

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for block in (self.q, self.k, self.v, self.o):
            yield from block.named_parameters()


class FeedForward:
    def __init__(self, rng: np.random.Generator, width: int, inner: int, name: str):
        self.lin1 = Linear(rng, width, inner, f"{name}.in")
        self.lin2 = Linear(rng, inner, width, f"{name}.out")

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(tt.relu(self.lin1(x)))

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self.lin1.named_parameters()
        yield from self.lin2.named_parameters()


class EncoderLayer:
    def __init__(self, rng, width, heads, ffn, name):
        self.ln1 = LayerNorm(width, f"{name}.ln1")
        self.att = MultiHeadAttention(rng, width, width, width, heads, f"{name}.self")
        self.ln2 = LayerNorm(width, f"{name}.ln2")
        self.ffn = FeedForward(rng, width, ffn, f"{name}.ffn")

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        normed = self.ln1(x)
        attended, _ = self.att(normed, normed, mask)
        x = tt.add(x, attended)
        return tt.add(x, self.ffn(self.ln2(x)))

    def named_parameters(self):
        for block in (self.ln1, self.att, self.ln2, self.ffn):
            yield from block.named_parameters()


class DecoderLayer:
    def __init__(self, rng, width, kv_width, heads, ffn, name):
        self.ln1 = LayerNorm(width, f"{name}.ln1")
        self.self_att = MultiHeadAttention(rng, width, width, width, heads,
                                           f"{name}.self")
        self.ln2 = LayerNorm(width, f"{name}.ln2")
        self.cross_att = MultiHeadAttention(rng, width, kv_width, width, heads,
                                            f"{name}.cross")
        self.ln3 = LayerNorm(width, f"{name}.ln3")
        self.ffn = FeedForward(rng, width, ffn, f"{name}.ffn")

    def __call__(self, x: Tensor, memory: Tensor, causal: np.ndarray
                 ) -> tuple[Tensor, np.ndarray]:
        normed = self.ln1(x)
        attended, _ = self.self_att(normed, normed, causal)
        x = tt.add(x, attended)
        crossed, cross_w = self.cross_att(self.ln2(x), memory)
        x = tt.add(x, crossed)
        return tt.add(x, self.ffn(self.ln3(x))), cross_w

    def named_parameters(self):
        for block in (self.ln1, self.self_att, self.ln2, self.cross_att,
                      self.ln3, self.ffn):
            yield from block.named_parameters()


@dataclass
class TrfEncoded:
    states: Tensor           # (B, T, dm) final encoder-layer output
    mask: np.ndarray
    A: Tensor                # (B, r, T)
    M: Tensor                # (B, r, p)
    embedding: Tensor        # (B, r*p)


class TransformerModel:
    """Self-attention variant; decoding is conditioned on the matrix rows only."""

    def __init__(self, config: ModelConfig, src_vocab_size: int,
                 tgt_vocab_size: int, rng: np.random.Generator):
        config.validate()
        if not config.architecture.transformer:
            raise UnsupportedArchitectureError(
                f"TransformerModel cannot wire {config.architecture.value}")
        self.config = config
        self.arch = config.architecture
        self.src_vocab_size = src_vocab_size
        self.tgt_vocab_size = tgt_vocab_size
        dm = config.embed_dim
        self.width = dm
        self.src_emb = Embedding(rng, src_vocab_size, dm, "src_emb")
        self.tgt_emb = Embedding(rng, tgt_vocab_size, dm, "tgt_emb")
        self.enc_layers = [
            EncoderLayer(rng, dm, config.trf_heads, config.trf_ffn, f"trf.enc.{i}")
            for i in range(config.trf_layers)]
        self.enc_norm = LayerNorm(dm, "trf.enc.norm")
        self.inner_att = InnerAttention(rng, dm, config.attn_hidden, config.heads,
                                        config.row_width, "inner")
        self.dec_layers = [
            DecoderLayer(rng, dm, config.row_width, config.trf_heads,
                         config.trf_ffn, f"trf.dec.{i}")
            for i in range(config.trf_layers)]
        self.dec_norm = LayerNorm(dm, "trf.dec.norm")
        self.out = Linear(rng, dm, tgt_vocab_size, "dec.out")

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self.src_emb.named_parameters()
        yield from self.tgt_emb.named_parameters()
        for layer in self.enc_layers:
            yield from layer.named_parameters()
        yield from self.enc_norm.named_parameters()
        yield from self.inner_att.named_parameters()
        for layer in self.dec_layers:
            yield from layer.named_parameters()
        yield from self.dec_norm.named_parameters()
        yield from self.out.named_parameters()

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    # ----------------------------------------------------------------- encode

    def _embed(self, emb: Embedding, ids: np.ndarray) -> Tensor:
        B, T = ids.shape
        x = tt.scale(emb(ids), np.sqrt(self.width))
        pe = np.broadcast_to(sinusoid_positions(T, self.width), (B, T, self.width))
        return tt.add(x, Tensor(pe.copy()))

    def encode(self, src_ids: np.ndarray, src_mask: np.ndarray) -> TrfEncoded:
        B, T = src_ids.shape
        x = self._embed(self.src_emb, src_ids)
        key_mask = np.broadcast_to(src_mask.astype(bool)[:, None, :], (B, T, T))
        for layer in self.enc_layers:
            x = layer(x, key_mask)
        x = self.enc_norm(x)
        A, M = self.inner_att(x, src_mask)
        return TrfEncoded(states=x, mask=src_mask, A=A, M=M,
                          embedding=flatten_matrix(M))

    def sentence_embedding(self, src_ids: np.ndarray, src_mask: np.ndarray) -> Tensor:
        return self.encode(src_ids, src_mask).embedding

    # ----------------------------------------------------------------- decode

    def _decode_stack(self, tgt_in: np.ndarray, memory: Tensor
                      ) -> tuple[Tensor, np.ndarray]:
        """Run the decoder on BOS-prefixed rows; returns logits and the
        cross-attention averaged over layers and heads (B, T', r)."""
        B, T = tgt_in.shape
        x = self._embed(self.tgt_emb, tgt_in)
        causal = np.broadcast_to(np.tril(np.ones((T, T), dtype=bool)), (B, T, T))
        cross_sum: np.ndarray | None = None
        for layer in self.dec_layers:
            x, cross_w = layer(x, memory, causal)
            summed = cross_w.mean(axis=1)  # (B, T', r) over heads
            cross_sum = summed if cross_sum is None else cross_sum + summed
        logits = self.out(self.dec_norm(x))
        return logits, cross_sum / len(self.dec_layers)

    def forward(self, src_ids: np.ndarray, src_mask: np.ndarray,
                tgt_ids: np.ndarray) -> Tensor:
        enc = self.encode(src_ids, src_mask)
        logits, _ = self._decode_stack(tgt_ids[:, :-1], enc.M)
        return logits

    def greedy_decode(self, src_row: list[int], max_len: int = 80,
                      collect_attention: bool = False):
        ids = np.asarray([src_row], dtype=np.int64)
        mask = np.ones((1, len(src_row)))
        out: list[int] = []
        weights: list[np.ndarray] = []
        with tt.no_grad():
            enc = self.encode(ids, mask)
            prefix = [BOS]
            for _ in range(max_len):
                logits, cross = self._decode_stack(
                    np.asarray([prefix], dtype=np.int64), enc.M)
                step = int(np.argmax(logits.data[0, -1]))
                weights.append(cross[0, -1].copy())
                if step == EOS:
                    break
                out.append(step)
                prefix.append(step)
        if collect_attention:
            return out, enc.A.data[0].copy(), np.asarray(weights)
        return out

    def trace(self, src_ids: np.ndarray, src_mask: np.ndarray,
              tgt_ids: np.ndarray) -> dict:
        with tt.no_grad():
            enc = self.encode(src_ids, src_mask)
            _, cross = self._decode_stack(tgt_ids[:, :-1], enc.M)
        return {"A": enc.A.data.copy(), "decoder_weights": cross.copy(),
                "M": enc.M.data.copy()}
