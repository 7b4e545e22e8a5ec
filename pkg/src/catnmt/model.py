"""Model assembly: the ten architecture wirings behind one interface.

A model encodes source ids into recurrent states, optionally builds the
fixed-size sentence representation its variant calls for, and decodes with
a conditional GRU (or, for the transformer variant, stacked self-attention)
whose conditioning channel is what distinguishes the variants.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as tt
from .config import Architecture, ModelConfig
from .data import BOS, EOS
from .decoder import AdditiveAttention, ContextFn, DecoderCell
from .encoder import (BiGruEncoder, EncodedSource, InnerAttention, final_concat,
                      flatten_matrix, pool_states)
from .errors import ShapeError, UnsupportedArchitectureError
from .nn import Embedding, Linear
from .tensor import Tensor


def build_model(config: ModelConfig, src_vocab_size: int, tgt_vocab_size: int,
                seed: int):
    """Validate the config and construct the requested architecture.

    Parameter initialization is fully determined by the seed: identical
    arguments give bit-identical models.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    if config.architecture.transformer:
        from .transformer import TransformerModel
        return TransformerModel(config, src_vocab_size, tgt_vocab_size, rng)
    return Seq2SeqModel(config, src_vocab_size, tgt_vocab_size, rng)


class Seq2SeqModel:
    """Recurrent encoder/decoder covering every non-transformer variant."""

    def __init__(self, config: ModelConfig, src_vocab_size: int,
                 tgt_vocab_size: int, rng: np.random.Generator):
        config.validate()
        arch = config.architecture
        if arch.transformer:
            raise UnsupportedArchitectureError(
                "transformer variant uses TransformerModel")
        self.config = config
        self.arch = arch
        self.src_vocab_size = src_vocab_size
        self.tgt_vocab_size = tgt_vocab_size

        u = config.state_width
        self.src_emb = Embedding(rng, src_vocab_size, config.embed_dim, "src_emb")
        self.tgt_emb = Embedding(rng, tgt_vocab_size, config.embed_dim, "tgt_emb")
        self.encoder = BiGruEncoder(rng, config.embed_dim, config.enc_hidden, "enc")

        self.inner_att: InnerAttention | None = None
        if arch.inner_attention:
            self.inner_att = InnerAttention(
                rng, u, config.attn_hidden, config.heads, config.row_width, "inner")

        self.init_proj: Linear | None = None
        if arch.init_from_embedding:
            self.init_proj = Linear(rng, config.size, config.dec_hidden, "init")

        self.dec_att: AdditiveAttention | None = None
        if arch is Architecture.ATTN:
            ctx_width: int | None = u
            self.dec_att = AdditiveAttention(
                rng, config.dec_hidden, u, config.attn_hidden, "dec_att")
        elif arch is Architecture.ATTN_ATTN:
            ctx_width = config.row_width
            self.dec_att = AdditiveAttention(
                rng, config.dec_hidden, config.row_width, config.attn_hidden, "dec_att")
        elif arch.constant_context:
            ctx_width = config.size
        else:
            ctx_width = None

        self.cell = DecoderCell(rng, config.embed_dim, config.dec_hidden,
                                ctx_width, tgt_vocab_size, "dec")

    # ------------------------------------------------------------------ setup

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self.src_emb.named_parameters()
        yield from self.tgt_emb.named_parameters()
        yield from self.encoder.named_parameters()
        if self.inner_att is not None:
            yield from self.inner_att.named_parameters()
        if self.init_proj is not None:
            yield from self.init_proj.named_parameters()
        if self.dec_att is not None:
            yield from self.dec_att.named_parameters()
        yield from self.cell.named_parameters()

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    # ----------------------------------------------------------------- encode

    def encode(self, src_ids: np.ndarray, src_mask: np.ndarray) -> EncodedSource:
        xs = [self.src_emb(src_ids[:, t]) for t in range(src_ids.shape[1])]
        H, fwd_final, bwd_first = self.encoder.run(xs, src_mask)
        enc = EncodedSource(H=H, mask=src_mask, fwd_final=fwd_final,
                            bwd_first=bwd_first)
        arch = self.arch
        if self.inner_att is not None:
            enc.A, enc.M = self.inner_att(H, src_mask)
            enc.embedding = flatten_matrix(enc.M)
        elif arch.pooling:
            enc.embedding = pool_states(H, src_mask, arch.pooling)
        elif arch in (Architecture.FINAL, Architecture.FINAL_CTX):
            enc.embedding = final_concat(fwd_final, bwd_first)
        if arch is Architecture.ATTN:
            enc.dec_keys = self.dec_att.prepare_keys(H)
        elif arch is Architecture.ATTN_ATTN:
            enc.dec_keys = self.dec_att.prepare_keys(enc.M)
        return enc

    def sentence_embedding(self, src_ids: np.ndarray, src_mask: np.ndarray) -> Tensor:
        """The fixed-size vector this variant exposes; ATTN has none."""
        if not self.arch.exposes_embedding:
            raise UnsupportedArchitectureError(
                "attn keeps no fixed-size sentence embedding; nothing to extract")
        return self.encode(src_ids, src_mask).embedding

    # ----------------------------------------------------------------- decode

    def _initial_state(self, enc: EncodedSource, batch: int) -> Tensor:
        if self.init_proj is not None:
            return tt.tanh(self.init_proj(enc.embedding))
        return self.cell.initial_state(batch)

    def _context_fn(self, enc: EncodedSource) -> ContextFn | None:
        arch = self.arch
        if arch is Architecture.ATTN:
            keys, H, mask = enc.dec_keys, enc.H, enc.mask
            return lambda s: self.dec_att(s, keys, H, mask=mask.astype(bool))
        if arch is Architecture.ATTN_ATTN:
            keys, M = enc.dec_keys, enc.M
            return lambda s: self.dec_att(s, keys, M)
        if arch.constant_context:
            const = enc.embedding
            return lambda s: (const, None)
        return None

    def forward(self, src_ids: np.ndarray, src_mask: np.ndarray,
                tgt_ids: np.ndarray) -> Tensor:
        """Teacher-forced logits for positions 1..T-1 of the target rows."""
        enc = self.encode(src_ids, src_mask)
        return self._decode_forced(enc, tgt_ids)[0]

    def _decode_forced(self, enc: EncodedSource, tgt_ids: np.ndarray
                       ) -> tuple[Tensor, list[Tensor | None]]:
        B = tgt_ids.shape[0]
        dec_in = tgt_ids[:, :-1]
        s = self._initial_state(enc, B)
        ctx_fn = self._context_fn(enc)
        logits_steps: list[Tensor] = []
        weights_steps: list[Tensor | None] = []
        for t in range(dec_in.shape[1]):
            y = self.tgt_emb(dec_in[:, t])
            s, logits, weights = self.cell.step(y, s, ctx_fn)
            logits_steps.append(logits)
            weights_steps.append(weights)
        return tt.stack(logits_steps, axis=1), weights_steps

    def greedy_decode(self, src_row: list[int], max_len: int = 80,
                      collect_attention: bool = False):
        """Deterministic argmax decoding of one BOS/EOS-wrapped source row.

        Returns the produced ids (EOS excluded); with ``collect_attention``
        also the encoder attention (r, T) and per-step decoder weights.
        """
        ids = np.asarray([src_row], dtype=np.int64)
        mask = np.ones((1, len(src_row)))
        out: list[int] = []
        weights: list[np.ndarray] = []
        with tt.no_grad():
            enc = self.encode(ids, mask)
            s = self._initial_state(enc, 1)
            ctx_fn = self._context_fn(enc)
            prev = BOS
            for _ in range(max_len):
                y = self.tgt_emb(np.asarray([prev], dtype=np.int64))
                s, logits, w = self.cell.step(y, s, ctx_fn)
                prev = int(np.argmax(logits.data[0]))  # ties: lowest id
                if w is not None:
                    weights.append(w.data[0].copy())
                if prev == EOS:
                    break
                out.append(prev)
        if collect_attention:
            A = enc.A.data[0].copy() if enc.A is not None else None
            return out, A, (np.asarray(weights) if weights else None)
        return out

    # ---------------------------------------------------------------- tracing

    def trace(self, src_ids: np.ndarray, src_mask: np.ndarray,
              tgt_ids: np.ndarray) -> dict:
        """Teacher-forced attention record for analysis and audits."""
        with tt.no_grad():
            enc = self.encode(src_ids, src_mask)
            _, weights_steps = self._decode_forced(enc, tgt_ids)
        A = enc.A.data.copy() if enc.A is not None else None
        if weights_steps and weights_steps[0] is not None:
            dec_w = np.stack([w.data for w in weights_steps], axis=1)  # (B, T', N)
        else:
            dec_w = None
        return {"A": A, "decoder_weights": dec_w,
                "M": enc.M.data.copy() if enc.M is not None else None}


def compound_alignment(decoder_weights: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Fold decoder-over-heads and heads-over-source into one alignment.

    decoder_weights: (T', r) rows over heads; A: (r, T) heads over source.
    The product's rows are probability distributions over source positions.
    """
    decoder_weights = np.asarray(decoder_weights)
    A = np.asarray(A)
    if decoder_weights.ndim != 2 or A.ndim != 2 or decoder_weights.shape[1] != A.shape[0]:
        raise ShapeError(
            f"compound_alignment: shapes {decoder_weights.shape} and {A.shape} "
            f"do not share the head dimension")
    return decoder_weights @ A
