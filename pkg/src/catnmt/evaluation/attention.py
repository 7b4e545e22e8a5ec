"""Alignment export and positional profiles of the encoder attention."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..config import Architecture
from ..data import BOS, EOS
from ..errors import ConfigError, EmptyInputError, UnsupportedArchitectureError
from ..model import compound_alignment
from ..tensor import no_grad

PRUNE_THRESHOLD = 0.01
MIN_SENTENCE_TOKENS = 8


def _require_compound(model) -> None:
    arch: Architecture = model.config.architecture
    if not (arch.inner_attention and (arch.decoder_attention or arch.transformer)):
        raise UnsupportedArchitectureError(
            f"{arch.value} has no decoder attention over a sentence matrix; "
            "no compound alignment exists")


def alignment_export(model, src_row: Sequence[int], tgt_row: Sequence[int],
                     threshold: float = PRUNE_THRESHOLD
                     ) -> tuple[list[dict], list[float]]:
    """Per-head source-target weights for one BOS/EOS-wrapped sentence pair.

    Each kept entry is {"t": target step, "s": source position, "head": j,
    "w": decoder-weight x encoder-weight}; entries with w <= threshold are
    pruned.  Also returns, per target step, the total weight kept.
    """
    _require_compound(model)
    src = np.asarray([list(src_row)], dtype=np.int64)
    tgt = np.asarray([list(tgt_row)], dtype=np.int64)
    rec = model.trace(src, np.ones((1, src.shape[1])), tgt)
    A = rec["A"][0]                      # (r, T)
    B = rec["decoder_weights"][0]        # (T', r)
    steps, r = B.shape
    T = A.shape[1]
    entries: list[dict] = []
    kept = [0.0] * steps
    for t in range(steps):
        for j in range(r):
            for s in range(T):
                w = float(B[t, j] * A[j, s])
                if w > threshold:
                    entries.append({"t": t, "s": s, "head": j, "w": w})
                    kept[t] += w
    return entries, kept


def alignment_matrix(model, src_row: Sequence[int],
                     tgt_row: Sequence[int]) -> np.ndarray:
    """Head-summed alignment: (target steps, source positions)."""
    _require_compound(model)
    src = np.asarray([list(src_row)], dtype=np.int64)
    tgt = np.asarray([list(tgt_row)], dtype=np.int64)
    rec = model.trace(src, np.ones((1, src.shape[1])), tgt)
    return compound_alignment(rec["decoder_weights"][0], rec["A"][0])


def position_histogram(model, src_rows: Sequence[Sequence[int]],
                       bins: int = 20,
                       min_tokens: int = MIN_SENTENCE_TOKENS
                       ) -> tuple[np.ndarray, int]:
    """Average attention mass per head over relative source position.

    src_rows are unwrapped id rows; rows shorter than min_tokens are
    skipped.  A position's attention mass spreads over bins in proportion
    to the overlap of its time slice [t/T, (t+1)/T) with each bin, so each
    returned histogram row sums to 1.
    """
    if bins < 2:
        raise ConfigError(f"position_histogram: bins {bins} < 2")
    arch: Architecture = model.config.architecture
    if not arch.inner_attention:
        raise UnsupportedArchitectureError(
            f"{arch.value} computes no encoder attention to profile")
    kept_rows = [list(r) for r in src_rows if len(r) >= min_tokens]
    if not kept_rows:
        raise EmptyInputError(
            f"position_histogram: no sentence has >= {min_tokens} tokens")
    r = model.config.heads
    hist = np.zeros((r, bins))
    for row in kept_rows:
        wrapped = np.asarray([[BOS] + row + [EOS]], dtype=np.int64)
        with no_grad():
            enc = model.encode(wrapped, np.ones((1, wrapped.shape[1])))
        A = enc.A.data[0]
        T = A.shape[1]
        for t in range(T):
            lo, hi = t / T, (t + 1) / T
            k0 = int(lo * bins)
            k1 = min(int(np.ceil(hi * bins)), bins)
            for k in range(k0, k1):
                overlap = min(hi, (k + 1) / bins) - max(lo, k / bins)
                if overlap > 0:
                    hist[:, k] += A[:, t] * (overlap * T)
    return hist / len(kept_rows), len(kept_rows)
