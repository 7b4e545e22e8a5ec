"""Text handling: vocabularies, byte-pair encoding, corpora, and batching."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, EmptyInputError

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<s>", "</s>")

WORD_END = "</w>"


class Vocabulary:
    """Frequency-ranked token table with four reserved ids.

    ``max_size`` caps the total table size including the reserved entries,
    so at most ``max_size - 4`` corpus tokens survive.  Frequency ties are
    broken lexicographically.
    """

    def __init__(self, tokens: Sequence[str]):
        self._id_to_token = list(RESERVED) + list(tokens)
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}

    @classmethod
    def from_corpus(cls, sentences: Iterable[Sequence[str]], max_size: int) -> "Vocabulary":
        if max_size < 5:
            raise ConfigError(f"vocabulary max_size {max_size} leaves no room for tokens")
        counts: Counter[str] = Counter()
        n_sentences = 0
        for sent in sentences:
            n_sentences += 1
            counts.update(sent)
        if n_sentences == 0 or not counts:
            raise EmptyInputError("vocabulary built from an empty corpus")
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        kept = [tok for tok, _ in ranked[: max_size - len(RESERVED)]]
        return cls(kept)

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self._token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self._id_to_token[i] for i in ids]

    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order (enough to rebuild the table)."""
        return self._id_to_token[len(RESERVED):]


# ---------------------------------------------------------------------------
# byte-pair encoding

class BpeModel:
    """Greedy byte-pair merges over word-internal symbols.

    Words are split into characters with ``</w>`` glued onto the final one;
    learning repeatedly merges the most frequent adjacent symbol pair,
    breaking count ties by lexicographic pair order.  Application replays
    the merge list in order, so segmentation is a fixed point of itself.
    """

    def __init__(self, merges: Sequence[tuple[str, str]]):
        self.merges = [tuple(m) for m in merges]
        self._cache: dict[str, tuple[str, ...]] = {}

    @classmethod
    def learn(cls, lines: Iterable[str], num_merges: int) -> "BpeModel":
        if num_merges < 0:
            raise ConfigError(f"num_merges {num_merges} is negative")
        word_counts: Counter[str] = Counter()
        for line in lines:
            word_counts.update(line.split())
        if not word_counts:
            raise EmptyInputError("byte-pair learning on an empty corpus")
        words = {w: _word_symbols(w) for w in word_counts}
        merges: list[tuple[str, str]] = []
        for _ in range(num_merges):
            pair_counts: Counter[tuple[str, str]] = Counter()
            for w, syms in words.items():
                n = word_counts[w]
                for i in range(len(syms) - 1):
                    pair_counts[(syms[i], syms[i + 1])] += n
            if not pair_counts:
                break
            best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
            merges.append(best)
            words = {w: _merge_pair(syms, best) for w, syms in words.items()}
        return cls(merges)

    def segment_word(self, word: str) -> tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is None:
            syms = _word_symbols(word)
            for pair in self.merges:
                if len(syms) == 1:
                    break
                syms = _merge_pair(syms, pair)
            cached = self._cache[word] = syms
        return cached

    def replay(self, symbols: Sequence[str]) -> tuple[str, ...]:
        """Re-run the merge list over an arbitrary symbol sequence."""
        syms = tuple(symbols)
        for pair in self.merges:
            syms = _merge_pair(syms, pair)
        return syms

    def apply(self, line: str) -> list[str]:
        out: list[str] = []
        for word in line.split():
            out.extend(self.segment_word(word))
        return out

    @staticmethod
    def join(tokens: Sequence[str]) -> str:
        """Invert apply(): glue subwords and turn word-end markers into spaces."""
        return "".join(tokens).replace(WORD_END, " ").strip()

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for left, right in self.merges:
                f.write(f"{left} {right}\n")

    @classmethod
    def load(cls, path: str | Path) -> "BpeModel":
        merges = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split(" ")
                if len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: expected 'left right', got {line!r}")
                merges.append((parts[0], parts[1]))
        return cls(merges)


def _word_symbols(word: str) -> tuple[str, ...]:
    chars = list(word)
    chars[-1] = chars[-1] + WORD_END
    return tuple(chars)


def _merge_pair(syms: Sequence[str], pair: tuple[str, str]) -> tuple[str, ...]:
    out: list[str] = []
    i = 0
    merged = pair[0] + pair[1]
    while i < len(syms):
        if i + 1 < len(syms) and syms[i] == pair[0] and syms[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return tuple(out)


# ---------------------------------------------------------------------------
# corpora

def read_lines(path: str | Path) -> list[str]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"corpus file not found: {p}")
    with open(p, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def load_parallel(src_path: str | Path, tgt_path: str | Path) -> list[tuple[str, str]]:
    src = read_lines(src_path)
    tgt = read_lines(tgt_path)
    if len(src) != len(tgt):
        raise DataError(
            f"parallel corpus out of step: {src_path} has {len(src)} lines, "
            f"{tgt_path} has {len(tgt)}")
    if not src:
        raise EmptyInputError(f"parallel corpus {src_path} is empty")
    return list(zip(src, tgt))


def filter_pairs(pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
                 max_len: int) -> list[tuple[Sequence[str], Sequence[str]]]:
    """Drop pairs where either side exceeds ``max_len`` tokens."""
    return [(s, t) for s, t in pairs if len(s) <= max_len and len(t) <= max_len]


# ---------------------------------------------------------------------------
# batching

@dataclass
class Batch:
    """Padded id matrices plus 0/1 masks; every row is BOS ... EOS inside
    its unmasked span."""
    source: np.ndarray       # (B, Ts) int64
    target: np.ndarray       # (B, Tt) int64
    source_mask: np.ndarray  # (B, Ts) float64
    target_mask: np.ndarray  # (B, Tt) float64

    @property
    def size(self) -> int:
        return self.source.shape[0]


def _pad_block(rows: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(r) for r in rows)
    ids = np.full((len(rows), width), PAD, dtype=np.int64)
    mask = np.zeros((len(rows), width))
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        mask[i, : len(r)] = 1.0
    return ids, mask


def make_batches(pairs: Sequence[tuple[Sequence[int], Sequence[int]]],
                 batch_size: int,
                 rng: np.random.Generator | None = None) -> list[Batch]:
    """Chunk id pairs into padded batches covering every pair exactly once.

    Pass a generator for a seeded shuffle; order is otherwise preserved.
    BOS/EOS wrapping happens here, padding goes to the per-batch maximum.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size {batch_size} < 1")
    if not pairs:
        raise EmptyInputError("no sentence pairs to batch")
    order = np.arange(len(pairs))
    if rng is not None:
        order = rng.permutation(len(pairs))
    batches = []
    for start in range(0, len(pairs), batch_size):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        src_rows = [[BOS, *s, EOS] for s, _ in chunk]
        tgt_rows = [[BOS, *t, EOS] for _, t in chunk]
        src, src_mask = _pad_block(src_rows)
        tgt, tgt_mask = _pad_block(tgt_rows)
        batches.append(Batch(src, tgt, src_mask, tgt_mask))
    return batches
