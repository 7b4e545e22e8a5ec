"""Corpus BLEU: clipped n-gram precisions, brevity penalty, no smoothing."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from ..errors import DataError, EmptyInputError

MAX_ORDER = 4


@dataclass
class BleuResult:
    score: float
    precisions: list[tuple[int, int]]  # (matched, total) for orders 1..4
    brevity_penalty: float
    candidate_length: int
    reference_length: int

    def precision_values(self) -> list[float]:
        return [(m / t if t else 0.0) for m, t in self.precisions]


def _ngram_counts(tokens: Sequence[str], order: int) -> Counter:
    return Counter(tuple(tokens[i:i + order])
                   for i in range(len(tokens) - order + 1))


def bleu(candidates: Sequence[Sequence[str]],
         references: Sequence[Sequence[str]]) -> BleuResult:
    """Case-sensitive corpus BLEU against a single reference per candidate.

    A zero matched count at any order zeroes the score; the per-order
    counts are still reported.
    """
    if len(candidates) != len(references):
        raise DataError(f"bleu: {len(candidates)} candidates vs "
                        f"{len(references)} references")
    if not candidates:
        raise EmptyInputError("bleu: empty corpus")
    matched = [0] * MAX_ORDER
    total = [0] * MAX_ORDER
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand = list(cand)
        ref = list(ref)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, MAX_ORDER + 1):
            cgrams = _ngram_counts(cand, n)
            rgrams = _ngram_counts(ref, n)
            total[n - 1] += max(len(cand) - n + 1, 0)
            matched[n - 1] += sum(min(c, rgrams[g]) for g, c in cgrams.items())
    if cand_len == 0 or cand_len >= ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / cand_len)
    if any(m == 0 for m in matched):
        score = 0.0
    else:
        log_mean = sum(math.log(m / t) for m, t in zip(matched, total)) / MAX_ORDER
        score = 100.0 * bp * math.exp(log_mean)
    return BleuResult(score=score,
                      precisions=list(zip(matched, total)),
                      brevity_penalty=bp,
                      candidate_length=cand_len,
                      reference_length=ref_len)


def bleu_lines(candidate_lines: Sequence[str],
               reference_lines: Sequence[str]) -> BleuResult:
    """BLEU over whitespace-tokenized lines."""
    return bleu([line.split() for line in candidate_lines],
                [line.split() for line in reference_lines])
