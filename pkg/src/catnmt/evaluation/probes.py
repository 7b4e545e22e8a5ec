"""Probing classifiers and similarity scoring over frozen embeddings."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError, EmptyInputError, UndefinedCorrelationError
from .clusters import EmbeddingSet
from .correlation import pearson, spearman

L2_PENALTY = 1e-4
PROBE_EPOCHS = 500
PROBE_LR = 0.5


@dataclass
class ProbeResult:
    accuracy: float           # percent on the test split
    baseline: float           # most-frequent-class percent on the same split
    classes: list[str]


def _standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0.0] = 1.0
    return mean, std


def probe_classify(train: EmbeddingSet, test: EmbeddingSet) -> ProbeResult:
    """Multinomial logistic regression on frozen vectors.

    Full-batch gradient descent from a zero start; the objective is convex,
    so no randomness is involved and results are bit-deterministic.
    """
    classes = sorted(set(train.labels))
    if len(classes) < 2:
        raise ConfigError("probe_classify: need at least 2 training classes")
    index = {c: k for k, c in enumerate(classes)}
    mean, std = _standardizer(train.vectors)
    X = (train.vectors - mean) / std
    y = np.array([index[lab] for lab in train.labels])
    N, D = X.shape
    K = len(classes)
    W = np.zeros((D, K))
    b = np.zeros(K)
    onehot = np.zeros((N, K))
    onehot[np.arange(N), y] = 1.0
    for _ in range(PROBE_EPOCHS):
        logits = X @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        delta = (probs - onehot) / N
        W -= PROBE_LR * (X.T @ delta + L2_PENALTY * W)
        b -= PROBE_LR * delta.sum(axis=0)

    Xt = (test.vectors - mean) / std
    logits = Xt @ W + b
    predicted = np.argmax(logits, axis=1)
    correct = 0
    for pred_k, item in zip(predicted, test.items):
        if item.label not in index:
            warnings.warn(f"probe_classify: test label {item.label!r} unseen "
                          "in training; counted as an error")
            continue
        if pred_k == index[item.label]:
            correct += 1
    counts = np.bincount(y, minlength=K)
    majority = classes[int(np.argmax(counts))]
    baseline = 100.0 * sum(it.label == majority for it in test.items) / len(test)
    return ProbeResult(accuracy=100.0 * correct / len(test),
                       baseline=baseline, classes=classes)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


def similarity_eval(
        pairs: Sequence[tuple[np.ndarray, np.ndarray, float]]
) -> tuple[float, float]:
    """Cosine similarity of each pair scored against gold: (Pearson, Spearman)."""
    if len(pairs) < 3:
        raise EmptyInputError("similarity_eval: need at least 3 pairs")
    predictions = np.array([_cosine(np.asarray(a, dtype=np.float64),
                                    np.asarray(b, dtype=np.float64))
                            for a, b, _ in pairs])
    gold = np.array([float(g) for _, _, g in pairs])
    if np.all(gold == gold[0]):
        raise UndefinedCorrelationError("similarity_eval: constant gold scores")
    if np.all(predictions == predictions[0]):
        raise UndefinedCorrelationError("similarity_eval: constant predictions")
    return pearson(predictions, gold), spearman(predictions, gold)
