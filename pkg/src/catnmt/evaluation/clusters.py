"""Paraphrase-cluster metrics over labeled sentence embeddings."""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from ..errors import ConfigError, DataError, EmptyInputError

SHRINKAGE = 0.1  # pooled covariance blended toward its own diagonal


@dataclass
class EmbeddingItem:
    id: str
    label: str
    vec: np.ndarray


class EmbeddingSet:
    """Labeled fixed-width vectors; the unit all cluster metrics consume."""

    def __init__(self, items: Iterable[EmbeddingItem]):
        self.items = list(items)
        if not self.items:
            raise EmptyInputError("EmbeddingSet: no items")
        width = self.items[0].vec.shape[0]
        for it in self.items:
            if it.vec.ndim != 1 or it.vec.shape[0] != width:
                raise DataError(f"EmbeddingSet: vector for {it.id!r} has shape "
                                f"{it.vec.shape}, expected ({width},)")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def vectors(self) -> np.ndarray:
        return np.stack([it.vec for it in self.items])

    @property
    def labels(self) -> list[str]:
        return [it.label for it in self.items]

    def cluster_indices(self) -> dict[str, list[int]]:
        """Indices per label, labels in sorted order."""
        groups: dict[str, list[int]] = {}
        for i, it in enumerate(self.items):
            groups.setdefault(it.label, []).append(i)
        return {label: groups[label] for label in sorted(groups)}

    @classmethod
    def load_jsonl(cls, path: str | os.PathLike) -> "EmbeddingSet":
        items = []
        try:
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        obj = json.loads(line)
                        items.append(EmbeddingItem(
                            id=str(obj["id"]), label=str(obj["label"]),
                            vec=np.asarray(obj["vec"], dtype=np.float64)))
                    except (json.JSONDecodeError, KeyError, TypeError,
                            ValueError) as exc:
                        raise DataError(f"{path}:{lineno}: bad embedding "
                                        f"record: {exc}") from exc
        except FileNotFoundError as exc:
            raise DataError(f"embedding file not found: {path}") from exc
        return cls(items)

    def save_jsonl(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for it in self.items:
                fh.write(json.dumps({"id": it.id, "label": it.label,
                                     "vec": it.vec.tolist()}) + "\n")


# ---------------------------------------------------------------------------
# linear discriminant analysis

class LdaClassifier:
    """Equal-prior LDA with shrinkage-regularized pooled covariance."""

    def __init__(self, X: np.ndarray, y: np.ndarray):
        self.classes = np.unique(y)
        K = len(self.classes)
        if K < 2:
            raise ConfigError("LdaClassifier: need at least 2 classes")
        N, D = X.shape
        self.means = np.stack([X[y == c].mean(axis=0) for c in self.classes])
        cov = np.zeros((D, D))
        for k, c in enumerate(self.classes):
            diff = X[y == c] - self.means[k]
            cov += diff.T @ diff
        cov /= max(N - K, 1)
        cov = (1.0 - SHRINKAGE) * cov + SHRINKAGE * np.diag(np.diag(cov))
        self.precision = np.linalg.pinv(cov)

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        # linear discriminant per class; equal priors drop the prior term
        proj = self.precision @ self.means.T            # (D, K)
        offsets = 0.5 * np.einsum("kd,dk->k", self.means, proj)
        return X @ proj - offsets

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.decision_values(X), axis=1)]


def _holdout_split(emb: EmbeddingSet, holdout: Literal["one", "half"],
                   seed: int) -> tuple[list[int], list[int]]:
    rng = np.random.default_rng(seed)
    held: list[int] = []
    kept: list[int] = []
    for label, idxs in emb.cluster_indices().items():
        if len(idxs) < 2:
            raise ConfigError(f"cluster {label!r} has {len(idxs)} member(s); "
                              "cannot hold out and still train on it")
        n_held = 1 if holdout == "one" else len(idxs) // 2
        order = rng.permutation(len(idxs))
        held.extend(idxs[i] for i in order[:n_held])
        kept.extend(idxs[i] for i in order[n_held:])
    return sorted(kept), sorted(held)


def cluster_classification(emb: EmbeddingSet,
                           holdout: Literal["one", "half"] = "one",
                           seed: int = 0) -> float:
    """Held-out accuracy (%) of an LDA classifier over the cluster labels."""
    if holdout not in ("one", "half"):
        raise ConfigError(f"unknown holdout scheme {holdout!r}")
    if len(emb.cluster_indices()) < 2:
        raise ConfigError("cluster_classification: need at least 2 clusters")
    kept, held = _holdout_split(emb, holdout, seed)
    X = emb.vectors
    y = np.asarray(emb.labels, dtype=object)
    clf = LdaClassifier(X[kept], y[kept])
    predicted = clf.predict(X[held])
    return 100.0 * float(np.mean(predicted == y[held]))


# ---------------------------------------------------------------------------
# nearest-neighbor retrieval

def _cosine_similarity_matrix(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    unit = np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)
    return unit @ unit.T


def nn_retrieval(emb: EmbeddingSet,
                 metric: Literal["cosine", "l2"] = "cosine") -> float:
    """Share (%) of points whose nearest other point has the same label.

    Exact distance ties resolve to the lower index.
    """
    if len(emb) < 2:
        raise EmptyInputError("nn_retrieval: need at least 2 items")
    X = emb.vectors
    if metric == "cosine":
        closeness = _cosine_similarity_matrix(X)
    elif metric == "l2":
        sq = (X * X).sum(axis=1)
        closeness = -(sq[:, None] - 2.0 * X @ X.T + sq[None, :])
    else:
        raise ConfigError(f"unknown retrieval metric {metric!r}")
    np.fill_diagonal(closeness, -np.inf)
    nearest = np.argmax(closeness, axis=1)  # first max wins -> lower index
    labels = np.asarray(emb.labels, dtype=object)
    return 100.0 * float(np.mean(labels[nearest] == labels))


# ---------------------------------------------------------------------------
# inverse Davies-Bouldin separation

def idb(emb: EmbeddingSet) -> float:
    """Inverse Davies-Bouldin index; larger = better-separated clusters."""
    groups = emb.cluster_indices()
    if len(groups) < 2:
        raise ConfigError("idb: need at least 2 clusters")
    X = emb.vectors
    labels = list(groups)
    centroids = np.stack([X[groups[lab]].mean(axis=0) for lab in labels])
    scatter = np.array([
        float(np.linalg.norm(X[groups[lab]] - centroids[k], axis=1).mean())
        for k, lab in enumerate(labels)])
    K = len(labels)
    worst = np.empty(K)
    for i in range(K):
        ratios = []
        for j in range(K):
            if j == i:
                continue
            d = float(np.linalg.norm(centroids[i] - centroids[j]))
            if d == 0.0:
                raise ZeroDivisionError(
                    f"idb: centroids of clusters {labels[i]!r} and "
                    f"{labels[j]!r} coincide")
            ratios.append((scatter[i] + scatter[j]) / d)
        worst[i] = max(ratios)
    db = float(worst.mean())
    if db == 0.0:
        warnings.warn("idb: all clusters have zero scatter; index is infinite")
        return math.inf
    return 1.0 / db
