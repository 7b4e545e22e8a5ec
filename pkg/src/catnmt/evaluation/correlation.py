"""Pearson/Spearman statistics and the cross-metric correlation matrix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, EmptyInputError, UndefinedCorrelationError


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"pearson: shapes {x.shape} and {y.shape}")
    if x.size < 2:
        raise EmptyInputError("pearson: need at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0.0:
        raise UndefinedCorrelationError("pearson: a variable is constant")
    return float((dx * dy).sum() / denom)


def _average_ranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank positions."""
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"spearman: shapes {x.shape} and {y.shape}")
    return pearson(_average_ranks(x), _average_ranks(y))


@dataclass
class MetricReport:
    """Named metric values for one model run."""

    model: str
    metrics: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"model": self.model, "metrics": dict(self.metrics)}

    @classmethod
    def from_dict(cls, obj: dict) -> "MetricReport":
        try:
            return cls(model=str(obj["model"]),
                       metrics={str(k): float(v)
                                for k, v in obj["metrics"].items()})
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad metric report: {exc}") from exc


def metric_correlation_matrix(
        reports: list[MetricReport]) -> tuple[list[str], np.ndarray]:
    """Pearson correlation of every metric pair across models.

    Returns (metric names, symmetric matrix).  A metric constant across
    models yields NaN in its row and column instead of an error.
    """
    if len(reports) < 3:
        raise EmptyInputError("metric_correlation_matrix: need >= 3 models")
    names = list(reports[0].metrics)
    for rep in reports:
        if list(rep.metrics) != names:
            raise DataError(f"metric report for {rep.model!r} does not list "
                            f"the same metrics as the first report")
    table = np.array([[rep.metrics[n] for n in names] for rep in reports])
    K = len(names)
    out = np.empty((K, K))
    for i in range(K):
        for j in range(K):
            try:
                out[i, j] = pearson(table[:, i], table[:, j])
            except UndefinedCorrelationError:
                out[i, j] = np.nan
    return names, out
