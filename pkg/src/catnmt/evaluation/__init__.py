"""Metrics over translations, sentence embeddings, and attention maps."""

from .attention import alignment_export, alignment_matrix, position_histogram
from .bleu import BleuResult, bleu, bleu_lines
from .clusters import (EmbeddingItem, EmbeddingSet, LdaClassifier,
                       cluster_classification, idb, nn_retrieval)
from .correlation import (MetricReport, metric_correlation_matrix, pearson,
                          spearman)
from .probes import ProbeResult, probe_classify, similarity_eval

__all__ = [
    "BleuResult", "bleu", "bleu_lines",
    "EmbeddingItem", "EmbeddingSet", "LdaClassifier",
    "cluster_classification", "nn_retrieval", "idb",
    "ProbeResult", "probe_classify", "similarity_eval",
    "MetricReport", "pearson", "spearman", "metric_correlation_matrix",
    "alignment_export", "alignment_matrix", "position_histogram",
]
