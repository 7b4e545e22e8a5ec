"""Metric oracles: BLEU, cluster scores, probes, correlations, attention."""

from __future__ import annotations

import math

import numpy as np
import pytest

from catnmt.config import Architecture, ModelConfig
from catnmt.errors import (ConfigError, DataError, EmptyInputError,
                           UndefinedCorrelationError,
                           UnsupportedArchitectureError)
from catnmt.evaluation import (EmbeddingItem, EmbeddingSet, MetricReport,
                               alignment_export, bleu, bleu_lines,
                               cluster_classification, idb,
                               metric_correlation_matrix, nn_retrieval,
                               pearson, position_histogram, probe_classify,
                               similarity_eval, spearman)
from catnmt.model import build_model


# ---------------------------------------------------------------------------
# BLEU

def test_bleu_hand_counted_overlap_case():
    res = bleu_lines(["the cat sat on the mat"], ["the cat is on the mat"])
    assert res.precisions == [(5, 6), (3, 5), (1, 4), (0, 3)]
    assert res.score == 0.0
    assert res.brevity_penalty == 1.0


def test_bleu_identity_is_100():
    lines = ["a b c d e", "f g h i", "j k l m n o"]
    res = bleu_lines(lines, lines)
    assert res.score == 100.0


def test_bleu_brevity_penalty_exact():
    res = bleu_lines(["a b c d"], ["a b c d e"])
    assert res.precisions == [(4, 4), (3, 3), (2, 2), (1, 1)]
    assert abs(res.score - 100.0 * math.exp(1.0 - 5.0 / 4.0)) <= 1e-12


def test_bleu_clipping_caps_repeats():
    # candidate repeats "the" 4 times; reference has it twice
    res = bleu_lines(["the the the the"], ["the cat the mat"])
    assert res.precisions[0] == (2, 4)


def test_bleu_corpus_invariances():
    cands = ["a b c d e", "x y z w v"]
    refs = ["a b c d f", "x y z w u"]
    base = bleu_lines(cands, refs)
    doubled = bleu_lines(cands + cands, refs + refs)
    swapped = bleu_lines(cands[::-1], refs[::-1])
    assert abs(base.score - doubled.score) <= 1e-12
    assert abs(base.score - swapped.score) <= 1e-12
    assert base.score < 100.0


def test_bleu_input_validation():
    with pytest.raises(EmptyInputError):
        bleu([], [])
    with pytest.raises(DataError):
        bleu([["a"]], [["a"], ["b"]])


# ---------------------------------------------------------------------------
# embedding sets

def make_set(vectors, labels):
    return EmbeddingSet([EmbeddingItem(id=str(i), label=lab,
                                       vec=np.asarray(v, dtype=np.float64))
                         for i, (v, lab) in enumerate(zip(vectors, labels))])


def gaussian_clusters(k, per, dim, spread, sigma, seed):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=spread, size=(k, dim))
    vecs, labels = [], []
    for c in range(k):
        for _ in range(per):
            vecs.append(centers[c] + rng.normal(scale=sigma, size=dim))
            labels.append(f"c{c}")
    return make_set(vecs, labels)


def test_embedding_set_rejects_ragged_vectors():
    with pytest.raises(DataError):
        make_set([[1.0, 2.0], [1.0]], ["a", "b"])
    with pytest.raises(EmptyInputError):
        EmbeddingSet([])


def test_embedding_set_jsonl_round_trip(tmp_path):
    emb = make_set([[1.0, 2.0], [3.0, 4.0]], ["a", "b"])
    path = tmp_path / "emb.jsonl"
    emb.save_jsonl(path)
    back = EmbeddingSet.load_jsonl(path)
    assert back.labels == emb.labels
    assert np.array_equal(back.vectors, emb.vectors)
    path.write_text('{"id": "0", "vec": [1.0]}\n')
    with pytest.raises(DataError):
        EmbeddingSet.load_jsonl(path)


# ---------------------------------------------------------------------------
# LDA cluster classification

def test_separated_gaussians_classify_perfectly():
    emb = gaussian_clusters(k=2, per=20, dim=2, spread=10.0, sigma=0.1, seed=0)
    assert cluster_classification(emb, holdout="half", seed=1) == 100.0
    assert cluster_classification(emb, holdout="one", seed=1) == 100.0


def test_shuffled_labels_sit_at_chance():
    emb = gaussian_clusters(k=10, per=20, dim=8, spread=5.0, sigma=0.1, seed=2)
    rng = np.random.default_rng(7)
    labels = [it.label for it in emb.items]
    shuffled = make_set([it.vec for it in emb.items],
                        list(rng.permutation(labels)))
    acc = cluster_classification(shuffled, holdout="half", seed=3)
    assert 0.0 <= acc <= 25.0  # chance is 10%


def test_lda_equals_nearest_centroid_on_round_clusters():
    # symmetric point patterns give pooled covariance proportional to the
    # identity, where equal-prior LDA reduces to nearest centroid
    rng = np.random.default_rng(4)
    centers = rng.uniform(-5, 5, size=(4, 2))
    offsets = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    vecs, labels = [], []
    for k, c in enumerate(centers):
        for off in offsets:
            vecs.append(c + off)
            labels.append(f"c{k}")
    emb = make_set(vecs, labels)
    from catnmt.evaluation.clusters import LdaClassifier
    X = emb.vectors
    y = np.asarray(emb.labels, dtype=object)
    clf = LdaClassifier(X, y)
    probes = rng.uniform(-6, 6, size=(200, 2))
    lda_pick = clf.predict(probes)
    class_centers = np.stack([X[y == c].mean(axis=0) for c in clf.classes])
    dists = np.linalg.norm(probes[:, None, :] - class_centers[None], axis=2)
    centroid_pick = clf.classes[np.argmin(dists, axis=1)]
    assert np.array_equal(lda_pick, centroid_pick)


def test_holdout_guards():
    emb = make_set([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0]], ["a", "a", "b"])
    with pytest.raises(ConfigError):
        cluster_classification(emb, holdout="half")  # cluster b has 1 member
    with pytest.raises(ConfigError):
        cluster_classification(emb, holdout="third")
    solo = make_set([[0.0], [1.0]], ["a", "a"])
    with pytest.raises(ConfigError):
        cluster_classification(solo, holdout="one")  # a single cluster


def test_holdout_is_seed_deterministic():
    emb = gaussian_clusters(k=3, per=10, dim=4, spread=2.0, sigma=0.5, seed=5)
    a = cluster_classification(emb, holdout="half", seed=11)
    b = cluster_classification(emb, holdout="half", seed=11)
    assert a == b


# ---------------------------------------------------------------------------
# nearest-neighbor retrieval

def test_tight_far_clusters_retrieve_perfectly():
    emb = gaussian_clusters(k=2, per=10, dim=3, spread=50.0, sigma=0.01, seed=6)
    assert nn_retrieval(emb, "cosine") == 100.0
    assert nn_retrieval(emb, "l2") == 100.0


def test_singleton_clusters_retrieve_nothing():
    emb = make_set([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], ["a", "b", "c"])
    assert nn_retrieval(emb, "cosine") == 0.0
    assert nn_retrieval(emb, "l2") == 0.0


@pytest.mark.parametrize("metric", ["cosine", "l2"])
def test_retrieval_matches_brute_force(metric):
    rng = np.random.default_rng(7)
    emb = make_set(rng.normal(size=(50, 5)),
                   [f"c{i % 5}" for i in range(50)])
    X = emb.vectors
    hits = 0
    for i in range(50):
        best, best_j = None, None
        for j in range(50):
            if j == i:
                continue
            if metric == "l2":
                d = float(np.linalg.norm(X[i] - X[j]))
            else:
                d = 1.0 - float(X[i] @ X[j]) / (np.linalg.norm(X[i])
                                                * np.linalg.norm(X[j]))
            if best is None or d < best:
                best, best_j = d, j
        hits += emb.labels[i] == emb.labels[best_j]
    assert nn_retrieval(emb, metric) == pytest.approx(100.0 * hits / 50)


def test_duplicate_vectors_tie_to_lower_index():
    emb = make_set([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]], ["a", "b", "a"])
    # every query ties across both others and takes the lower index:
    # 0 -> 1 (miss), 1 -> 0 (miss), 2 -> 0 (hit)
    assert nn_retrieval(emb, "l2") == pytest.approx(100.0 / 3)


def test_retrieval_rotation_invariance():
    rng = np.random.default_rng(8)
    emb = make_set(rng.normal(size=(20, 4)), [f"c{i % 4}" for i in range(20)])
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    rotated = make_set(emb.vectors @ q, emb.labels)
    assert nn_retrieval(emb, "l2") == nn_retrieval(rotated, "l2")


# ---------------------------------------------------------------------------
# inverse Davies-Bouldin

def hand_clusters(distance):
    return make_set([[0.0, 0.0], [0.0, 2.0],
                     [distance, 0.0], [distance, 2.0]], ["a", "a", "b", "b"])


def test_idb_two_cluster_hand_value():
    # scatters 1 and 1, centroid gap 10: ratio 0.2 -> index 5.0
    assert idb(hand_clusters(10.0)) == pytest.approx(5.0, abs=1e-9)
    assert idb(hand_clusters(20.0)) == pytest.approx(10.0, abs=1e-9)


def test_idb_scale_invariance():
    emb = gaussian_clusters(k=3, per=8, dim=4, spread=3.0, sigma=0.3, seed=9)
    scaled = make_set(emb.vectors * 3.7, emb.labels)
    assert abs(idb(emb) - idb(scaled)) <= 1e-9


def test_idb_degenerate_cases():
    twin = make_set([[0.0, 0.0], [2.0, 0.0], [1.0, -1.0], [1.0, 1.0]],
                    ["a", "a", "b", "b"])  # both centroids at (1, 0)
    with pytest.raises(ZeroDivisionError):
        idb(twin)
    points = make_set([[0.0], [1.0]], ["a", "b"])
    with pytest.warns(UserWarning):
        assert idb(points) == math.inf
    with pytest.raises(ConfigError):
        idb(make_set([[0.0], [1.0]], ["a", "a"]))


# ---------------------------------------------------------------------------
# probes

def test_probe_separable_blobs():
    rng = np.random.default_rng(10)
    def blob(center, n):
        return center + rng.normal(scale=0.2, size=(n, 4))
    a, b = np.array([3.0, 0, 0, 0]), np.array([-3.0, 0, 0, 0])
    train = make_set(np.vstack([blob(a, 30), blob(b, 30)]),
                     ["pos"] * 30 + ["neg"] * 30)
    test = make_set(np.vstack([blob(a, 10), blob(b, 10)]),
                    ["pos"] * 10 + ["neg"] * 10)
    res = probe_classify(train, test)
    assert res.accuracy == 100.0
    assert res.baseline == 50.0


def test_probe_constant_embeddings_fall_back_to_majority():
    train = make_set([[1.0, 1.0]] * 9, ["a"] * 6 + ["b"] * 3)
    test = make_set([[1.0, 1.0]] * 4, ["a", "a", "b", "b"])
    res = probe_classify(train, test)
    assert res.accuracy == res.baseline == 50.0


def test_probe_unseen_test_class_warns_and_misses():
    train = make_set([[0.0, 1.0], [0.0, 2.0], [5.0, 1.0], [5.0, 2.0]],
                     ["a", "a", "b", "b"])
    test = make_set([[0.0, 1.5], [9.0, 9.0]], ["a", "zzz"])
    with pytest.warns(UserWarning):
        res = probe_classify(train, test)
    assert res.accuracy == 50.0


def test_probe_is_deterministic():
    emb = gaussian_clusters(k=3, per=10, dim=5, spread=2.0, sigma=0.5, seed=11)
    r1 = probe_classify(emb, emb)
    r2 = probe_classify(emb, emb)
    assert r1 == r2


# ---------------------------------------------------------------------------
# similarity and correlation

def test_similarity_perfect_and_reversed_order():
    rng = np.random.default_rng(12)
    pairs = [(rng.normal(size=3), rng.normal(size=3), 0.0) for _ in range(10)]
    def cos(a, b):
        return float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
    aligned = [(a, b, cos(a, b)) for a, b, _ in pairs]
    p, s = similarity_eval(aligned)
    assert p == pytest.approx(1.0, abs=1e-12)
    assert s == pytest.approx(1.0, abs=1e-12)
    reversed_gold = [(a, b, -cos(a, b)) for a, b, _ in pairs]
    _, s2 = similarity_eval(reversed_gold)
    assert s2 == pytest.approx(-1.0, abs=1e-12)


def test_similarity_matches_direct_formula():
    rng = np.random.default_rng(13)
    pairs = [(rng.normal(size=4), rng.normal(size=4), float(rng.normal()))
             for _ in range(20)]
    p, s = similarity_eval(pairs)
    cosines = np.array([float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
                        for a, b, _ in pairs])
    gold = np.array([g for _, _, g in pairs])
    dp = cosines - cosines.mean()
    dg = gold - gold.mean()
    want = float((dp * dg).sum()
                 / np.sqrt((dp * dp).sum() * (dg * dg).sum()))
    assert p == pytest.approx(want, abs=1e-12)
    assert -1.0 <= s <= 1.0


def test_similarity_rejects_degenerate_inputs():
    v = np.array([1.0, 0.0])
    with pytest.raises(EmptyInputError):
        similarity_eval([(v, v, 1.0), (v, v, 2.0)])
    with pytest.raises(UndefinedCorrelationError):
        similarity_eval([(v, v, 3.0)] * 5)


def test_spearman_uses_average_ranks_for_ties():
    # x has a tie at positions 1 and 2; hand-ranked: [1, 2.5, 2.5, 4]
    x = [1.0, 5.0, 5.0, 9.0]
    y = [1.0, 2.0, 3.0, 4.0]
    xr = np.array([1.0, 2.5, 2.5, 4.0])
    yr = np.array([1.0, 2.0, 3.0, 4.0])
    assert spearman(x, y) == pytest.approx(pearson(xr, yr), abs=1e-12)


def test_correlation_matrix_against_definition():
    rng = np.random.default_rng(14)
    table = rng.normal(size=(5, 4))
    names = ["cl", "nn", "idb", "bleu"]
    reports = [MetricReport(model=f"m{i}",
                            metrics=dict(zip(names, table[i])))
               for i in range(5)]
    got_names, mat = metric_correlation_matrix(reports)
    assert got_names == names
    for i in range(4):
        for j in range(4):
            assert mat[i, j] == pytest.approx(
                pearson(table[:, i], table[:, j]), abs=1e-12)
    assert np.allclose(np.diag(mat), 1.0, atol=1e-12)
    assert np.allclose(mat, mat.T, atol=1e-12)


def test_correlation_matrix_negation_and_constants():
    reports = [MetricReport(model=f"m{i}",
                            metrics={"a": float(i), "b": float(-i), "c": 7.0})
               for i in range(4)]
    names, mat = metric_correlation_matrix(reports)
    ia, ib, ic = names.index("a"), names.index("b"), names.index("c")
    assert mat[ia, ib] == pytest.approx(-1.0, abs=1e-12)
    assert np.isnan(mat[ic, :]).all() and np.isnan(mat[:, ic]).all()
    with pytest.raises(EmptyInputError):
        metric_correlation_matrix(reports[:2])
    with pytest.raises(DataError):
        metric_correlation_matrix([
            MetricReport("x", {"a": 1.0}), MetricReport("y", {"b": 1.0}),
            MetricReport("z", {"a": 1.0})])


# ---------------------------------------------------------------------------
# attention analyses

def compound_model():
    cfg = ModelConfig(Architecture.ATTN_ATTN, size=8, heads=2, embed_dim=5,
                      enc_hidden=3, dec_hidden=6, attn_hidden=4)
    model = build_model(cfg, 12, 12, seed=20)
    rng = np.random.default_rng(21)
    model.inner_att.u_score.data[...] = rng.uniform(
        -1, 1, model.inner_att.u_score.data.shape)
    model.dec_att.v.data[...] = rng.uniform(-1, 1, model.dec_att.v.data.shape)
    return model


def test_alignment_entries_reconstruct_compound_weights():
    model = compound_model()
    src = [2, 4, 5, 6, 3]
    tgt = [2, 7, 8, 3]
    entries, kept = alignment_export(model, src, tgt, threshold=0.0)
    assert len(entries) == 3 * len(src) * 2  # steps x positions x heads
    assert all(e["w"] > 0.0 for e in entries)
    assert np.allclose(kept, 1.0, atol=1e-6)
    # summing heads out reproduces the folded alignment matrix
    from catnmt.evaluation.attention import alignment_matrix
    folded = alignment_matrix(model, src, tgt)
    acc = np.zeros_like(folded)
    for e in entries:
        acc[e["t"], e["s"]] += e["w"]
    assert np.allclose(acc, folded, atol=1e-12)


def test_alignment_pruning_keeps_only_heavy_entries():
    model = compound_model()
    entries, kept = alignment_export(model, [2, 4, 5, 3], [2, 6, 3],
                                     threshold=0.01)
    assert all(e["w"] > 0.01 for e in entries)
    assert all(k <= 1.0 + 1e-9 for k in kept)


def test_alignment_refused_without_sentence_matrix():
    for arch in ("final", "attn", "attn-ctx"):
        if arch == "attn":
            cfg = ModelConfig(Architecture.ATTN, embed_dim=5, enc_hidden=3,
                              dec_hidden=6)
        elif arch == "attn-ctx":
            cfg = ModelConfig(Architecture.ATTN_CTX, size=8, heads=2,
                              embed_dim=5, enc_hidden=3, dec_hidden=6)
        else:
            cfg = ModelConfig(Architecture.FINAL, size=6, embed_dim=5,
                              enc_hidden=3, dec_hidden=6)
        model = build_model(cfg, 12, 12, seed=22)
        with pytest.raises(UnsupportedArchitectureError):
            alignment_export(model, [2, 4, 3], [2, 5, 3])


def test_uniform_attention_histograms_are_flat():
    model = compound_model()  # fresh score head would be uniform; rebuild it
    model.inner_att.u_score.data[...] = 0.0
    rows = [[4 + (i % 6) for i in range(n)] for n in (8, 9, 11, 13)]
    hist, included = position_histogram(model, rows, bins=7)
    assert included == 4
    assert hist.shape == (2, 7)
    assert np.allclose(hist, 1.0 / 7.0, atol=1e-9)


def test_concentrated_attention_lands_in_first_bin():
    model = compound_model()
    # huge score on position 0 for every head: replace A by construction is
    # not possible from outside, so drive it with a bias-free projection
    # trick instead: zero scores give uniform; here we check the binning
    # rule directly on a crafted single-position row.
    from catnmt.evaluation.attention import position_histogram as ph
    class FixedAttention:
        config = model.config
        def encode(self, ids, mask):
            T = ids.shape[1]
            A = np.zeros((1, model.config.heads, T))
            A[0, :, 0] = 1.0
            class Enc:
                pass
            enc = Enc()
            from catnmt.tensor import Tensor
            enc.A = Tensor(A)
            return enc
    hist, _ = ph(FixedAttention(), [[4] * 12], bins=4)
    assert np.allclose(hist[:, 0], 1.0, atol=1e-12)
    assert np.allclose(hist[:, 1:], 0.0, atol=1e-12)


def test_histogram_matches_brute_force_accumulation():
    model = compound_model()
    rows = [[4 + (i * 3) % 7 for i in range(n)] for n in (8, 10, 12, 15, 9)]
    bins = 5
    hist, included = position_histogram(model, rows, bins=bins)
    assert included == 5
    want = np.zeros((2, bins))
    for row in rows:
        import catnmt.tensor as tt
        with tt.no_grad():
            enc = model.encode(np.asarray([[2] + row + [3]]),
                               np.ones((1, len(row) + 2)))
        A = enc.A.data[0]
        T = A.shape[1]
        for j in range(2):
            for t in range(T):
                lo, hi = t / T, (t + 1) / T
                for k in range(bins):
                    ov = min(hi, (k + 1) / bins) - max(lo, k / bins)
                    if ov > 0:
                        want[j, k] += A[j, t] * ov * T
    want /= len(rows)
    assert np.allclose(hist, want, atol=1e-12)
    assert np.allclose(hist.sum(axis=1), 1.0, atol=1e-6)


def test_histogram_exclusion_and_guards():
    model = compound_model()
    with pytest.raises(EmptyInputError):
        position_histogram(model, [[4, 5, 6]], bins=4)  # all too short
    with pytest.raises(ConfigError):
        position_histogram(model, [[4] * 10], bins=1)
    _, included = position_histogram(model, [[4] * 10, [5] * 3], bins=4)
    assert included == 1
