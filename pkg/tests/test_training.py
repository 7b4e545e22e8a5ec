"""Loss semantics, optimizer behavior, and the training loop."""

from __future__ import annotations

import math

import numpy as np
import pytest

from catnmt import tensor as tt
from catnmt.checkpoint import load_model
from catnmt.config import Architecture, ModelConfig, RunConfig, TrainConfig
from catnmt.data import Vocabulary
from catnmt.errors import DivergenceError, EmptyInputError
from catnmt.model import build_model
from catnmt.tensor import Tensor
from catnmt.training import Adam, train, xent_loss


# ---------------------------------------------------------------------------
# cross entropy

def test_uniform_logits_cost_log_vocab():
    V = 7
    logits = Tensor(np.zeros((2, 3, V)))
    targets = np.array([[1, 2, 3], [4, 5, 6]])
    mask = np.ones((2, 3))
    loss = xent_loss(logits, targets, mask)
    assert abs(loss.item() - math.log(V)) <= 1e-12


def test_confident_correct_logits_cost_nothing():
    V = 5
    targets = np.array([[1, 2], [3, 0]])
    data = np.zeros((2, 2, V))
    for b in range(2):
        for t in range(2):
            data[b, t, targets[b, t]] = 50.0
    loss = xent_loss(Tensor(data), targets, np.ones((2, 2)))
    assert loss.item() < 1e-6


def test_padding_does_not_move_the_loss():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(2, 3, 6))
    targets = rng.integers(0, 6, size=(2, 3))
    mask = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 0.0]])
    base = xent_loss(Tensor(logits), targets, mask).item()
    # extra all-masked column with arbitrary logits and targets
    wide_logits = np.concatenate([logits, rng.normal(size=(2, 1, 6))], axis=1)
    wide_targets = np.concatenate([targets, [[5], [5]]], axis=1)
    wide_mask = np.concatenate([mask, np.zeros((2, 1))], axis=1)
    wide = xent_loss(Tensor(wide_logits), wide_targets, wide_mask).item()
    assert abs(base - wide) <= 1e-12


def test_fully_masked_batch_is_rejected():
    with pytest.raises(EmptyInputError):
        xent_loss(Tensor(np.zeros((1, 2, 4))), np.zeros((1, 2), dtype=int),
                  np.zeros((1, 2)))


def test_loss_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(1)
    logits = Tensor(rng.normal(size=(1, 2, 4)), requires_grad=True)
    targets = np.array([[2, 0]])
    loss = xent_loss(logits, targets, np.ones((1, 2)))
    tt.backward(loss)
    probs = np.exp(logits.data - logits.data.max(axis=2, keepdims=True))
    probs /= probs.sum(axis=2, keepdims=True)
    onehot = np.zeros_like(probs)
    onehot[0, 0, 2] = onehot[0, 1, 0] = 1.0
    assert np.allclose(logits.grad, (probs - onehot) / 2.0, atol=1e-12)


# ---------------------------------------------------------------------------
# optimizer

def test_zero_gradient_leaves_parameters_alone():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.zeros(2)
    before = p.data.copy()
    Adam([p]).step()
    assert np.array_equal(p.data, before)


def test_first_step_moves_by_sign_times_lr():
    p = Tensor(np.array([0.0, 0.0, 0.0]), requires_grad=True)
    p.grad = np.array([2.0, -0.5, 1.0])
    Adam([p], lr=1e-3, clip_norm=None).step()
    assert np.allclose(p.data, [-1e-3, 1e-3, -1e-3], atol=1e-9)


def test_clipping_rescales_the_whole_gradient():
    g = np.array([3.0, 4.0])  # norm 5 exactly; use clip 2.5 => rescale 0.5
    a = Tensor(np.zeros(2), requires_grad=True)
    b = Tensor(np.zeros(2), requires_grad=True)
    a.grad = g.copy()
    b.grad = g * 0.5
    Adam([a], clip_norm=2.5).step()
    Adam([b], clip_norm=None).step()
    assert np.array_equal(a.data, b.data)


def test_quadratic_bowl_converges():
    rng = np.random.default_rng(2)
    target = rng.uniform(-1, 1, 3)
    x = Tensor(np.zeros(3), requires_grad=True)
    c = Tensor(target)
    opt = Adam([x], lr=0.05, clip_norm=None)
    final = None
    for _ in range(2000):
        x.grad = None
        diff = tt.sub(x, c)
        loss = tt.sum_all(tt.mul(diff, diff))
        final = loss.item()
        if final <= 1e-6:
            break
        tt.backward(loss)
        opt.step()
    assert final is not None and final <= 1e-6


# ---------------------------------------------------------------------------
# training loop

def tiny_setup():
    cfg = ModelConfig(Architecture.AVGPOOL_CTX, size=8, embed_dim=6,
                      enc_hidden=4, dec_hidden=8)
    train_cfg = TrainConfig(epochs=5, batch_size=4, learning_rate=5e-3, seed=3)
    model = build_model(cfg, 9, 9, seed=3)
    pairs = [([4, 5, 6], [6, 5, 4]), ([5, 6], [6, 5]),
             ([7, 8, 4], [4, 8, 7]), ([8, 7], [7, 8])]
    return model, pairs, cfg, train_cfg


def test_repeated_batch_descends():
    model, pairs, _, _ = tiny_setup()
    cfg = TrainConfig(epochs=50, batch_size=4, learning_rate=5e-3, seed=1)
    rows = train(model, pairs, cfg)
    assert len(rows) == 50  # one batch per epoch
    assert rows[-1][2] < rows[0][2]


def test_same_seed_gives_identical_logs():
    m1, pairs, _, tc = tiny_setup()
    m2, _, _, _ = tiny_setup()
    r1 = train(m1, pairs, tc)
    r2 = train(m2, pairs, tc)
    assert r1 == r2
    for (_, a), (_, b) in zip(m1.named_parameters(), m2.named_parameters()):
        assert np.array_equal(a.data, b.data)


def test_loss_log_file_format(tmp_path):
    model, pairs, _, tc = tiny_setup()
    path = tmp_path / "loss.csv"
    rows = train(model, pairs, tc, log_path=path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,step,loss"
    assert len(lines) == len(rows) + 1
    epoch, step, value = lines[1].split(",")
    assert (int(epoch), int(step)) == (rows[0][0], rows[0][1])
    assert float(value) == rows[0][2]


def test_rolling_checkpoint_matches_final_model(tmp_path):
    model, pairs, cfg, tc = tiny_setup()
    run = RunConfig(model=cfg, train=tc)
    sv = Vocabulary(["a", "b", "c", "d", "e"])
    tv = Vocabulary(["a", "b", "c", "d", "e"])
    path = tmp_path / "model.catn"
    train(model, pairs, tc, run_config=run, src_vocab=sv, tgt_vocab=tv,
          checkpoint_path=path)
    loaded, _, _, _, _ = load_model(path)
    for (_, a), (_, b) in zip(model.named_parameters(), loaded.named_parameters()):
        assert np.array_equal(a.data, b.data)


def test_progress_callback_can_stop_early():
    model, pairs, _, _ = tiny_setup()
    tc = TrainConfig(epochs=100, batch_size=4, seed=5)
    seen = []
    rows = train(model, pairs, tc,
                 progress=lambda e, v: seen.append(e) or e >= 3)
    assert seen == [1, 2, 3]
    assert rows[-1][0] == 3


def test_nan_loss_aborts_with_location():
    model, pairs, _, tc = tiny_setup()
    first = next(p for _, p in model.named_parameters())
    first.data[0, 0] = np.nan
    with pytest.raises(DivergenceError, match="epoch 1 step 1"):
        train(model, pairs, tc)


def test_empty_corpus_is_rejected():
    model, _, _, tc = tiny_setup()
    with pytest.raises(EmptyInputError):
        train(model, [], tc)
