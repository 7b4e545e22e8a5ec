"""Cross-entropy training loop: Adam, gradient clipping, rolling checkpoints."""

from __future__ import annotations

import os
from typing import Callable, Sequence

import numpy as np

from . import tensor as tt
from .config import ConfigError, RunConfig, TrainConfig
from .data import Batch, BpeModel, Vocabulary, make_batches
from .errors import DivergenceError, EmptyInputError
from .tensor import Tensor


def xent_loss(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of the gold ids over unmasked positions.

    logits: (B, T, V); targets, mask: (B, T).
    """
    mask = np.asarray(mask, dtype=np.float64)
    total = mask.sum()
    if total == 0:
        raise EmptyInputError("xent_loss: every target position is masked")
    logp = tt.log_softmax(logits, axis=2)
    picked = tt.gather_last(logp, np.asarray(targets))
    summed = tt.sum_all(tt.mul(picked, Tensor(mask)))
    return tt.scale(summed, -1.0 / total)


class Adam:
    """First/second-moment optimizer with global gradient-norm clipping.

    Clipping rescales the whole gradient vector before the moment updates,
    so the update direction is preserved.
    """

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8, clip_norm: float | None = 5.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.clip_norm = clip_norm
        self.steps = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def grad_norm(self) -> float:
        total = 0.0
        for p in self.params:
            if p.grad is not None:
                total += float((p.grad * p.grad).sum())
        return float(np.sqrt(total))

    def step(self) -> None:
        norm = self.grad_norm()
        rescale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            rescale = self.clip_norm / norm
        self.steps += 1
        bias1 = 1.0 - self.beta1 ** self.steps
        bias2 = 1.0 - self.beta2 ** self.steps
        for p, m, v in zip(self.params, self.m, self.v):
            g = (p.grad if p.grad is not None else np.zeros_like(p.data)) * rescale
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.epsilon)


def _loss_of_batch(model, batch: Batch) -> Tensor:
    logits = model.forward(batch.source, batch.source_mask, batch.target)
    return xent_loss(logits, batch.target[:, 1:], batch.target_mask[:, 1:])


ProgressFn = Callable[[int, float], bool | None]


def train(model, pairs, train_config: TrainConfig, *,
          run_config: RunConfig | None = None,
          src_vocab: Vocabulary | None = None,
          tgt_vocab: Vocabulary | None = None,
          bpe: BpeModel | None = None,
          checkpoint_path: str | os.PathLike | None = None,
          log_path: str | os.PathLike | None = None,
          progress: ProgressFn | None = None) -> list[tuple[int, int, float]]:
    """Run the optimization loop; returns (epoch, step, loss) log rows.

    With checkpoint_path set, the checkpoint is rewritten after every epoch
    (rolling single file).  progress(epoch, last_loss) may return True to
    stop after the current epoch; the loop itself never stops early.
    """
    if not pairs:
        raise EmptyInputError("train: empty corpus")
    if checkpoint_path is not None and (
            run_config is None or src_vocab is None or tgt_vocab is None):
        raise ConfigError("train: checkpointing needs run_config and vocabularies")
    from .checkpoint import save_model  # deferred: checkpoint imports model

    rng = np.random.default_rng(train_config.seed)
    opt = Adam([p for _, p in model.named_parameters()],
               lr=train_config.learning_rate, beta1=train_config.beta1,
               beta2=train_config.beta2, epsilon=train_config.epsilon,
               clip_norm=train_config.clip_norm)
    rows: list[tuple[int, int, float]] = []
    step = 0
    value = float("nan")
    for epoch in range(1, train_config.epochs + 1):
        for batch in make_batches(pairs, train_config.batch_size, rng=rng):
            step += 1
            for p in opt.params:
                p.grad = None
            loss = _loss_of_batch(model, batch)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"loss became {value} at epoch {epoch} step {step}")
            tt.backward(loss)
            opt.step()
            rows.append((epoch, step, value))
        if checkpoint_path is not None:
            save_model(checkpoint_path, model, run_config, src_vocab,
                       tgt_vocab, bpe)
        if progress is not None and progress(epoch, value):
            break
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("epoch,step,loss\n")
            for epoch, step, value in rows:
                fh.write(f"{epoch},{step},{value!r}\n")
    return rows
