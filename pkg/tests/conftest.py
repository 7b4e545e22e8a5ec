"""Shared oracles and helpers for the test suite."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from catnmt.tensor import Tensor, backward, no_grad, zero_grads


def finite_difference(build: Callable[[], Tensor], param: Tensor,
                      h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the scalar build() wrt one parameter.

    Independent of the tape: build() is re-evaluated with each entry of the
    parameter nudged by +-h.
    """
    grad = np.zeros_like(param.data)
    flat = param.data.ravel()
    gflat = grad.ravel()
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = build().item()
            flat[i] = orig - h
            fm = build().item()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-8)
    return float(np.linalg.norm((a - b).ravel()) / denom)


def check_gradients(build: Callable[[], Tensor], params: Sequence[Tensor],
                    tol: float = 1e-5, h: float = 1e-5) -> float:
    """Assert tape gradients match finite differences for every parameter.

    Returns the worst relative error seen (handy when tuning tolerances).
    """
    zero_grads(params)
    loss = build()
    backward(loss)
    worst = 0.0
    for p in params:
        tape_grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        fd_grad = finite_difference(build, p, h=h)
        err = relative_error(tape_grad, fd_grad)
        worst = max(worst, err)
        assert err <= tol, f"gradient mismatch: rel err {err:.3e} > {tol:.1e}"
    return worst
