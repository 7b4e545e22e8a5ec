"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation runs eagerly on row-major numpy arrays and, while gradients
are enabled, records a tape node holding its inputs and a closure for the
local backward rule.  ``backward(loss)`` replays the recorded nodes in
reverse topological order and accumulates gradients into every leaf tensor
that requires them.  Gradients add up across calls; clearing is explicit.

Shapes are checked strictly: elementwise operations demand identical shapes,
and the only broadcasting anywhere is mask application (masks are plain
numpy arrays, never differentiated).
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DegenerateDistributionError, EmptyInputError, ShapeError

_GRAD_ENABLED = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block (pure forward evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class TapeNode:
    """One recorded operation: its input tensors and local backward rule.

    ``grad_fn`` maps the output gradient to one fresh array (or None) per
    input, aligned positionally with ``inputs``.
    """

    __slots__ = ("inputs", "grad_fn")

    def __init__(self, inputs: tuple["Tensor", ...],
                 grad_fn: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]):
        self.inputs = inputs
        self.grad_fn = grad_fn


class Tensor:
    """A dense float64 array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: TapeNode | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        return self.__mul__(other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def _make(data: np.ndarray, inputs: tuple[Tensor, ...],
          grad_fn: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = TapeNode(inputs, grad_fn)
    return out


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("add", a, b)
    return _make(a.data + b.data, (a, b), lambda g: (g.copy(), g.copy()))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("sub", a, b)
    return _make(a.data - b.data, (a, b), lambda g: (g.copy(), -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a rank-1 bias along the last axis of x.

    The one sanctioned non-mask broadcast; its backward sums the output
    gradient over every leading axis.
    """
    if b.data.ndim != 1 or x.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"add_bias: shapes {x.data.shape} and {b.data.shape} differ")
    lead = tuple(range(x.data.ndim - 1))
    return _make(x.data + b.data, (x, b),
                 lambda g: (g.copy(), g.sum(axis=lead) if lead else g.copy()))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Rank-2 matrix product."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: shapes {a.data.shape} and {b.data.shape} incompatible")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over identical leading axes (no broadcasting)."""
    if a.data.ndim < 3 or b.data.ndim != a.data.ndim:
        raise ShapeError(f"bmm: shapes {a.data.shape} and {b.data.shape} incompatible")
    if a.data.shape[:-2] != b.data.shape[:-2] or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"bmm: shapes {a.data.shape} and {b.data.shape} incompatible")
    ad, bd = a.data, b.data
    return _make(
        ad @ bd, (a, b),
        lambda g: (g @ bd.swapaxes(-1, -2), ad.swapaxes(-1, -2) @ g))


# ---------------------------------------------------------------------------
# nonlinearities

def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign so exp never overflows.
    d = x.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.clip(d, 0, None))),
                 np.exp(np.clip(d, None, 0)) / (1.0 + np.exp(np.clip(d, None, 0))))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# shape surgery

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    old = x.data.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def tile(x: Tensor, axis: int, reps: int) -> Tensor:
    """Repeat a length-1 axis ``reps`` times; backward sums the copies."""
    if x.data.shape[axis] != 1:
        raise ShapeError(f"tile: axis {axis} of shape {x.data.shape} is not 1")
    return _make(np.repeat(x.data, reps, axis=axis), (x,),
                 lambda g: (g.sum(axis=axis, keepdims=True),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise EmptyInputError("concat: no tensors")
    ranks = {t.data.ndim for t in tensors}
    if len(ranks) != 1:
        raise ShapeError(f"concat: mixed ranks {[t.data.shape for t in tensors]}")
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def grad_fn(g: np.ndarray):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(data, tuple(tensors), grad_fn)


def stack(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise EmptyInputError("stack: no tensors")
    shapes = {t.data.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: mixed shapes {[t.data.shape for t in tensors]}")
    data = np.stack([t.data for t in tensors], axis=axis)

    def grad_fn(g: np.ndarray):
        return tuple(np.ascontiguousarray(s) for s in np.moveaxis(g, axis, 0))

    return _make(data, tuple(tensors), grad_fn)


# ---------------------------------------------------------------------------
# reductions and masked reductions

def sum_all(x: Tensor) -> Tensor:
    shape = x.data.shape
    return _make(np.asarray(x.data.sum()), (x,),
                 lambda g: (np.full(shape, float(g)),))


def masked_mean(x: Tensor, mask: np.ndarray, axis: int = 1) -> Tensor:
    """Mean of x over ``axis`` counting only mask==1 positions.

    x: (B, T, F); mask: (B, T) of {0,1}.  Every row needs at least one
    unmasked position.
    """
    if x.data.ndim != 3 or axis != 1 or mask.shape != x.data.shape[:2]:
        raise ShapeError(f"masked_mean: shapes {x.data.shape} and {mask.shape} incompatible")
    m = np.asarray(mask, dtype=np.float64)
    counts = m.sum(axis=1)
    if np.any(counts == 0):
        raise EmptyInputError("masked_mean: a row has no unmasked positions")
    data = (x.data * m[:, :, None]).sum(axis=1) / counts[:, None]

    def grad_fn(g: np.ndarray):
        return ((g / counts[:, None])[:, None, :] * m[:, :, None],)

    return _make(data, (x,), grad_fn)


def masked_max(x: Tensor, mask: np.ndarray, axis: int = 1) -> Tensor:
    """Per-feature max of x over ``axis`` restricted to mask==1 positions.

    Gradient flows to the first (lowest-index) maximizing position.
    """
    if x.data.ndim != 3 or axis != 1 or mask.shape != x.data.shape[:2]:
        raise ShapeError(f"masked_max: shapes {x.data.shape} and {mask.shape} incompatible")
    keep = np.asarray(mask, dtype=bool)
    if np.any(~keep.any(axis=1)):
        raise EmptyInputError("masked_max: a row has no unmasked positions")
    neg = np.where(keep[:, :, None], x.data, -np.inf)
    idx = neg.argmax(axis=1)
    data = np.take_along_axis(neg, idx[:, None, :], axis=1)[:, 0, :]
    B, _, F = x.data.shape
    shape = x.data.shape

    def grad_fn(g: np.ndarray):
        dx = np.zeros(shape)
        np.add.at(dx, (np.arange(B)[:, None], idx, np.arange(F)[None, :]), g)
        return (dx,)

    return _make(data, (x,), grad_fn)


def masked_update(new: Tensor, old: Tensor, keep: np.ndarray) -> Tensor:
    """keep*new + (1-keep)*old with keep a constant (B, 1) column of {0,1}.

    Used to freeze recurrent states across PAD steps.
    """
    _require_same_shape("masked_update", new, old)
    if keep.shape != (new.data.shape[0], 1):
        raise ShapeError(f"masked_update: mask {keep.shape} for state {new.data.shape}")
    k = np.asarray(keep, dtype=np.float64)
    return _make(k * new.data + (1.0 - k) * old.data, (new, old),
                 lambda g: (g * k, g * (1.0 - k)))


# ---------------------------------------------------------------------------
# softmax family

def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Numerically stable softmax along ``axis``.

    ``mask`` (boolean, broadcastable to x) marks positions allowed to carry
    probability; masked entries come out exactly 0.  A slice with every
    entry masked has no distribution and raises.
    """
    d = x.data
    if mask is not None:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), d.shape)
        if np.any(~keep.any(axis=axis)):
            raise DegenerateDistributionError(
                f"softmax: fully masked slice along axis {axis}")
        shifted = np.where(keep, d, -np.inf)
        shifted = shifted - shifted.max(axis=axis, keepdims=True)
        e = np.where(keep, np.exp(shifted), 0.0)
    else:
        e = np.exp(d - d.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g: np.ndarray):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return _make(y, (x,), grad_fn)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    d = x.data
    shifted = d - d.max(axis=axis, keepdims=True)
    ls = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def grad_fn(g: np.ndarray):
        return (g - np.exp(ls) * g.sum(axis=axis, keepdims=True),)

    return _make(ls, (x,), grad_fn)


# ---------------------------------------------------------------------------
# indexed access

def lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup into a (V, F) table; output has shape ids.shape + (F,)."""
    if table.data.ndim != 2:
        raise ShapeError(f"lookup: table rank {table.data.ndim} != 2")
    ids = np.asarray(ids)
    V, F = table.data.shape
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise ShapeError(f"lookup: id out of range for table with {V} rows")
    data = table.data[ids]
    tshape = table.data.shape

    def grad_fn(g: np.ndarray):
        dt = np.zeros(tshape)
        np.add.at(dt, ids.ravel(), g.reshape(-1, F))
        return (dt,)

    return _make(data, (table,), grad_fn)


def gather_last(x: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one entry along the last axis: out[...] = x[..., idx[...]]."""
    idx = np.asarray(idx)
    if idx.shape != x.data.shape[:-1]:
        raise ShapeError(f"gather_last: index shape {idx.shape} for data {x.data.shape}")
    V = x.data.shape[-1]
    flat = x.data.reshape(-1, V)
    rows = np.arange(flat.shape[0])
    cols = idx.ravel()
    if cols.size and (cols.min() < 0 or cols.max() >= V):
        raise ShapeError(f"gather_last: index out of range for width {V}")
    data = flat[rows, cols].reshape(idx.shape)
    xshape = x.data.shape

    def grad_fn(g: np.ndarray):
        dx = np.zeros((flat.shape[0], V))
        np.add.at(dx, (rows, cols), g.ravel())
        return (dx.reshape(xshape),)

    return _make(data, (x,), grad_fn)


# ---------------------------------------------------------------------------
# fused layer normalization (keeps the core free of generic broadcasting)

def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then affine."""
    F = x.data.shape[-1]
    if gain.data.shape != (F,) or bias.data.shape != (F,):
        raise ShapeError(
            f"layer_norm: gain {gain.data.shape} / bias {bias.data.shape} for width {F}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    data = y * gain.data + bias.data
    gd = gain.data
    lead = tuple(range(x.data.ndim - 1))

    def grad_fn(g: np.ndarray):
        dy = g * gd
        dgain = (g * y).sum(axis=lead) if lead else (g * y).copy()
        dbias = g.sum(axis=lead) if lead else g.copy()
        dx = inv * (dy - dy.mean(axis=-1, keepdims=True)
                    - y * (dy * y).mean(axis=-1, keepdims=True))
        return (dx, dgain, dbias)

    return _make(data, (x, gain, bias), grad_fn)


# ---------------------------------------------------------------------------
# backward pass

def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf.

    The recorded nodes are replayed in strict reverse topological order;
    repeated calls add to existing gradients.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss has shape {loss.data.shape}, not scalar")
    if not loss.requires_grad:
        return

    # Iterative postorder DFS: children appear before parents in `topo`.
    topo: list[Tensor] = []
    visited: set[int] = {id(loss)}
    stk: list[tuple[Tensor, Iterator[Tensor]]] = [(loss, iter(_parents(loss)))]
    while stk:
        node, it = stk[-1]
        child = next(it, None)
        if child is None:
            topo.append(node)
            stk.pop()
        elif id(child) not in visited:
            visited.add(id(child))
            stk.append((child, iter(_parents(child))))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(topo):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.node is None:
            if t.requires_grad:
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += g
            continue
        contribs = t.node.grad_fn(g)
        for inp, c in zip(t.node.inputs, contribs):
            if c is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] += c
            else:
                grads[key] = c


def _parents(t: Tensor) -> tuple[Tensor, ...]:
    if t.node is None:
        return ()
    return tuple(p for p in t.node.inputs if p.requires_grad)


def zero_grads(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        t.grad = None
