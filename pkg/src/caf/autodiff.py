"""Differentiable dense-tensor operations with reverse-mode gradients.

A Tensor wraps a float64 ndarray and, when any input of an operation is
tracked, records a backward closure; ``backward()`` on a scalar output then
accumulates gradients into every tracked leaf. The op set is exactly what
the forecaster needs: broadcasting arithmetic, (batched) matmul, reshaping,
concatenation, ELU, row-softmax restricted by a permit mask, inverted
dropout, and embedding-table lookup.

Everything is float64 and single-threaded; the models served here are small
(well under 10^5 parameters) so clean gradients and bit-reproducibility are
worth more than raw speed.

Masked softmax realizes forbidden cells by replacing their logits with -1e9
before the softmax (a literal -inf turns into NaN through 0*inf in the
backward pass), then hard-zeroes the forbidden weights and renormalizes the
row. The result is exactly a softmax over the permitted columns.
"""

from __future__ import annotations

import numpy as np

from .errors import MaskError, NumericError, ShapeError
from .rng import Rng

NEG_INF_SURROGATE = -1e9


def _as_array(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)


class Tensor:
    """Float64 array plus optional gradient accumulator and tape entry."""

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        self.values = _as_array(values)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- bookkeeping ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def backward(self) -> None:
        """Reverse-mode accumulation from this scalar into all tracked leaves."""
        if self.size != 1:
            raise ShapeError(f"backward requires a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.values))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)


def tensor(values, requires_grad: bool = False) -> Tensor:
    return Tensor(values, requires_grad=requires_grad)


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(values: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(values)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- arithmetic ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    values = a.values + b.values

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(values, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    values = a.values - b.values

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(values, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    values = a.values * b.values

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.values, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.values, b.shape))

    return _make(values, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    values = a.values / b.values

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.values, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.values / (b.values**2), b.shape))

    return _make(values, (a, b), backward)


def _swap_last2(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must have ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shapes not conformable: {a.shape} @ {b.shape}")
    values = a.values @ b.values

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ _swap_last2(b.values), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(_swap_last2(a.values) @ g, b.shape))

    return _make(values, (a, b), backward)


# -- shape manipulation --------------------------------------------------------


def reshape(a, *shape) -> Tensor:
    a = _wrap(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    values = a.values.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _make(values, (a,), backward)


def transpose(a, axes) -> Tensor:
    a = _wrap(a)
    values = a.values.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        a._accumulate(g.transpose(inverse))

    return _make(values, (a,), backward)


def swap_last2(a) -> Tensor:
    a = _wrap(a)
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def concat(tensors, axis: int) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    values = np.concatenate([t.values for t in tensors], axis=axis)
    extents = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + extents)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(start, stop)
                t._accumulate(g[tuple(idx)])

    return _make(values, tuple(tensors), backward)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of extent `length` along one axis."""
    a = _wrap(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    values = a.values[idx]

    def backward(g):
        full = np.zeros_like(a.values)
        full[idx] = g
        a._accumulate(full)

    return _make(values, (a,), backward)


# -- reductions -----------------------------------------------------------------


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    values = a.values.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape).copy())

    return _make(values, (a,), backward)


def tensor_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    count = a.size if axis is None else a.shape[axis]
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# -- nonlinearities ---------------------------------------------------------------


def elu(a) -> Tensor:
    """x for x > 0, exp(x)-1 otherwise; C1 at the origin."""
    a = _wrap(a)
    neg = np.expm1(np.minimum(a.values, 0.0))
    values = np.where(a.values > 0.0, a.values, neg)

    def backward(g):
        a._accumulate(g * np.where(a.values > 0.0, 1.0, neg + 1.0))

    return _make(values, (a,), backward)


def maximum(a, b) -> Tensor:
    """Elementwise max; at ties the first argument receives the gradient."""
    a, b = _wrap(a), _wrap(b)
    take_a = a.values >= b.values
    values = np.where(take_a, a.values, b.values)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * take_a, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * ~take_a, b.shape))

    return _make(values, (a, b), backward)


# -- attention primitives ----------------------------------------------------------


def _check_mask_rows(permit: np.ndarray) -> None:
    if not permit.any(axis=-1).all():
        bad = np.where(~permit.any(axis=-1))
        raise MaskError(f"mask forbids an entire row (first at index {bad[0][0]})")


def masked_softmax(logits, permit: np.ndarray | None) -> Tensor:
    """Row softmax over the last axis, restricted to permitted columns.

    `permit` is a boolean array broadcastable against `logits` (None means
    all-permit). Forbidden columns come out exactly 0 and each row sums to 1
    over its permitted columns.
    """
    a = _wrap(logits)
    if permit is None:
        permit = np.ones(a.shape[-2:], dtype=bool)
    permit = np.asarray(permit, dtype=bool)
    _check_mask_rows(permit)
    if permit.shape != a.shape:
        try:
            permit = np.broadcast_to(permit, a.shape)
        except ValueError as exc:
            raise ShapeError(
                f"mask shape {permit.shape} does not broadcast to logits {a.shape}"
            ) from exc

    x = np.where(permit, a.values, NEG_INF_SURROGATE)
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    e = np.where(permit, e, 0.0)  # hard zero before renormalizing
    values = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * values).sum(axis=-1, keepdims=True)
        a._accumulate(values * (g - inner))

    return _make(values, (a,), backward)


def self_attention(x, w_q, w_k, w_v, permit: np.ndarray | None) -> tuple[Tensor, Tensor]:
    """softmax(X Wq (X Wk)^T / sqrt(d) over permitted cells) X Wv.

    The scaling divisor is sqrt(d) with d the key width (Wk's output
    dimension). Returns (output, attention weights); the weights row t gives
    the mixture over input rows that produced output row t.
    """
    x, w_q, w_k, w_v = _wrap(x), _wrap(w_q), _wrap(w_k), _wrap(w_v)
    for name, w in (("w_q", w_q), ("w_k", w_k), ("w_v", w_v)):
        if w.ndim != 2:
            raise ShapeError(f"{name} must be 2-D, got shape {w.shape}")
        if w.shape[0] != x.shape[-1]:
            raise ShapeError(
                f"{name} input width {w.shape[0]} does not match features {x.shape[-1]}"
            )
    if w_q.shape[1] != w_k.shape[1]:
        raise ShapeError("query and key widths differ")
    d_key = w_k.shape[1]
    q = matmul(x, w_q)
    k = matmul(x, w_k)
    logits = mul(matmul(q, swap_last2(k)), 1.0 / np.sqrt(d_key))
    weights = masked_softmax(logits, permit)
    out = matmul(weights, matmul(x, w_v))
    return out, weights


# -- stochastic ops ------------------------------------------------------------------


def dropout(a, rate: float, rng: Rng) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate)."""
    a = _wrap(a)
    if rate <= 0.0:
        return a
    if rate >= 1.0:
        raise NumericError(f"dropout rate must be < 1, got {rate}")
    keep = rng.uniforms(a.shape) >= rate
    scale = keep / (1.0 - rate)
    values = a.values * scale

    def backward(g):
        a._accumulate(g * scale)

    return _make(values, (a,), backward)


def lookup(table, indices) -> Tensor:
    """Row gather from an embedding table; scatter-add on the way back."""
    table = _wrap(table)
    idx = np.asarray(indices, dtype=np.int64)
    if (idx < 0).any() or (idx >= table.shape[0]).any():
        raise ShapeError("lookup index out of range")
    values = table.values[idx]

    def backward(g):
        gt = np.zeros_like(table.values)
        np.add.at(gt, idx, g)
        table._accumulate(gt)

    return _make(values, (table,), backward)
