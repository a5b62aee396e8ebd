"""
Reverse-mode differentiation over dense float64 matrices.

Every primitive computes its value with numpy and, while a Tape is active and
one of its operands requires a gradient, appends a record holding the operands
and a closure mapping the output gradient back onto them. Tape.backward replays
the records in exact reverse order, so accumulation order is fixed by the
forward trace and repeated backward passes are bit-identical.

Tensors are always 2-D (rows, cols). Broadcasting is limited to the numpy
rules between (n, m), (1, m), (n, 1) and (1, 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from core.errors import ConfigError, EmptyNeighborhoodError, NonFiniteError, ShapeError

DTYPE = np.float64

# 1 / (1 + exp(-x)) rounds to exactly 1.0 in float64 once x exceeds ~36.7;
# outputs are held at the largest double below 1 instead.
SIGMOID_CEILING = 1.0 - 2.0**-53
SIGMOID_FLOOR = float(np.finfo(DTYPE).tiny)

DEFAULT_LEAKY_SLOPE = 0.2

_ACTIVE: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        values = np.array(data, dtype=DTYPE)
        if values.ndim == 0:
            values = values.reshape(1, 1)
        elif values.ndim == 1:
            values = values.reshape(1, -1)
        elif values.ndim != 2:
            raise ShapeError("tensor", values.shape)
        self.data = values
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, values: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = values
        out.grad = None
        out.requires_grad = False
        out.name = None
        return out

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape)
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def check_finite(self, what: str = "tensor") -> "Tensor":
        if not self.is_finite():
            raise NonFiniteError(f"{what} contains NaN or Inf")
        return self

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} {self.shape[0]}x{self.shape[1]}>"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class _Record:
    out: Tensor
    parents: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of the primitives applied while the tape is active."""

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.pop()

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, output: Tensor, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if output.data.size != 1:
                raise ShapeError("backward", output.shape)
            grad = np.ones_like(output.data)
        output.grad = np.array(grad, dtype=DTYPE).reshape(output.shape)

        for record in reversed(self.records):
            upstream = record.out.grad
            if upstream is None:
                continue
            for parent, local in zip(record.parents, record.backward(upstream)):
                if local is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(local, dtype=DTYPE)
                else:
                    parent.grad = parent.grad + local


def _record(out: Tensor, parents: Sequence[Tensor], backward) -> Tensor:
    if _ACTIVE and any(p.requires_grad for p in parents):
        out.requires_grad = True
        _ACTIVE[-1].records.append(_Record(out, tuple(parents), backward))
    return out


def lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    for axis in (0, 1):
        if shape[axis] == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def _index(index, limit: int, what: str) -> np.ndarray:
    idx = np.asarray(index, dtype=np.intp).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= limit):
        raise IndexError(f"{what}: index out of range [0, {limit})")
    return idx


# ── elementwise arithmetic ───────────────────────────────────────────────────

def add(a, b) -> Tensor:
    a, b = lift(a), lift(b)
    _check_broadcast("add", a, b)
    out = Tensor._wrap(a.data + b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = lift(a), lift(b)
    _check_broadcast("sub", a, b)
    out = Tensor._wrap(a.data - b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = lift(a), lift(b)
    _check_broadcast("mul", a, b)
    out = Tensor._wrap(a.data * b.data)
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    out = Tensor._wrap(-a.data)
    return _record(out, (a,), lambda g: (-g,))


# ── linear algebra and layout ────────────────────────────────────────────────

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = lift(a), lift(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    out = Tensor._wrap(a.data @ b.data)
    return _record(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a: Tensor) -> Tensor:
    out = Tensor._wrap(np.ascontiguousarray(a.data.T))
    return _record(out, (a,), lambda g: (g.T,))


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    if rows * cols != a.data.size:
        raise ShapeError("reshape", a.shape, (rows, cols))
    out = Tensor._wrap(a.data.reshape(rows, cols))
    return _record(out, (a,), lambda g: (g.reshape(a.shape),))


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Column-wise (axis=1) or row-wise (axis=0) concatenation."""
    parts = [lift(p) for p in parts]
    if not parts:
        raise ShapeError("concat")
    other = 1 - axis
    if len({p.shape[other] for p in parts}) != 1:
        raise ShapeError("concat", *(p.shape for p in parts))
    out = Tensor._wrap(np.concatenate([p.data for p in parts], axis=axis))
    offsets = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _record(out, parts, lambda g: np.split(g, offsets, axis=axis))


def take_rows(a: Tensor, index) -> Tensor:
    idx = _index(index, a.shape[0], "take_rows")
    out = Tensor._wrap(a.data[idx])

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _record(out, (a,), backward)


def segment_sum(a: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of `a` into `num_segments` buckets; empty buckets stay zero."""
    ids = _index(segment_ids, num_segments, "segment_sum")
    if ids.size != a.shape[0]:
        raise ShapeError("segment_sum", a.shape, ids.shape)
    values = np.zeros((num_segments, a.shape[1]), dtype=DTYPE)
    np.add.at(values, ids, a.data)
    out = Tensor._wrap(values)
    return _record(out, (a,), lambda g: (g[ids],))


def total(a: Tensor) -> Tensor:
    out = Tensor._wrap(np.array([[a.data.sum()]], dtype=DTYPE))
    return _record(out, (a,), lambda g: (np.full_like(a.data, g[0, 0]),))


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    if n == 0:
        raise ShapeError("mean", a.shape)
    out = Tensor._wrap(np.array([[a.data.mean()]], dtype=DTYPE))
    return _record(out, (a,), lambda g: (np.full_like(a.data, g[0, 0] / n),))


# ── nonlinearities ───────────────────────────────────────────────────────────

def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    np.clip(y, SIGMOID_FLOOR, SIGMOID_CEILING, out=y)
    out = Tensor._wrap(y)
    return _record(out, (a,), lambda g: (g * y * (1.0 - y),))


def leaky_relu(a: Tensor, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ConfigError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    x = a.data
    factor = np.where(x >= 0, 1.0, slope)
    out = Tensor._wrap(x * factor)
    return _record(out, (a,), lambda g: (g * factor,))


def log(a: Tensor) -> Tensor:
    x = a.data
    if (x <= 0).any():
        raise NonFiniteError("log of a non-positive value")
    out = Tensor._wrap(np.log(x))
    return _record(out, (a,), lambda g: (g / x,))


def clip(a: Tensor, low: float, high: float) -> Tensor:
    x = a.data
    inside = (x >= low) & (x <= high)
    out = Tensor._wrap(np.clip(x, low, high))
    return _record(out, (a,), lambda g: (g * inside,))


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; identity outside training."""
    if not train or rate <= 0.0:
        return a
    if rng is None:
        raise ConfigError("dropout at train time needs a random generator")
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, Tensor._wrap(keep))


# ── normalisation ────────────────────────────────────────────────────────────

def masked_softmax(scores: Tensor, mask) -> Tensor:
    """Softmax over the unmasked entries of a 1×n row; masked entries are exactly 0."""
    if scores.shape[0] != 1:
        raise ShapeError("masked_softmax", scores.shape)
    keep = np.asarray(mask, dtype=bool).reshape(-1)
    if keep.size != scores.shape[1]:
        raise ShapeError("masked_softmax", scores.shape, keep.shape)
    if not keep.any():
        raise EmptyNeighborhoodError("masked_softmax: every entry is masked")
    x = scores.data[0, keep]
    e = np.exp(x - x.max())
    y = np.zeros_like(scores.data)
    y[0, keep] = e / e.sum()
    out = Tensor._wrap(y)
    return _record(out, (scores,), lambda g: (y * (g - (g * y).sum(axis=1, keepdims=True)),))


def segment_softmax(scores: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Softmax of an n×1 score column within each segment.

    Every segment must own at least one row. Max-subtraction is done per
    segment before exponentiation.
    """
    if scores.shape[1] != 1:
        raise ShapeError("segment_softmax", scores.shape)
    ids = _index(segment_ids, num_segments, "segment_softmax")
    if ids.size != scores.shape[0]:
        raise ShapeError("segment_softmax", scores.shape, ids.shape)
    counts = np.bincount(ids, minlength=num_segments)
    if num_segments and (counts == 0).any():
        empty = int(np.flatnonzero(counts == 0)[0])
        raise EmptyNeighborhoodError(f"segment {empty} has no members to attend over")

    x = scores.data[:, 0]
    peak = np.full(num_segments, -np.inf)
    np.maximum.at(peak, ids, x)
    e = np.exp(x - peak[ids])
    denom = np.zeros(num_segments, dtype=DTYPE)
    np.add.at(denom, ids, e)
    y = (e / denom[ids]).reshape(-1, 1)
    out = Tensor._wrap(y)

    def backward(g):
        dot = np.zeros(num_segments, dtype=DTYPE)
        np.add.at(dot, ids, (g * y)[:, 0])
        return (y * (g - dot[ids].reshape(-1, 1)),)

    return _record(out, (scores,), backward)


# ── verification ─────────────────────────────────────────────────────────────

def _scalar(value: Tensor) -> float:
    if value.data.size != 1:
        raise ShapeError("objective", value.shape)
    result = value.item()
    if not np.isfinite(result):
        raise NonFiniteError(f"objective evaluated to {result!r}")
    return result


def grad_check(f: Callable, store, eps: float = 1e-4, floor: float = 1e-6) -> float:
    """Worst relative error between tape gradients and central differences.

    `f` maps the parameter store to a 1×1 tensor. The relative error of a
    coordinate is |analytic - numeric| / max(|analytic|, |numeric|, floor).
    """
    store.zero_grad()
    with Tape() as tape:
        objective = f(store)
    _scalar(objective)
    tape.backward(objective)

    worst = 0.0
    for _, param in store.items():
        analytic = param.grad if param.grad is not None else np.zeros_like(param.data)
        flat = param.data.reshape(-1)
        expected = analytic.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = _scalar(f(store))
            flat[i] = saved - eps
            down = _scalar(f(store))
            flat[i] = saved
            numeric = (up - down) / (2.0 * eps)
            err = abs(expected[i] - numeric) / max(abs(expected[i]), abs(numeric), floor)
            worst = max(worst, err)
    store.zero_grad()
    return worst
