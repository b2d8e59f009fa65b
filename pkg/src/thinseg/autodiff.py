"""Minimal reverse-mode differentiation over scalars and dense 2D fields.

A ``Tape`` records operations as they execute; ``backward`` replays them in
reverse to populate exact gradients on the leaves. Values are either python
floats (scalars) or float64 arrays (fields). Operations whose operands are
all constants are computed eagerly and not recorded, so constant-only
pipelines (e.g. the label side of a loss) run through the same code path
without taping.

Max/min pooling uses the discrete L1 ball as its window, breaks ties by
first occurrence in row-major window order, and routes the gradient to the
selected source pixel. Any NaN in a forward value raises ``NumericalError``
immediately: the epsilon guards in the losses exist precisely so that no
NaN can legitimately appear.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import ShapeMismatchError

__all__ = [
    "NumericalError",
    "Tape",
    "DiffValue",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "vsum",
    "exp",
    "sqrt",
    "sigmoid",
    "relu",
    "clamp01",
    "maxpool",
    "minpool",
]


class NumericalError(RuntimeError):
    """A forward value came out NaN; an epsilon guard is missing upstream."""


_OFFSET_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _l1_offsets(radius: int) -> tuple[np.ndarray, np.ndarray]:
    """(dy, dx) window offsets of the L1 ball, in row-major window order.

    The row-major ordering makes argmax/argmin tie-breaking deterministic:
    first occurrence in a raster scan of the window wins.
    """
    cached = _OFFSET_CACHE.get(radius)
    if cached is None:
        offs = [
            (dy, dx)
            for dy in range(-radius, radius + 1)
            for dx in range(-radius, radius + 1)
            if abs(dy) + abs(dx) <= radius
        ]
        cached = (
            np.array([o[0] for o in offs], dtype=np.int64),
            np.array([o[1] for o in offs], dtype=np.int64),
        )
        _OFFSET_CACHE[radius] = cached
    return cached


def _check_value(value):
    if isinstance(value, np.ndarray):
        arr = value.astype(np.float64, copy=False)
        if arr.ndim != 2:
            raise ValueError(f"field values must be 2D, got shape {arr.shape}")
        return arr
    return float(value)


def _is_nan(value) -> bool:
    if isinstance(value, np.ndarray):
        return bool(np.isnan(value).any())
    return math.isnan(value)


class Tape:
    """Append-only record of operations for one or more backward passes."""

    def __init__(self):
        # One entry per node: list of (parent_index, pullback) edges.
        self._edges: list[list] = []
        self._grads: list | None = None

    def _record(self, edges) -> int:
        self._edges.append(edges)
        self._grads = None
        return len(self._edges) - 1

    def leaf(self, value) -> "DiffValue":
        """A differentiable input; its gradient is available after backward."""
        return DiffValue(self, _check_value(value), self._record([]))

    def constant(self, value) -> "DiffValue":
        """A value that participates in the forward pass but carries no gradient."""
        return DiffValue(self, _check_value(value), None)


class DiffValue:
    """A scalar or field plus its position (if any) on a tape."""

    __slots__ = ("tape", "value", "_index")

    def __init__(self, tape: Tape, value, index):
        self.tape = tape
        self.value = value
        self._index = index

    @property
    def grad(self):
        """Gradient of the last backward root w.r.t. this node, or None."""
        if self._index is None or self.tape._grads is None:
            return None
        return self.tape._grads[self._index]

    @property
    def shape(self):
        return self.value.shape if isinstance(self.value, np.ndarray) else ()

    def backward(self) -> None:
        backward(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        kind = "const" if self._index is None else f"node {self._index}"
        return f"DiffValue({kind}, shape={self.shape})"


def _operands(x, y):
    if isinstance(x, DiffValue):
        tape = x.tape
    elif isinstance(y, DiffValue):
        tape = y.tape
    else:
        raise TypeError("at least one operand must be a DiffValue")
    a = x if isinstance(x, DiffValue) else tape.constant(x)
    b = y if isinstance(y, DiffValue) else tape.constant(y)
    if a.tape is not b.tape:
        raise ValueError("operands were recorded on different tapes")
    return tape, a, b


def _check_shapes(a, b) -> None:
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray) and a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def _fit(grad, parent_value):
    """Reduce a gradient onto a parent's shape (scalar parents sum over the field)."""
    if isinstance(parent_value, np.ndarray):
        if not isinstance(grad, np.ndarray):
            return np.full(parent_value.shape, grad, dtype=np.float64)
        return grad
    if isinstance(grad, np.ndarray):
        return float(grad.sum())
    return grad


def _make(tape, value, edges) -> DiffValue:
    if _is_nan(value):
        raise NumericalError("NaN produced in forward computation")
    index = tape._record(edges) if edges else None
    return DiffValue(tape, value, index)


def _binary(x, y, forward, da, db) -> DiffValue:
    tape, a, b = _operands(x, y)
    _check_shapes(a.value, b.value)
    out = forward(a.value, b.value)
    edges = []
    if a._index is not None:
        edges.append((a._index, lambda g, a=a, b=b: _fit(da(g, a.value, b.value), a.value)))
    if b._index is not None:
        edges.append((b._index, lambda g, a=a, b=b: _fit(db(g, a.value, b.value), b.value)))
    return _make(tape, out, edges)


def add(x, y) -> DiffValue:
    return _binary(x, y, lambda a, b: a + b, lambda g, a, b: g, lambda g, a, b: g)


def sub(x, y) -> DiffValue:
    return _binary(x, y, lambda a, b: a - b, lambda g, a, b: g, lambda g, a, b: -g)


def mul(x, y) -> DiffValue:
    return _binary(x, y, lambda a, b: a * b, lambda g, a, b: g * b, lambda g, a, b: g * a)


def _div_forward(a, b):
    # np.divide so scalar 0/0 yields NaN (caught by the fail-fast check)
    # instead of ZeroDivisionError
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.divide(a, b)
    return out if isinstance(out, np.ndarray) else float(out)


def div(x, y) -> DiffValue:
    """Elementwise division; call sites keep denominators away from 0 via epsilons."""
    return _binary(
        x,
        y,
        _div_forward,
        lambda g, a, b: g / b,
        lambda g, a, b: -g * a / (b * b),
    )


def _unary(x, forward, dx) -> DiffValue:
    if not isinstance(x, DiffValue):
        raise TypeError("operand must be a DiffValue")
    out = forward(x.value)
    edges = []
    if x._index is not None:
        edges.append((x._index, lambda g, x=x, out=out: dx(g, x.value, out)))
    return _make(x.tape, out, edges)


def vsum(x) -> DiffValue:
    """Sum of all elements, as a scalar node."""
    return _unary(
        x,
        lambda v: float(np.sum(v)),
        lambda g, v, out: np.full(v.shape, g, dtype=np.float64) if isinstance(v, np.ndarray) else g,
    )


def exp(x) -> DiffValue:
    return _unary(x, lambda v: np.exp(v) if isinstance(v, np.ndarray) else math.exp(v),
                  lambda g, v, out: g * out)


def sqrt(x) -> DiffValue:
    return _unary(x, lambda v: np.sqrt(v) if isinstance(v, np.ndarray) else math.sqrt(v),
                  lambda g, v, out: g * 0.5 / out)


def _sigmoid_forward(v):
    if isinstance(v, np.ndarray):
        out = np.empty_like(v)
        pos = v >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ev = np.exp(v[~pos])
        out[~pos] = ev / (1.0 + ev)
        return out
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    ev = math.exp(v)
    return ev / (1.0 + ev)


def sigmoid(x) -> DiffValue:
    return _unary(x, _sigmoid_forward, lambda g, v, out: g * out * (1.0 - out))


def relu(x) -> DiffValue:
    return _unary(
        x,
        lambda v: np.maximum(v, 0.0) if isinstance(v, np.ndarray) else max(v, 0.0),
        lambda g, v, out: g * (v > 0),
    )


def clamp01(x) -> DiffValue:
    """Clamp into [0, 1]; the gradient passes through the closed identity region."""
    return _unary(
        x,
        lambda v: np.clip(v, 0.0, 1.0) if isinstance(v, np.ndarray) else min(max(v, 0.0), 1.0),
        lambda g, v, out: g * ((v >= 0.0) & (v <= 1.0)),
    )


def _pool(x, radius: int, take_max: bool) -> DiffValue:
    if not isinstance(x, DiffValue):
        raise TypeError("operand must be a DiffValue")
    if radius < 1:
        raise ValueError(f"pool radius must be >= 1, got {radius}")
    v = x.value
    if not isinstance(v, np.ndarray):
        raise ValueError("pooling requires a field operand")
    dys, dxs = _l1_offsets(radius)
    h, w = v.shape
    pad = -np.inf if take_max else np.inf
    stack = np.full((len(dys), h, w), pad, dtype=np.float64)
    for k in range(len(dys)):
        dy, dx = int(dys[k]), int(dxs[k])
        ty = slice(max(0, -dy), h - max(0, dy))
        tx = slice(max(0, -dx), w - max(0, dx))
        sy = slice(max(0, dy), h - max(0, -dy))
        sx = slice(max(0, dx), w - max(0, -dx))
        stack[k][ty, tx] = v[sy, sx]
    arg = np.argmax(stack, axis=0) if take_max else np.argmin(stack, axis=0)
    out = np.take_along_axis(stack, arg[None], axis=0)[0]
    edges = []
    if x._index is not None:

        def pull(g, arg=arg, dys=dys, dxs=dxs, shape=v.shape):
            yy, xx = np.indices(shape)
            src_y = (yy + dys[arg]).ravel()
            src_x = (xx + dxs[arg]).ravel()
            gi = np.zeros(shape, dtype=np.float64)
            np.add.at(gi, (src_y, src_x), np.asarray(g, dtype=np.float64).ravel())
            return gi

        edges.append((x._index, pull))
    return _make(x.tape, out, edges)


def maxpool(x, radius: int = 1) -> DiffValue:
    """Max over the L1 ball of ``radius`` around each pixel, clipped to the grid."""
    return _pool(x, radius, take_max=True)


def minpool(x, radius: int = 1) -> DiffValue:
    """Min over the L1 ball of ``radius`` around each pixel, clipped to the grid."""
    return _pool(x, radius, take_max=False)


def backward(root: DiffValue) -> None:
    """Populate gradients of every recorded node reachable from ``root``.

    The root must be a scalar node. Nodes are visited exactly once, in
    reverse topological (= recording) order, so the pass is deterministic.
    """
    if isinstance(root.value, np.ndarray):
        raise ValueError("backward requires a scalar-valued root")
    if root._index is None:
        raise ValueError("backward requires a recorded (non-constant) root")
    tape = root.tape
    grads: list = [None] * len(tape._edges)
    grads[root._index] = 1.0
    for index in range(root._index, -1, -1):
        g = grads[index]
        if g is None:
            continue
        for parent, pull in tape._edges[index]:
            contribution = pull(g)
            if grads[parent] is None:
                grads[parent] = contribution
            else:
                grads[parent] = grads[parent] + contribution
    tape._grads = grads
