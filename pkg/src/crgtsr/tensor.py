"""Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array and, while gradients are enabled, a record of
the operation that produced it. Calling ``backward`` on a scalar walks the
recorded graph once in reverse topological order and accumulates gradients
into every ancestor created with ``requires_grad=True``.

Shapes follow numpy conventions: matmul treats leading axes as batch axes,
and elementwise ops broadcast (gradients are summed back to operand shape).
All arithmetic runs in float64.
"""

from __future__ import annotations

import math
import threading

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "no_grad",
    "as_tensor",
    "matmul",
    "softmax",
    "log_softmax",
    "relu",
    "exp",
    "log",
    "tanh",
    "sigmoid",
    "concat",
    "stack",
    "narrow",
    "reshape",
    "transpose",
    "scaled_dot_attention",
    "cross_entropy",
    "lstm_cell",
    "layer_norm",
    "backward",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Disable graph recording on the current thread."""

    def __enter__(self):
        self._prev = grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __neg__(self):
        return mul(self, as_tensor(-1.0))

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were expanded by broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def backward(root: Tensor) -> None:
    """Populate .grad on all requires_grad ancestors of a scalar root."""
    if root.data.shape != ():
        raise ShapeError(f"backward root must be a scalar, got shape {root.data.shape}")
    order: list[Tensor] = []
    visit: dict[int, int] = {}
    stack = [root]
    while stack:
        node = stack[-1]
        state = visit.get(id(node), 0)
        if state == 0:
            visit[id(node)] = 1
            for p in node._parents:
                if p.requires_grad and visit.get(id(p), 0) == 0:
                    stack.append(p)
        else:
            stack.pop()
            if state == 1:
                visit[id(node)] = 2
                order.append(node)
    root.grad = np.ones((), dtype=np.float64)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# -- elementwise / broadcasting ops -------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from None

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}") from None

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.shape))

    return _make(data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from None

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data / b.data
    except ValueError:
        raise ShapeError(f"div: cannot broadcast {a.shape} with {b.shape}") from None

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), bw)


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    data = a.data ** p

    def bw(g):
        if a.requires_grad:
            _accum(a, g * p * a.data ** (p - 1.0))

    return _make(data, (a,), bw)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def bw(g):
        if a.requires_grad:
            _accum(a, g * data)

    return _make(data, (a,), bw)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def bw(g):
        if a.requires_grad:
            _accum(a, g / a.data)

    return _make(data, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def bw(g):
        if a.requires_grad:
            _accum(a, g * (1.0 - data * data))

    return _make(data, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        if a.requires_grad:
            _accum(a, g * data * (1.0 - data))

    return _make(data, (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    data = np.where(mask, a.data, 0.0)

    def bw(g):
        if a.requires_grad:
            _accum(a, g * mask)

    return _make(data, (a,), bw)


# -- matmul / reductions -------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} @ {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible batch shapes, {a.shape} @ {b.shape}") from None

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _make(data, (a, b), bw)


def _check_axis(axis: int, ndim: int, opname: str) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"{opname}: axis {axis} invalid for {ndim}-d tensor")
    return axis % ndim


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(axis, a.ndim, "softmax")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        if a.requires_grad:
            dot = (g * data).sum(axis=axis, keepdims=True)
            _accum(a, data * (g - dot))

    return _make(data, (a,), bw)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(axis, a.ndim, "log_softmax")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse
    soft = np.exp(data)

    def bw(g):
        if a.requires_grad:
            _accum(a, g - soft * g.sum(axis=axis, keepdims=True))

    return _make(data, (a,), bw)


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    if axis is None:
        data = np.asarray(a.data.sum())

        def bw(g):
            if a.requires_grad:
                _accum(a, np.broadcast_to(g, a.shape))

        return _make(data, (a,), bw)

    axis = _check_axis(axis, a.ndim, "sum")
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if a.requires_grad:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg, a.shape))

    return _make(data, (a,), bw)


def tmean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else a.shape[_check_axis(axis, a.ndim, "mean")]
    return tsum(a, axis, keepdims) * (1.0 / n)


# -- shape ops ------------------------------------------------------------


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of empty list")
    axis = _check_axis(axis, tensors[0].ndim, "concat")
    base = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(base):
            raise ShapeError(f"concat: rank mismatch {base} vs {t.shape}")
        for d in range(len(base)):
            if d != axis and t.shape[d] != base[d]:
                raise ShapeError(f"concat: extents differ off axis {axis}: {base} vs {t.shape}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        pieces = np.split(g, offsets, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                _accum(t, piece)

    return _make(data, tuple(tensors), bw)


def stack(tensors, axis: int = 0) -> Tensor:
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    axis = _check_axis(axis, a.ndim, "narrow")
    if start < 0 or start + length > a.shape[axis]:
        raise ShapeError(f"narrow: [{start}:{start + length}] out of range for axis {axis} of {a.shape}")
    idx = tuple(slice(None) if d != axis else slice(start, start + length) for d in range(a.ndim))
    data = a.data[idx].copy()

    def bw(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[idx] = g
            _accum(a, buf)

    return _make(data, (a,), bw)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None

    def bw(g):
        if a.requires_grad:
            _accum(a, g.reshape(a.shape))

    return _make(data, (a,), bw)


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    data = np.transpose(a.data, axes)
    inverse = np.argsort(axes)

    def bw(g):
        if a.requires_grad:
            _accum(a, np.transpose(g, inverse))

    return _make(data, (a,), bw)


def swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


# -- composite ops --------------------------------------------------------

MASK_PENALTY = -1e30


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """softmax(q·kᵀ/√d [+ mask penalty])·v, batched over leading axes.

    ``mask`` is boolean with True marking blocked key positions; a fully
    blocked row is rejected because its attention weights are undefined.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"attention: query/key widths differ, {q.shape} vs {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: key/value counts differ, {k.shape} vs {v.shape}")
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = matmul(q, swap_last(k)) * scale
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != scores.shape[-2:]:
            raise ShapeError(f"attention: mask shape {mask.shape} does not match scores {scores.shape[-2:]}")
        if mask.all(axis=-1).any():
            raise ValueError("attention: a query row is fully masked")
        scores = scores + Tensor(np.where(mask, MASK_PENALTY, 0.0))
    return matmul(softmax(scores, axis=-1), v)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a single 1-d (or 1×n) logit vector."""
    flat = reshape(logits, (logits.size,))
    n = flat.size
    if not 0 <= target < n:
        raise IndexError(f"cross_entropy: target {target} out of range for {n} classes")
    shift = Tensor(flat.data.max())
    z = flat - shift
    lse = log(tsum(exp(z)))
    onehot = np.zeros(n)
    onehot[target] = 1.0
    return lse - tsum(z * Tensor(onehot))


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor):
    """One standard LSTM step; gate order is input, forget, candidate, output.

    Accepts 1-d or 1×d row inputs and returns (h, c) with the input's rank.
    """
    flat_in = x.ndim == 1
    x2 = reshape(x, (1, x.size)) if flat_in else x
    h2 = reshape(h_prev, (1, h_prev.size)) if h_prev.ndim == 1 else h_prev
    c2 = reshape(c_prev, (1, c_prev.size)) if c_prev.ndim == 1 else c_prev
    d_in, d_h = x2.shape[-1], h2.shape[-1]
    if w_ih.shape != (d_in, 4 * d_h):
        raise ShapeError(f"lstm_cell: w_ih shape {w_ih.shape}, expected {(d_in, 4 * d_h)}")
    if w_hh.shape != (d_h, 4 * d_h):
        raise ShapeError(f"lstm_cell: w_hh shape {w_hh.shape}, expected {(d_h, 4 * d_h)}")
    if b.shape != (4 * d_h,):
        raise ShapeError(f"lstm_cell: bias shape {b.shape}, expected {(4 * d_h,)}")
    gates = matmul(x2, w_ih) + matmul(h2, w_hh) + b
    i = sigmoid(narrow(gates, 1, 0, d_h))
    f = sigmoid(narrow(gates, 1, d_h, d_h))
    g = tanh(narrow(gates, 1, 2 * d_h, d_h))
    o = sigmoid(narrow(gates, 1, 3 * d_h, d_h))
    c = f * c2 + i * g
    h = o * tanh(c)
    if flat_in:
        return reshape(h, (d_h,)), reshape(c, (d_h,))
    return h, c


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    m = tmean(x, axis=-1, keepdims=True)
    centered = x - m
    var = tmean(centered * centered, axis=-1, keepdims=True)
    return centered * power(var + eps, -0.5) * gamma + beta
