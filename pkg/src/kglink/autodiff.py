"""Dense-tensor computation with recorded operations and reverse-mode gradients.

Every operation returns a new :class:`Tensor` that remembers its inputs and a
backward closure; calling :meth:`Tensor.backward` on a scalar result walks the
recorded graph in reverse topological order and accumulates gradients into all
tensors created with ``requires_grad=True``.  Gradients add across multiple
uses of the same tensor.

Arrays are float64 unless the caller supplies float32; tests and gradient
checks run in 64-bit, large runs may opt into 32-bit.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable recording inside the block (evaluation-only forward passes)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def _coerce(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """Dense n-dimensional array participating in a recorded computation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _coerce(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate ``grad`` for every recorded tensor reachable from this scalar."""
        if self.data.size != 1:
            raise DimensionError(
                f"backward requires a scalar; got shape {self.data.shape}"
            )
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # operator sugar -------------------------------------------------------
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

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _accumulate(target: Tensor, grad: np.ndarray) -> None:
    if target.grad is None:
        target.grad = grad.astype(target.data.dtype, copy=True)
    else:
        target.grad = target.grad + grad


def _record(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return _record(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _record(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(data, (a, b), backward)


def neg(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, -g)

    return _record(-x.data, (x,), backward)


def absolute(x) -> Tensor:
    x = as_tensor(x)
    sign = np.sign(x.data)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * sign)

    return _record(np.abs(x.data), (x,), backward)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # evaluate through exp of the negated magnitude to stay finite at extremes
    out = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-x.data)),
                   np.exp(np.minimum(x.data, 0)) / (1.0 + np.exp(np.minimum(x.data, 0))))

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * out * (1.0 - out))

    return _record(out, (x,), backward)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * (1.0 - out * out))

    return _record(out, (x,), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * mask)

    return _record(x.data * mask, (x,), backward)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * out)

    return _record(out, (x,), backward)


def log(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g / x.data)

    return _record(np.log(x.data), (x,), backward)


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp values into [lo, hi]; gradient is passed through inside the range."""
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * inside)

    return _record(np.clip(x.data, lo, hi), (x,), backward)


# shape and indexing --------------------------------------------------------

def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    original = x.data.shape

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g.reshape(original))

    return _record(x.data.reshape(shape), (x,), backward)


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got shape {x.shape}")

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g.T)

    return _record(x.data.T, (x,), backward)


def concat(parts: Iterable, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for part, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            if part.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(start, stop)
                _accumulate(part, g[tuple(index)])

    return _record(data, tuple(parts), backward)


def gather_rows(x, indices) -> Tensor:
    """Select rows ``x[indices]``; backward scatter-adds into the source rows."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            _accumulate(x, gx)

    return _record(x.data[idx], (x,), backward)


def scatter_add_rows(x, indices, n_rows: int) -> Tensor:
    """Sum rows of ``x`` into ``n_rows`` buckets given per-row bucket indices."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape[0] != x.data.shape[0]:
        raise DimensionError(
            f"scatter_add_rows: {idx.shape[0]} indices for {x.data.shape[0]} rows"
        )
    out = np.zeros((n_rows,) + x.data.shape[1:], dtype=x.data.dtype)
    np.add.at(out, idx, x.data)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g[idx])

    return _record(out, (x,), backward)


# linear algebra ------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: incompatible shapes {a.shape} x {b.shape}"
        )
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _record(data, (a, b), backward)


# reductions ----------------------------------------------------------------

def reduce_sum(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    data = x.data.sum(axis=axis)

    def backward(g):
        if x.requires_grad:
            if axis is None:
                _accumulate(x, np.broadcast_to(g, x.data.shape).copy())
            else:
                _accumulate(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy())

    return _record(data, (x,), backward)


def reduce_mean(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else x.data.shape[axis]
    data = x.data.mean(axis=axis)

    def backward(g):
        if x.requires_grad:
            if axis is None:
                _accumulate(x, np.broadcast_to(g / count, x.data.shape).copy())
            else:
                _accumulate(x, np.broadcast_to(np.expand_dims(g / count, axis), x.data.shape).copy())

    return _record(data, (x,), backward)


def l1_norm(x) -> Tensor:
    """Sum of absolute values along the last axis."""
    x = as_tensor(x)
    sign = np.sign(x.data)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, np.expand_dims(g, -1) * sign)

    return _record(np.abs(x.data).sum(axis=-1), (x,), backward)


# structured operations ------------------------------------------------------

def segment_softmax(logits, segments, n_segments: int) -> Tensor:
    """Softmax normalized independently within each segment.

    The per-segment maximum is subtracted before exponentiation, which leaves
    the result unchanged but keeps it finite for large logits.  Segments with
    a single element map to exactly 1.0.
    """
    x = as_tensor(logits)
    if x.ndim != 1:
        raise DimensionError(f"segment_softmax expects 1-D logits, got shape {x.shape}")
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape != x.data.shape:
        raise DimensionError(
            f"segment ids shape {seg.shape} does not match logits shape {x.data.shape}"
        )
    if seg.size and (seg.min() < 0 or seg.max() >= n_segments):
        raise DimensionError("segment id out of range")

    seg_max = np.full(n_segments, -np.inf, dtype=x.data.dtype)
    np.maximum.at(seg_max, seg, x.data)
    shifted = np.exp(x.data - seg_max[seg])
    denom = np.zeros(n_segments, dtype=x.data.dtype)
    np.add.at(denom, seg, shifted)
    out = shifted / denom[seg]

    def backward(g):
        if x.requires_grad:
            weighted = np.zeros(n_segments, dtype=x.data.dtype)
            np.add.at(weighted, seg, g * out)
            _accumulate(x, out * (g - weighted[seg]))

    return _record(out, (x,), backward)


def conv2d_valid(x, kernels, bias) -> Tensor:
    """Valid cross-correlation with per-output-channel bias.

    ``x`` is (c_in, H, W) or batched (B, c_in, H, W); ``kernels`` is
    (c_out, c_in, kh, kw).  Output spatial size is (H-kh+1, W-kw+1).
    """
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    squeeze = x.ndim == 3
    data = x.data[None] if squeeze else x.data
    if data.ndim != 4 or kernels.ndim != 4:
        raise DimensionError(
            f"conv2d_valid: input shape {x.shape}, kernel shape {kernels.shape}"
        )
    batch, c_in, height, width = data.shape
    c_out, kc, kh, kw = kernels.shape
    if kc != c_in:
        raise DimensionError(
            f"conv2d_valid: kernel channels {kc} do not match input channels {c_in}"
        )
    if kh > height or kw > width:
        raise DimensionError(
            f"conv2d_valid: kernel {kh}x{kw} larger than input {height}x{width}"
        )
    if bias.data.shape != (c_out,):
        raise DimensionError(f"conv2d_valid: bias shape {bias.shape}, expected ({c_out},)")

    windows = np.lib.stride_tricks.sliding_window_view(data, (kh, kw), axis=(2, 3))
    out = np.einsum("bchwij,ocij->bohw", windows, kernels.data, optimize=True)
    out = out + bias.data[None, :, None, None]

    def backward(g):
        g4 = g[None] if squeeze else g
        if kernels.requires_grad:
            gk = np.einsum("bchwij,bohw->ocij", windows, g4, optimize=True)
            _accumulate(kernels, gk)
        if bias.requires_grad:
            _accumulate(bias, g4.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            padded = np.pad(g4, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
            gwin = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(2, 3))
            flipped = kernels.data[:, :, ::-1, ::-1]
            gx = np.einsum("bohwij,ocij->bchw", gwin, flipped, optimize=True)
            _accumulate(x, gx[0] if squeeze else gx)

    result = out[0] if squeeze else out
    return _record(result, (x, kernels, bias), backward)


def dropout(x, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: identity when not training or when rate is zero."""
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise DimensionError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    keep = keep.astype(x.data.dtype)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * keep)

    return _record(x.data * keep, (x,), backward)


def check_finite(x: Tensor, what: str) -> Tensor:
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"non-finite values in {what}")
    return x
