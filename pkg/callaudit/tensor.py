"""
A small dense tensor with reverse-mode automatic differentiation on top of numpy.

Every differentiable operation records its parents and a closure that maps the
output gradient to one gradient per parent. `Tensor.backward` walks the recorded
graph in reverse topological order and accumulates gradients into the leaves
that require them.

Arrays are float32 unless `default_dtype(np.float64)` is active; gradient checks
run in float64. `checked_mode()` makes every operation reject NaN and infinite
inputs (softmax, log-softmax and max accept -inf, which masking relies on).
Both modes and `no_grad()` are per thread.
"""

from __future__ import annotations

import threading
import zlib
from collections.abc import Callable, Generator, Sequence
from contextlib import contextmanager
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import NonFiniteInput, NotScalarLoss, ShapeMismatch, TensorError

class _Modes(threading.local):
    """Per-thread mode flags; worker threads start from the defaults."""

    default_dtype: np.dtype[Any] = np.dtype(np.float32)
    checked: bool = False
    grad_enabled: bool = True


_modes = _Modes()

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


@contextmanager
def default_dtype(dtype: Any) -> Generator[None, None, None]:
    """Makes new tensors use `dtype` inside the block."""
    previous = _modes.default_dtype
    _modes.default_dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _modes.default_dtype = previous


def get_default_dtype() -> np.dtype[Any]:
    return _modes.default_dtype


def is_checked() -> bool:
    return _modes.checked


@contextmanager
def checked_mode(enabled: bool = True) -> Generator[None, None, None]:
    """Rejects non-finite operation inputs with `NonFiniteInput` inside the block."""
    previous = _modes.checked
    _modes.checked = enabled
    try:
        yield
    finally:
        _modes.checked = previous


@contextmanager
def no_grad() -> Generator[None, None, None]:
    """Skips graph recording inside the block."""
    previous = _modes.grad_enabled
    _modes.grad_enabled = False
    try:
        yield
    finally:
        _modes.grad_enabled = previous


def make_rng(seed: int, *stream: str | int) -> np.random.Generator:
    """
    Returns a Philox generator for `seed`, optionally on an independent named stream.

    The same `(seed, stream)` always yields the same sequence.
    """
    key = tuple(
        zlib.crc32(part.encode()) if isinstance(part, str) else int(part) for part in stream
    )
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _check(op: str, *arrays: np.ndarray, allow_neg_inf: bool = False) -> None:
    if not _modes.checked:
        return
    for array in arrays:
        if np.isnan(array).any() or np.isposinf(array).any():
            raise NonFiniteInput(f"{op}: input contains NaN or +inf")
        if not allow_neg_inf and np.isneginf(array).any():
            raise NonFiniteInput(f"{op}: input contains -inf")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(op, a.shape, b.shape) from None


def _norm_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else axis
    return tuple(sorted(a % ndim for a in axes))


class Tensor:
    """A numpy array that can take part in reverse-mode differentiation."""

    __slots__ = ("_backward", "_parents", "data", "grad", "name", "requires_grad")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        dtype: Any = None,
        name: str | None = None,
    ) -> None:
        if dtype is None:
            dtype = _modes.default_dtype
        self.data: np.ndarray = np.array(data, dtype=dtype)
        self.requires_grad: bool = requires_grad
        self.grad: np.ndarray | None = None
        self.name: str | None = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def _result(
        cls, data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn
    ) -> Tensor:
        out = cls.__new__(Tensor)
        out.data = np.asarray(data)
        out.grad = None
        out.name = None
        out.requires_grad = _modes.grad_enabled and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def _lift(self, value: Tensor | float | int | np.ndarray) -> Tensor:
        if isinstance(value, Tensor):
            return value
        return Tensor(np.asarray(value, dtype=self.data.dtype), dtype=self.data.dtype)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """
        Accumulates d(self)/d(leaf) into `.grad` of every leaf that requires it.

        Calling it twice without clearing gradients adds the gradients twice.

        :raises NotScalarLoss: when `grad` is omitted and self has more than one element
        """
        if grad is None:
            if self.data.size != 1:
                raise NotScalarLoss(f"backward() needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return

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

        pending: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                g = np.asarray(g, dtype=node.data.dtype)
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g), strict=True):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad

    # arithmetic

    def __add__(self, other: Tensor | float | np.ndarray) -> Tensor:
        return add(self, self._lift(other))

    def __radd__(self, other: float) -> Tensor:
        return add(self._lift(other), self)

    def __sub__(self, other: Tensor | float | np.ndarray) -> Tensor:
        return sub(self, self._lift(other))

    def __rsub__(self, other: float) -> Tensor:
        return sub(self._lift(other), self)

    def __mul__(self, other: Tensor | float | np.ndarray) -> Tensor:
        return mul(self, self._lift(other))

    def __rmul__(self, other: float) -> Tensor:
        return mul(self._lift(other), self)

    def __truediv__(self, other: Tensor | float | np.ndarray) -> Tensor:
        return div(self, self._lift(other))

    def __rtruediv__(self, other: float) -> Tensor:
        return div(self._lift(other), self)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __pow__(self, exponent: float) -> Tensor:
        return power(self, exponent)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        return getitem(self, index)

    # shorthands

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return tsum(self, axis, keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return mean(self, axis, keepdims)

    def max(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return tmax(self, axis, keepdims)

    def reshape(self, *shape: int) -> Tensor:
        return reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        return transpose(self, axes or None)

    def swapaxes(self, a: int, b: int) -> Tensor:
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def exp(self) -> Tensor:
        return exp(self)

    def log(self) -> Tensor:
        return log(self)

    def sqrt(self) -> Tensor:
        return sqrt(self)


def tensor(data: Any, requires_grad: bool = False, dtype: Any = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), requires_grad=requires_grad)


def ones(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(tuple(shape)), requires_grad=requires_grad)


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast("add", a, b)
    _check("add", a.data, b.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._result(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast("sub", a, b)
    _check("sub", a.data, b.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._result(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast("mul", a, b)
    _check("mul", a.data, b.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._result(a.data * b.data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    _broadcast("div", a, b)
    _check("div", a.data, b.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return Tensor._result(a.data / b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return Tensor._result(-a.data, (a,), lambda g: (-g,))


def power(a: Tensor, exponent: float) -> Tensor:
    _check("pow", a.data)
    out = a.data**exponent

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * exponent * a.data ** (exponent - 1),)

    return Tensor._result(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatch("matmul", a.shape, b.shape) from None
    _check("matmul", a.data, b.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._result(a.data @ b.data, (a, b), backward)


def exp(a: Tensor) -> Tensor:
    _check("exp", a.data)
    out = np.exp(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    _check("log", a.data)
    return Tensor._result(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    _check("sqrt", a.data)
    out = np.sqrt(a.data)
    return Tensor._result(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a: Tensor) -> Tensor:
    _check("tanh", a.data)
    out = np.tanh(a.data)
    return Tensor._result(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    _check("sigmoid", a.data)
    out = np.where(
        a.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(a.data))),
        np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))),
    ).astype(a.data.dtype)
    return Tensor._result(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    _check("relu", a.data)
    positive = a.data > 0
    return Tensor._result(a.data * positive, (a,), lambda g: (g * positive,))


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    _check("gelu", a.data)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return Tensor._result(out, (a,), backward)


def tsum(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return Tensor._result(np.asarray(out), (a,), backward)


def mean(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return tsum(a, axes, keepdims) * (1.0 / max(count, 1))


def tmax(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    """Maximum; the gradient is split evenly between tied maxima."""
    _check("max", a.data, allow_neg_inf=True)
    axes = _norm_axes(axis, a.ndim)
    kept = a.data.max(axis=axes, keepdims=True)
    hits = (a.data == kept).astype(a.data.dtype)
    share = hits / hits.sum(axis=axes, keepdims=True)
    out = kept if keepdims else np.squeeze(kept, axis=axes)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (g * share,)

    return Tensor._result(np.asarray(out), (a,), backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeMismatch("reshape", a.shape, tuple(shape)) from None
    return Tensor._result(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    order = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(order))
    return Tensor._result(
        np.transpose(a.data, order), (a,), lambda g: (np.transpose(g, inverse),)
    )


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise TensorError("concat needs at least one tensor")
    first = tensors[0]
    axis = axis % first.ndim
    for other in tensors[1:]:
        same_rank = other.ndim == first.ndim
        if not same_rank or any(
            x != y
            for i, (x, y) in enumerate(zip(first.shape, other.shape, strict=True))
            if i != axis
        ):
            raise ShapeMismatch("concat", first.shape, other.shape)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return list(np.split(g, bounds, axis=axis))

    return Tensor._result(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise TensorError("stack needs at least one tensor")
    for other in tensors[1:]:
        if other.shape != tensors[0].shape:
            raise ShapeMismatch("stack", tensors[0].shape, other.shape)
    out = np.stack([t.data for t in tensors], axis=axis)
    axis = axis % out.ndim

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return Tensor._result(out, tuple(tensors), backward)


def getitem(a: Tensor, index: Any) -> Tensor:
    out = a.data[index]

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(part, (int, slice)) or part is Ellipsis for part in parts)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(a.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return Tensor._result(np.array(out), (a,), backward)


def take(a: Tensor, indices: np.ndarray, axis: int = 0) -> Tensor:
    """Gathers entries along `axis`; repeated indices accumulate gradient."""
    axis = axis % a.ndim
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < -a.shape[axis] or indices.max() >= a.shape[axis]):
        raise ShapeMismatch("take", a.shape, tuple(indices.shape))
    out = np.take(a.data, indices, axis=axis)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(a.data)
        np.add.at(full, (slice(None),) * axis + (indices,), g)
        return (full,)

    return Tensor._result(out, (a,), backward)


def scatter(values: Tensor, flat_index: np.ndarray, shape: Sequence[int]) -> Tensor:
    """
    Places `values` at distinct flat positions of a zero tensor of `shape`.

    :param values: 1-D tensor
    :param flat_index: distinct positions into the flattened output, one per value
    """
    flat_index = np.asarray(flat_index, dtype=np.int64)
    if values.ndim != 1 or values.shape[0] != flat_index.shape[0]:
        raise ShapeMismatch("scatter", values.shape, tuple(flat_index.shape))
    out = np.zeros(int(np.prod(tuple(shape))), dtype=values.data.dtype)
    out[flat_index] = values.data
    return Tensor._result(
        out.reshape(tuple(shape)), (values,), lambda g: (g.reshape(-1)[flat_index],)
    )


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replaces entries where `mask` is true; replaced entries get no gradient."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    out = np.where(mask, np.asarray(value, dtype=a.data.dtype), a.data)
    return Tensor._result(out, (a,), lambda g: (np.where(mask, 0.0, g).astype(g.dtype),))


def clamp(a: Tensor, low: float, high: float) -> Tensor:
    _check("clamp", a.data)
    inside = (a.data >= low) & (a.data <= high)
    return Tensor._result(np.clip(a.data, low, high), (a,), lambda g: (g * inside,))


def _stable_max(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return np.where(np.isfinite(m), m, 0.0).astype(x.dtype)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax along `axis`; a slice that is entirely -inf yields zeros."""
    _check("softmax", a.data, allow_neg_inf=True)
    e = np.exp(a.data - _stable_max(a.data, axis))
    total = e.sum(axis=axis, keepdims=True)
    out = e / np.where(total > 0, total, 1.0)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._result(out.astype(a.data.dtype), (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    _check("log_softmax", a.data, allow_neg_inf=True)
    shifted = a.data - _stable_max(a.data, axis)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probabilities = np.exp(out)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - probabilities * g.sum(axis=axis, keepdims=True),)

    return Tensor._result(out, (a,), backward)


def dropout(a: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zeroes entries with probability `p` and rescales by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise TensorError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    keep = (rng.random(a.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return Tensor._result(a.data * keep, (a,), lambda g: (g * keep,))


def depthwise_conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """
    Per-channel convolution along axis 1 with zero "same" padding.

    :param x: [B, N, C]
    :param weight: [C, K] with K odd
    :param bias: optional [C]
    """
    if x.ndim != 3 or weight.ndim != 2 or weight.shape[0] != x.shape[2]:
        raise ShapeMismatch("depthwise_conv1d", x.shape, weight.shape)
    k = weight.shape[1]
    if k % 2 == 0:
        raise TensorError(f"depthwise_conv1d needs an odd kernel size, got {k}")
    _check("depthwise_conv1d", x.data, weight.data)
    pad = (k - 1) // 2
    n = x.shape[1]
    padded = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    windows = sliding_window_view(padded, k, axis=1)  # [B, N, C, K]
    out = np.einsum("bnck,ck->bnc", windows, weight.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_weight = np.einsum("bnck,bnc->ck", windows, g)
        grad_padded = np.zeros_like(padded)
        for j in range(k):
            grad_padded[:, j : j + n, :] += g * weight.data[:, j]
        return grad_padded[:, pad : pad + n, :], grad_weight

    result = Tensor._result(out, (x, weight), backward)
    return result + bias if bias is not None else result


def argmin(a: Tensor | np.ndarray, axis: int = -1) -> np.ndarray:
    """Index of the minimum; ties resolve to the lowest index. Not differentiable."""
    return np.argmin(a.data if isinstance(a, Tensor) else a, axis=axis)


def argmax(a: Tensor | np.ndarray, axis: int = -1) -> np.ndarray:
    return np.argmax(a.data if isinstance(a, Tensor) else a, axis=axis)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """
    Compares autodiff against central finite differences.

    :param f: scalar-valued function of `x`
    :param x: point of evaluation; should be float64
    :param eps: finite-difference step
    :returns: max over entries of |a - n| / max(|a|, |n|, 1e-8)
    """
    saved_flag, saved_grad = x.requires_grad, x.grad
    x.requires_grad = True
    x.grad = None
    try:
        out = f(x)
        if out.data.size != 1:
            raise NotScalarLoss(f"grad_check needs a scalar function, got shape {out.shape}")
        out.backward()
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        numeric = np.zeros_like(x.data)
        with no_grad():
            for i in np.ndindex(x.data.shape):
                original = x.data[i]
                x.data[i] = original + eps
                plus = float(f(x).data.sum())
                x.data[i] = original - eps
                minus = float(f(x).data.sum())
                x.data[i] = original
                numeric[i] = (plus - minus) / (2 * eps)
    finally:
        x.requires_grad, x.grad = saved_flag, saved_grad
    if analytic.size == 0:
        return 0.0
    denominator = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denominator))
