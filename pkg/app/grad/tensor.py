"""Reverse-mode differentiable tensors over numpy arrays.

Every primitive builds an output ``Tensor`` holding references to its inputs
and a closure that pushes the output gradient back to them. ``backward``
orders the graph topologically (iteratively, so long BPTT chains do not hit
the recursion limit) and runs the closures once each, outputs first.
"""

from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import ContractError

_settings = {"dtype": np.float32, "check_finite": True}


def default_dtype():
    return _settings["dtype"]


@contextmanager
def precision(dtype=np.float64) -> Iterator[None]:
    """Build new tensors in ``dtype`` inside the block (64-bit test mode)."""
    previous = _settings["dtype"]
    _settings["dtype"] = dtype
    try:
        yield
    finally:
        _settings["dtype"] = previous


@contextmanager
def finite_checks(enabled: bool) -> Iterator[None]:
    previous = _settings["check_finite"]
    _settings["check_finite"] = enabled
    try:
        yield
    finally:
        _settings["check_finite"] = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(
        self,
        data,
        parents: Sequence["Tensor"] = (),
        op: str = "",
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.data = np.asarray(data, dtype=default_dtype())
        if _settings["check_finite"] and not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite value produced by {op or 'input'} {name or ''}".strip())
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name
        self.op = op
        self._parents: Tuple["Tensor", ...] = tuple(p for p in parents if p.requires_grad)
        self._backward: Callable[[], None] = _noop

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        g = _unbroadcast(np.asarray(g), self.data.shape).astype(self.data.dtype, copy=True)
        self.grad = g if self.grad is None else self.grad + g

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ContractError(f"backward without a seed gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(_topological_order(self)):
            if node.grad is not None:
                node._backward()

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{label})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def _noop() -> None:
    return None


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
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
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _broadcast_shapes(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ContractError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from e


# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("add", a, b)
    out = Tensor(a.data + b.data, (a, b), "add")

    def _backward():
        a.accumulate(out.grad)
        b.accumulate(out.grad)

    out._backward = _backward
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("mul", a, b)
    out = Tensor(a.data * b.data, (a, b), "mul")

    def _backward():
        a.accumulate(out.grad * b.data)
        b.accumulate(out.grad * a.data)

    out._backward = _backward
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data, (a,), "neg")
    out._backward = lambda: a.accumulate(-out.grad)
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    out = Tensor(a.data * factor, (a,), "scale")
    out._backward = lambda: a.accumulate(out.grad * factor)
    return out


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data), (a,), "tanh")
    out._backward = lambda: a.accumulate(out.grad * (1.0 - out.data**2))
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = Tensor(0.5 * (1.0 + np.tanh(0.5 * a.data)), (a,), "sigmoid")
    out._backward = lambda: a.accumulate(out.grad * out.data * (1.0 - out.data))
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0), (a,), "relu")
    out._backward = lambda: a.accumulate(out.grad * (a.data > 0))
    return out


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data), (a,), "exp")
    out._backward = lambda: a.accumulate(out.grad * out.data)
    return out


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data), (a,), "log")
    out._backward = lambda: a.accumulate(out.grad / a.data)
    return out


def abs(a: Tensor) -> Tensor:  # noqa: A001
    """Absolute value; the subgradient at exactly 0 is 0."""
    out = Tensor(np.abs(a.data), (a,), "abs")
    out._backward = lambda: a.accumulate(out.grad * np.sign(a.data))
    return out


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp to [low, high]; gradient flows only where the input is inside."""
    out = Tensor(np.clip(a.data, low, high), (a,), "clip")
    out._backward = lambda: a.accumulate(out.grad * ((a.data >= low) & (a.data <= high)))
    return out


# reductions and normalizations


def sum(a: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    out = Tensor(a.data.sum(axis=axis), (a,), "sum")

    def _backward():
        g = out.grad if axis is None else np.expand_dims(out.grad, axis)
        a.accumulate(np.broadcast_to(g, a.shape))

    out._backward = _backward
    return out


def mean(a: Tensor) -> Tensor:
    return scale(sum(a), 1.0 / a.size)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = Tensor(e / e.sum(axis=-1, keepdims=True), (a,), "softmax")

    def _backward():
        s = out.data
        a.accumulate(s * (out.grad - (out.grad * s).sum(axis=-1, keepdims=True)))

    out._backward = _backward
    return out


def logsumexp(a: Tensor) -> Tensor:
    """log(sum(exp(a))) over the last axis, computed stably."""
    peak = a.data.max(axis=-1, keepdims=True)
    e = np.exp(a.data - peak)
    total = e.sum(axis=-1, keepdims=True)
    out = Tensor((np.log(total) + peak).squeeze(-1), (a,), "logsumexp")

    def _backward():
        a.accumulate(np.expand_dims(out.grad, -1) * e / total)

    out._backward = _backward
    return out


def l2_normalize(a: Tensor, eps: float = 1e-8) -> Tensor:
    """Scale the last axis to unit length."""
    norm = np.sqrt((a.data**2).sum(axis=-1, keepdims=True) + eps)
    out = Tensor(a.data / norm, (a,), "l2_normalize")

    def _backward():
        y = out.data
        g = out.grad
        a.accumulate((g - y * (g * y).sum(axis=-1, keepdims=True)) / norm)

    out._backward = _backward
    return out


# linear algebra


def matmul(a: Tensor, w: Tensor) -> Tensor:
    """``a @ w`` for ``a`` of shape ``[D]`` or ``[N, D]`` and ``w`` of shape ``[D, O]``."""
    a, w = as_tensor(a), as_tensor(w)
    if w.data.ndim != 2 or a.data.ndim not in (1, 2) or a.shape[-1] != w.shape[0]:
        raise ContractError(f"matmul: incompatible shapes {a.shape} and {w.shape}")
    out = Tensor(a.data @ w.data, (a, w), "matmul")

    def _backward():
        g = out.grad
        a.accumulate(g @ w.data.T)
        if a.data.ndim == 1:
            w.accumulate(np.outer(a.data, g))
        else:
            w.accumulate(a.data.T @ g)

    out._backward = _backward
    return out


def weighted_sum(weights: Tensor, values: Tensor) -> Tensor:
    """``sum_j weights[..., j] * values[..., j, :]``.

    Accepts ``weights [J]`` with ``values [J, D]`` or batched
    ``weights [T, J]`` with ``values [T, J, D]``.
    """
    if weights.data.ndim + 1 != values.data.ndim or weights.shape != values.shape[:-1]:
        raise ContractError(f"weighted_sum: incompatible shapes {weights.shape} and {values.shape}")
    out = Tensor(np.einsum("...j,...jd->...d", weights.data, values.data), (weights, values), "weighted_sum")

    def _backward():
        g = out.grad
        weights.accumulate(np.einsum("...jd,...d->...j", values.data, g))
        values.accumulate(np.einsum("...j,...d->...jd", weights.data, g))

    out._backward = _backward
    return out


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """Valid 1-D convolution: ``x [C, L]`` or ``[N, C, L]``, ``w [O, C, K]``, ``b [O]``."""
    batched = x.data.ndim == 3
    xd = x.data if batched else x.data[None]
    if w.data.ndim != 3 or xd.ndim != 3 or xd.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ContractError(f"conv1d: incompatible shapes {x.shape}, {w.shape} and {b.shape}")
    length, kernel = xd.shape[2], w.shape[2]
    if length < kernel:
        raise ContractError(f"conv1d: input length {length} shorter than kernel {kernel}")
    out_len = (length - kernel) // stride + 1
    idx = stride * np.arange(out_len)[:, None] + np.arange(kernel)[None, :]
    cols = xd[:, :, idx]  # [N, C, Lout, K]
    y = np.einsum("nclk,ock->nol", cols, w.data) + b.data[None, :, None]
    out = Tensor(y if batched else y[0], (x, w, b), "conv1d")

    def _backward():
        g = out.grad if batched else out.grad[None]
        w.accumulate(np.einsum("nol,nclk->ock", g, cols))
        b.accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = np.einsum("nol,ock->nclk", g, w.data)
            dx = np.zeros_like(xd)
            np.add.at(dx, (slice(None), slice(None), idx), dcols)
            x.accumulate(dx if batched else dx[0])

    out._backward = _backward
    return out


# structure


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ContractError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from e
    out = Tensor(data, tensors, "concat")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward():
        for t, g in zip(tensors, np.split(out.grad, bounds, axis=axis)):
            t.accumulate(g)

    out._backward = _backward
    return out


def stack(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ContractError(f"stack: incompatible shapes {[t.shape for t in tensors]}")
    out = Tensor(np.stack([t.data for t in tensors]), tensors, "stack")

    def _backward():
        for k, t in enumerate(tensors):
            t.accumulate(out.grad[k])

    out._backward = _backward
    return out


def getitem(a: Tensor, index) -> Tensor:
    """Slicing and integer-array indexing; repeated indices accumulate."""
    out = Tensor(a.data[index], (a,), "slice")

    def _backward():
        g = np.zeros_like(a.data)
        np.add.at(g, index, out.grad)
        a.accumulate(g)

    out._backward = _backward
    return out


def reshape(a: Tensor, shape: Union[int, Tuple[int, ...]]) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise ContractError(f"reshape: cannot view {a.shape} as {shape}") from e
    out = Tensor(data, (a,), "reshape")
    out._backward = lambda: a.accumulate(out.grad.reshape(a.shape))
    return out


def parameter(data, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)
