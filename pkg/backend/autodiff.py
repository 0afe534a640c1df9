"""
Minimal reverse-mode automatic differentiation over numpy arrays.

A Tape records every operation whose inputs require gradients while it is
the active tape (`with Tape() as tape:`). `tape.backward(loss)` walks the
record in reverse order exactly once. Outside a tape, operations only
compute values.

Tapes are thread-local: one tape and its tensors belong to one worker.
"""
import threading
from typing import Callable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


_local = threading.local()


def _tape_stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """n-dimensional value participating in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        self.data = np.array(data, dtype=dtype, copy=True)
        if self.data.dtype.kind not in "fc":
            self.data = self.data.astype(np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


class Tape:
    """Ordered record of primitive operations for one backward pass."""

    def __init__(self):
        self.nodes: list = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def record(self, node: Tensor) -> None:
        if self._consumed:
            raise TapeError("cannot record on a tape whose backward pass already ran; call reset()")
        self.nodes.append(node)

    def reset(self) -> None:
        for node in self.nodes:
            node.grad = None
            node._backward = None
            node._parents = ()
        self.nodes = []
        self._consumed = False

    def backward(self, loss: Tensor, seed: Optional[np.ndarray] = None) -> None:
        """
        Accumulate d(loss)/d(leaf) into every leaf's .grad

        Raises:
            TapeError: when called a second time without reset()
        """
        if self._consumed:
            raise TapeError("backward already called on this tape; call reset() first")
        self._consumed = True
        if not loss.requires_grad:
            return
        loss.grad = np.ones_like(loss.data) if seed is None else np.asarray(seed, dtype=loss.dtype)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


def as_tensor(value, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants; plain numbers take the dtype of `like` so float32 graphs stay float32."""
    if isinstance(value, Tensor):
        return value
    if like is not None and np.ndim(value) == 0:
        return Tensor(value, dtype=like.dtype)
    return Tensor(value)


def _pair(a, b) -> tuple:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    if not tensor.requires_grad:
        return
    grad = np.asarray(grad)
    if grad.shape != tensor.shape:
        grad = _unbroadcast(grad, tensor.shape)
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=tensor.dtype)
    else:
        tensor.grad = tensor.grad + grad


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    tape = active_tape()
    if tape is not None and not tape._consumed and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        tape.record(out)
    return out


def custom_op(forward: Callable[..., np.ndarray], vjp: Callable[..., Sequence[Optional[np.ndarray]]],
              *inputs, dtype=None) -> Tensor:
    """
    Wrap a numpy function with a hand-written vector-Jacobian product

    Args:
        forward: f(*arrays) -> array
        vjp: vjp(grad, *arrays) -> one cotangent (or None) per input
        dtype: output dtype, defaults to the first input's dtype
    """
    tensors = [as_tensor(x) for x in inputs]
    arrays = [t.data for t in tensors]
    out_dtype = dtype or tensors[0].dtype
    value = np.asarray(forward(*arrays)).astype(out_dtype, copy=False)

    def backward(grad):
        for tensor, cot in zip(tensors, vjp(grad, *arrays)):
            if cot is not None:
                _accumulate(tensor, np.asarray(cot).astype(tensor.dtype, copy=False))

    return _result(value, tensors, backward)


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "add")

    def backward(grad):
        _accumulate(a, grad)
        _accumulate(b, grad)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "sub")

    def backward(grad):
        _accumulate(a, grad)
        _accumulate(b, -grad)

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "mul")

    def backward(grad):
        _accumulate(a, grad * b.data)
        _accumulate(b, grad * a.data)

    return _result(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "div")

    def backward(grad):
        _accumulate(a, grad / b.data)
        _accumulate(b, -grad * a.data / (b.data * b.data))

    return _result(a.data / b.data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda grad: _accumulate(a, -grad))


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(grad):
        _accumulate(a, grad @ np.swapaxes(b.data, -1, -2))
        _accumulate(b, np.swapaxes(a.data, -1, -2) @ grad)

    return _result(a.data @ b.data, (a, b), backward)


# structural

def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or t.shape[:axis] + t.shape[axis + 1:] != tensors[0].shape[:axis] + tensors[0].shape[axis + 1:]:
            raise ShapeError(f"concat: incompatible shapes {tensors[0].shape} and {t.shape} along axis {axis}")
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(grad):
        for t, piece in zip(tensors, np.split(grad, sizes, axis=axis)):
            _accumulate(t, piece)

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise ShapeError(f"stack: shapes {tensors[0].shape} and {t.shape} differ")

    def backward(grad):
        for index, t in enumerate(tensors):
            _accumulate(t, np.take(grad, index, axis=axis))

    return _result(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def backward(grad):
        full = np.zeros_like(a.data)
        np.add.at(full, index, grad)
        _accumulate(a, full)

    return _result(a.data[index], (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        value = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {tuple(shape)}") from None
    return _result(value, (a,), lambda grad: _accumulate(a, grad.reshape(a.shape)))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda grad: _accumulate(a, np.transpose(grad, inverse)))


# reductions

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        _accumulate(a, np.broadcast_to(grad, a.shape))

    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else int(np.prod([a.shape[x] for x in np.atleast_1d(axis)]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


# pointwise nonlinearities

def tanh(a) -> Tensor:
    a = as_tensor(a)
    value = np.tanh(a.data)
    return _result(value, (a,), lambda grad: _accumulate(a, grad * (1.0 - value * value)))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    value = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(value, (a,), lambda grad: _accumulate(a, grad * value * (1.0 - value)))


def leaky_relu(a, leak: float = 0.2) -> Tensor:
    a = as_tensor(a)
    slope = np.where(a.data > 0, 1.0, leak).astype(a.dtype)
    return _result(a.data * slope, (a,), lambda grad: _accumulate(a, grad * slope))


def relu(a) -> Tensor:
    """max(a, 0)"""
    a = as_tensor(a)
    mask = (a.data > 0).astype(a.dtype)
    return _result(a.data * mask, (a,), lambda grad: _accumulate(a, grad * mask))


def tabs(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _result(np.abs(a.data), (a,), lambda grad: _accumulate(a, grad * sign))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _result(a.data * a.data, (a,), lambda grad: _accumulate(a, 2.0 * grad * a.data))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    value = np.sqrt(a.data)
    return _result(value, (a,), lambda grad: _accumulate(a, 0.5 * grad / value))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda grad: _accumulate(a, grad / a.data))


def clip(a, low: float, high: float) -> Tensor:
    a = as_tensor(a)
    inside = ((a.data >= low) & (a.data <= high)).astype(a.dtype)
    return _result(np.clip(a.data, low, high), (a,), lambda grad: _accumulate(a, grad * inside))


# network primitives

def dropout(a, keep: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    """Inverted dropout: zero with probability 1-keep, scale survivors by 1/keep."""
    a = as_tensor(a)
    if not training or keep >= 1.0:
        return a
    mask = (rng.random(a.shape) < keep).astype(a.dtype) / keep
    return _result(a.data * mask, (a,), lambda grad: _accumulate(a, grad * mask))


def instance_norm_1d(x, gamma=None, beta=None, eps: float = 1e-6) -> Tensor:
    """
    Normalise (B, C, L) inputs over L for every (instance, channel), then
    apply the optional per-channel affine map.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"instance_norm_1d expects (B, C, L), got {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    normed = _result(
        xhat,
        (x,),
        lambda grad: _accumulate(
            x,
            inv_std * (grad - grad.mean(axis=-1, keepdims=True)
                       - xhat * (grad * xhat).mean(axis=-1, keepdims=True)),
        ),
    )
    if gamma is None:
        return normed
    out = normed * reshape(gamma, (1, -1, 1))
    if beta is not None:
        out = out + reshape(beta, (1, -1, 1))
    return out


def conv_output_length(length: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-length // stride)
    if padding == "valid":
        return (length - kernel) // stride + 1
    raise ValueError(f"unknown padding {padding!r}")


def conv1d(x, weight, bias=None, stride: int = 1, padding: str = "same") -> Tensor:
    """
    1-D convolution over (B, C_in, L) with (C_out, C_in, K) weights.

    "same" follows the TensorFlow rule: output length ceil(L / stride), with
    the extra padding element on the right.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} does not match weight {weight.shape}")
    batch, _, length = x.shape
    kernel = weight.shape[2]
    out_len = conv_output_length(length, kernel, stride, padding)
    if out_len < 1:
        raise ShapeError(f"conv1d: input {x.shape} too short for weight {weight.shape} with {padding!r} padding")
    if padding == "same":
        total = max((out_len - 1) * stride + kernel - length, 0)
        left, right = total // 2, total - total // 2
    else:
        left, right = 0, 0
    padded = np.pad(x.data, ((0, 0), (0, 0), (left, right)))
    starts = np.arange(out_len) * stride
    index = starts[:, None] + np.arange(kernel)[None, :]
    cols = padded[:, :, index]  # (B, C_in, out_len, K)

    value = np.einsum("bcok,dck->bdo", cols, weight.data)

    def backward(grad):
        _accumulate(weight, np.einsum("bdo,bcok->dck", grad, cols))
        d_cols = np.einsum("bdo,dck->bcok", grad, weight.data)
        d_padded = np.zeros_like(padded)
        for k in range(kernel):
            d_padded[:, :, starts + k] += d_cols[:, :, :, k]
        _accumulate(x, d_padded[:, :, left:left + length])

    out = _result(value, (x, weight), backward)
    if bias is not None:
        out = out + reshape(bias, (1, -1, 1))
    return out
