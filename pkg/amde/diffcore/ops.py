"""Differentiable operations.

Every operation is a :class:`~amde.diffcore.tensor.Function` with a
hand-derived backward rule; composite computations (layers, losses) are
built from these and differentiated by the tape.
"""
from __future__ import annotations

from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import AxisError, ContractError, DimensionError
from .tensor import DTYPE, Function, Tensor

__all__ = ('matmul', 'elementwise', 'reduce', 'add', 'sub', 'hadamard',
           'div', 'scale', 'neg', 'sigmoid', 'tanh', 'relu', 'exp', 'log',
           'sqrt', 'square', 'reshape', 'transpose', 'concat', 'getitem',
           'broadcast_to', 'conv2d', 'log_softmax', 'pairwise_sqdist',
           'normalize_axes')

Axes = Union[None, int, Sequence[int]]


def _same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f'{name} operands differ in shape',
                             a.shape, b.shape)


def normalize_axes(axes: Axes, ndim: int) -> Tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, (int, np.integer)):
        axes = (int(axes),)
    normalized = []
    for axis in axes:
        if not isinstance(axis, (int, np.integer)) or not -ndim <= axis < ndim:
            raise AxisError(axis, ndim)
        normalized.append(int(axis) % ndim)
    if len(set(normalized)) != len(normalized):
        raise AxisError(tuple(axes), ndim)
    return tuple(sorted(normalized))


class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim not in (1, 2) or b.ndim not in (1, 2):
            raise DimensionError('matmul takes vectors or matrices',
                                 a.shape, b.shape)
        if a.shape[-1] != b.shape[0]:
            raise DimensionError('matmul inner dimensions differ',
                                 a.shape, b.shape)
        self.a = a.reshape(1, -1) if a.ndim == 1 else a
        self.b = b.reshape(-1, 1) if b.ndim == 1 else b
        return a @ b

    def backward(self, grad):
        g = grad.reshape(self.a.shape[0], self.b.shape[1])
        return g @ self.b.T, self.a.T @ g


class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        return grad, -grad


class Hadamard(Function):
    def forward(self, a, b):
        self.a = a
        self.b = b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Div(Function):
    def forward(self, a, b):
        self.a = a
        self.b = b
        return a / b

    def backward(self, grad):
        return grad / self.b, -grad * self.a / (self.b * self.b)


class Scale(Function):
    def forward(self, x, factor: float):
        self.factor = factor
        return x * factor

    def backward(self, grad):
        return (grad * self.factor,)


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class Sigmoid(Function):
    def forward(self, x):
        # split by sign so exp never overflows
        z = np.exp(-np.abs(x))
        self.y = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
        return self.y

    def backward(self, grad):
        return (grad * self.y * (1.0 - self.y),)


class Tanh(Function):
    def forward(self, x):
        self.y = np.tanh(x)
        return self.y

    def backward(self, grad):
        return (grad * (1.0 - self.y * self.y),)


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad):
        return (grad * self.mask,)


class Exp(Function):
    def forward(self, x):
        self.y = np.exp(x)
        return self.y

    def backward(self, grad):
        return (grad * self.y,)


class Log(Function):
    def forward(self, x):
        if np.any(x <= 0):
            raise ContractError('log needs strictly positive input')
        self.x = x
        return np.log(x)

    def backward(self, grad):
        return (grad / self.x,)


class Sqrt(Function):
    def forward(self, x):
        if np.any(x < 0):
            raise ContractError('sqrt needs non-negative input')
        self.y = np.sqrt(x)
        return self.y

    def backward(self, grad):
        # finite (if huge) at zero
        return (grad * 0.5 / np.maximum(self.y, 1e-150),)


class Square(Function):
    def forward(self, x):
        self.x = x
        return x * x

    def backward(self, grad):
        return (2.0 * grad * self.x,)


class Sum(Function):
    def forward(self, x, axes: Tuple[int, ...], keepdims: bool):
        self.shape = x.shape
        self.axes = axes
        self.keepdims = keepdims
        return np.sum(x, axis=axes, keepdims=keepdims)

    def _expand(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return np.broadcast_to(grad, self.shape)

    def backward(self, grad):
        return (np.array(self._expand(grad)),)


class Mean(Sum):
    def forward(self, x, axes: Tuple[int, ...], keepdims: bool):
        self.count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
        return super().forward(x, axes, keepdims) / self.count

    def backward(self, grad):
        return (np.array(self._expand(grad)) / self.count,)


class Reshape(Function):
    def forward(self, x, shape: Tuple[int, ...]):
        self.shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError as e:
            raise DimensionError('cannot reshape', x.shape,
                                 tuple(shape)) from e

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x, axes: Optional[Tuple[int, ...]]):
        if axes is None:
            axes = tuple(reversed(range(x.ndim)))
        elif sorted(axes) != list(range(x.ndim)):
            raise AxisError(axes, x.ndim)
        self.inverse = tuple(np.argsort(axes))
        return np.transpose(x, axes).copy(order='C')

    def backward(self, grad):
        return (np.transpose(grad, self.inverse),)


class Concat(Function):
    def forward(self, *arrays, axis: int):
        first = arrays[0]
        if not -first.ndim <= axis < first.ndim:
            raise AxisError(axis, first.ndim)
        axis %= first.ndim
        for array in arrays[1:]:
            if (array.ndim != first.ndim
                    or array.shape[:axis] != first.shape[:axis]
                    or array.shape[axis + 1:] != first.shape[axis + 1:]):
                raise DimensionError('concat operands differ outside the '
                                     'concatenation axis',
                                     first.shape, array.shape)
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))


class GetItem(Function):
    def forward(self, x, key: Any):
        self.shape = x.shape
        self.key = key
        try:
            return np.array(x[key])
        except IndexError as e:
            raise DimensionError(f'invalid index {key!r}', x.shape) from e

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=DTYPE)
        np.add.at(out, self.key, grad)
        return (out,)


class BroadcastTo(Function):
    def forward(self, x, shape: Tuple[int, ...]):
        try:
            out = np.broadcast_to(x, shape)
        except ValueError as e:
            raise DimensionError('cannot broadcast', x.shape,
                                 tuple(shape)) from e
        self.shape = x.shape
        return np.array(out)

    def backward(self, grad):
        lead = grad.ndim - len(self.shape)
        summed = grad.sum(axis=tuple(range(lead))) if lead else grad
        axes = tuple(i for i, n in enumerate(self.shape)
                     if n == 1 and summed.shape[i] != 1)
        if axes:
            summed = summed.sum(axis=axes, keepdims=True)
        return (summed.reshape(self.shape),)


class Conv2d(Function):
    """Stride-1 cross-correlation with zero padding over (B, C, H, W)."""

    def forward(self, x, weight, bias, padding: Tuple[int, int]):
        if x.ndim != 4 or weight.ndim != 4:
            raise DimensionError('conv2d takes (B, C, H, W) input and '
                                 '(O, C, kh, kw) weights',
                                 x.shape, weight.shape)
        if x.shape[1] != weight.shape[1]:
            raise DimensionError('conv2d channel mismatch',
                                 x.shape, weight.shape)
        if bias.shape != (weight.shape[0],):
            raise DimensionError('conv2d bias must match output channels',
                                 bias.shape, weight.shape)
        ph, pw = padding
        kh, kw = weight.shape[2:]
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        out_h = xp.shape[2] - kh + 1
        out_w = xp.shape[3] - kw + 1
        if out_h < 1 or out_w < 1:
            raise DimensionError('conv2d kernel larger than padded input',
                                 x.shape, weight.shape)
        windows = np.lib.stride_tricks.sliding_window_view(
            xp, (kh, kw), axis=(2, 3))
        self.windows = windows
        self.weight = weight
        self.padding = padding
        self.x_shape = x.shape
        out = np.einsum('bchwij,ocij->bohw', windows, weight, optimize=True)
        return out + bias.reshape(1, -1, 1, 1)

    def backward(self, grad):
        weight = self.weight
        kh, kw = weight.shape[2:]
        ph, pw = self.padding
        _, _, out_h, out_w = grad.shape

        dweight = np.einsum('bohw,bchwij->ocij', grad, self.windows,
                            optimize=True)
        dbias = grad.sum(axis=(0, 2, 3))

        b, c, h, w = self.x_shape
        dxp = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=DTYPE)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + out_h, j:j + out_w] += np.einsum(
                    'bohw,oc->bchw', grad, weight[:, :, i, j], optimize=True)
        dx = dxp[:, :, ph:ph + h, pw:pw + w]
        return np.ascontiguousarray(dx), dweight, dbias


class LogSoftmax(Function):
    def forward(self, x, axis: int):
        shifted = x - np.max(x, axis=axis, keepdims=True)
        self.axis = axis
        out = shifted - np.log(np.sum(np.exp(shifted), axis=axis,
                                      keepdims=True))
        self.softmax = np.exp(out)
        return out

    def backward(self, grad):
        total = np.sum(grad, axis=self.axis, keepdims=True)
        return (grad - self.softmax * total,)


class PairwiseSqDist(Function):
    """d[a, b] = sum_j (x[a, j] - x[b, j]) ** 2, exactly symmetric with an
    exactly zero diagonal."""

    def forward(self, x):
        if x.ndim != 2:
            raise DimensionError('pairwise_sqdist takes a (B, d) matrix',
                                 x.shape)
        self.diff = x[:, None, :] - x[None, :, :]
        return np.einsum('abj,abj->ab', self.diff, self.diff)

    def backward(self, grad):
        sym = grad + grad.T
        return (2.0 * np.einsum('ab,abj->aj', sym, self.diff),)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a (m×k) and b (k×n), either may be a vector.

    Raises
        :exc:`DimensionError`
            Raised when the inner dimensions differ, naming both shapes.
    """
    return MatMul.apply(a, b)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('add', a, b)
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('sub', a, b)
    return Sub.apply(a, b)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('hadamard', a, b)
    return Hadamard.apply(a, b)


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape('div', a, b)
    return Div.apply(a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=float(factor))


def neg(x: Tensor) -> Tensor:
    return Neg.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def tanh(x: Tensor) -> Tensor:
    return Tanh.apply(x)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def exp(x: Tensor) -> Tensor:
    return Exp.apply(x)


def log(x: Tensor) -> Tensor:
    return Log.apply(x)


def sqrt(x: Tensor) -> Tensor:
    return Sqrt.apply(x)


def square(x: Tensor) -> Tensor:
    return Square.apply(x)


_ELEMENTWISE = {
    'sigmoid': (sigmoid, 1),
    'tanh': (tanh, 1),
    'relu': (relu, 1),
    'add': (add, 2),
    'hadamard': (hadamard, 2),
    'scale': (scale, 2),
}


def elementwise(op: str, *args: Any) -> Tensor:
    """Applies one of ``sigmoid``, ``tanh``, ``relu``, ``add``,
    ``hadamard`` or ``scale`` (``scale`` takes a tensor and a float)."""
    try:
        function, arity = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f'unknown elementwise op {op!r}') from None
    if len(args) != arity:
        raise ContractError(f'{op} takes {arity} arguments, got {len(args)}')
    return function(*args)


def reduce(op: str, x: Tensor, axes: Axes = None, *,
           keepdims: bool = False) -> Tensor:
    """Sums or averages `x` over `axes` (all axes when None).

    Raises
        :exc:`AxisError`
            Raised when an axis is out of range or repeated.
    """
    normalized = normalize_axes(axes, x.ndim)
    if op == 'sum':
        return Sum.apply(x, axes=normalized, keepdims=keepdims)
    if op == 'mean':
        return Mean.apply(x, axes=normalized, keepdims=keepdims)
    raise ContractError(f'unknown reduction {op!r}')


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = shape[0]
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    return Transpose.apply(x, axes=None if axes is None else tuple(axes))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError('concat needs at least one tensor')
    return Concat.apply(*tensors, axis=axis)


def getitem(x: Tensor, key: Any) -> Tensor:
    return GetItem.apply(x, key=key)


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    return BroadcastTo.apply(x, shape=tuple(shape))


def conv2d(x: Tensor, weight: Tensor, bias: Tensor,
           padding: Union[int, Tuple[int, int]] = 0) -> Tensor:
    if isinstance(padding, int):
        padding = (padding, padding)
    return Conv2d.apply(x, weight, bias, padding=tuple(padding))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise AxisError(axis, x.ndim)
    return LogSoftmax.apply(x, axis=axis % x.ndim)


def pairwise_sqdist(x: Tensor) -> Tensor:
    return PairwiseSqDist.apply(x)
