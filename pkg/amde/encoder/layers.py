from __future__ import annotations

from typing import Iterator, Tuple

import numpy as np

from ..diffcore import ops
from ..diffcore.tensor import Tensor

__all__ = ('Layer', 'Linear', 'Conv2d', 'uniform_init', 'avg_pool2')


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...],
                 fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    """Something that owns named parameter tensors.

    Subclasses list their own tensors in :attr:`Layer.__params__` and
    their child layers in :attr:`Layer.__children__`, both in a fixed
    order so parameter enumeration is deterministic.
    """
    __params__: Tuple[str, ...] = ()
    __children__: Tuple[str, ...] = ()

    def __init__(self, name: str) -> None:
        self.name = name

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for attr in self.__params__:
            tensor = getattr(self, attr)
            if tensor is not None:
                yield f'{self.name}.{attr}', tensor
        for attr in self.__children__:
            child = getattr(self, attr)
            if isinstance(child, Layer):
                yield from child.named_parameters()
            elif child is not None:
                for layer in child:
                    yield from layer.named_parameters()

    def _param(self, data: np.ndarray, attr: str) -> Tensor:
        return Tensor(data, requires_grad=True, name=f'{self.name}.{attr}')


class Linear(Layer):
    """y = x @ weight.T + bias, weight is (out_features, in_features)."""
    __params__ = ('weight', 'bias')

    def __init__(self, name: str, in_features: int, out_features: int,
                 rng: np.random.Generator, *, bias: bool = True) -> None:
        super().__init__(name)
        self.weight = self._param(
            uniform_init(rng, (out_features, in_features), in_features),
            'weight')
        self.bias = (self._param(np.zeros(out_features), 'bias')
                     if bias else None)

    def __call__(self, x: Tensor) -> Tensor:
        out = ops.matmul(x, ops.transpose(self.weight))
        if self.bias is not None:
            out = ops.add(out, ops.broadcast_to(self.bias, out.shape))
        return out


class Conv2d(Layer):
    __params__ = ('weight', 'bias')

    def __init__(self, name: str, in_channels: int, out_channels: int,
                 rng: np.random.Generator, *,
                 kernel: Tuple[int, int] = (3, 3),
                 padding: Tuple[int, int] = (1, 1)) -> None:
        super().__init__(name)
        kh, kw = kernel
        fan_in = in_channels * kh * kw
        self.weight = self._param(
            uniform_init(rng, (out_channels, in_channels, kh, kw), fan_in),
            'weight')
        self.bias = self._param(np.zeros(out_channels), 'bias')
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.padding)


def avg_pool2(x: Tensor) -> Tensor:
    """Halves the two trailing axes of a (B, C, H, W) tensor by averaging
    2x2 blocks."""
    b, c, h, w = x.shape
    blocks = ops.reshape(x, (b, c, h // 2, 2, w // 2, 2))
    return ops.reduce('mean', blocks, (3, 5))
