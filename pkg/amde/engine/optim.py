from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from ..diffcore.tensor import Tensor
from ..errors import ContractError

__all__ = ('Optimizer', 'Adam', 'SGDMomentum')


class Optimizer:
    """Base class for in-place parameter updates.

    Arguments
        parameters: Sequence[Tensor]
            The tensors to update, each must require gradients.

        learning_rate: float
            The constant step size.
    """

    def __init__(self, parameters: Sequence[Tensor],
                 learning_rate: float) -> None:
        if learning_rate <= 0:
            raise ContractError(
                f'learning rate must be positive, got {learning_rate}')
        self.parameters: List[Tensor] = list(parameters)
        for tensor in self.parameters:
            if not tensor.requires_grad:
                raise ContractError(
                    f'parameter {tensor.name!r} does not require gradients')
        self.learning_rate = learning_rate
        self.steps = 0

    def zero_grad(self) -> None:
        for tensor in self.parameters:
            tensor.zero_grad()

    def step(self) -> None:
        """Applies one update from the accumulated gradients, parameters
        without a gradient are left alone."""
        self.steps += 1
        for index, tensor in enumerate(self.parameters):
            if tensor.grad is not None:
                self.update(index, tensor)

    def update(self, index: int, tensor: Tensor) -> None:
        raise NotImplementedError


class SGDMomentum(Optimizer):
    """v = momentum * v + g; p -= lr * v"""

    def __init__(self, parameters: Sequence[Tensor], learning_rate: float,
                 momentum: float = 0.9) -> None:
        super().__init__(parameters, learning_rate)
        self.momentum = momentum
        self.velocity = [np.zeros_like(t.data) for t in self.parameters]

    def update(self, index: int, tensor: Tensor) -> None:
        velocity = self.velocity[index]
        velocity *= self.momentum
        velocity += tensor.grad
        tensor.data -= self.learning_rate * velocity


class Adam(Optimizer):
    """Adam with bias-corrected first and second moments."""

    def __init__(self, parameters: Sequence[Tensor], learning_rate: float,
                 betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8) -> None:
        super().__init__(parameters, learning_rate)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.first = [np.zeros_like(t.data) for t in self.parameters]
        self.second = [np.zeros_like(t.data) for t in self.parameters]

    def update(self, index: int, tensor: Tensor) -> None:
        grad = tensor.grad
        first = self.first[index]
        second = self.second[index]
        first *= self.beta1
        first += (1.0 - self.beta1) * grad
        second *= self.beta2
        second += (1.0 - self.beta2) * grad * grad

        first_hat = first / (1.0 - self.beta1 ** self.steps)
        second_hat = second / (1.0 - self.beta2 ** self.steps)
        tensor.data -= (self.learning_rate * first_hat
                        / (np.sqrt(second_hat) + self.eps))
