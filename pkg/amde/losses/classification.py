from __future__ import annotations

from typing import Sequence

import numpy as np

from ..diffcore import ops
from ..diffcore.tensor import Tensor
from ..errors import ContractError, DimensionError

__all__ = ('softmax_xent', 'softmax', 'class_entropy')


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of raw logits, no gradient."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def class_entropy(p: Sequence[float]) -> float:
    """Natural-log entropy of a probability vector, 0 log 0 counts as 0.

    Raises
        :exc:`ContractError`
            Raised when `p` has negative entries or doesn't sum to 1
            within 1e-6.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ContractError(f'expected a probability vector, got {p.shape}')
    if np.any(p < 0) or abs(float(np.sum(p)) - 1.0) > 1e-6:
        raise ContractError('probabilities must be non-negative and sum to 1')
    nonzero = p[p > 0]
    return float(-np.sum(nonzero * np.log(nonzero)))


def softmax_xent(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label].

    Raises
        :exc:`ContractError`
            Raised when a label is outside [0, N).
    """
    if logits.ndim == 1:
        logits = ops.reshape(logits, (1, logits.shape[0]))
    if logits.ndim != 2:
        raise DimensionError('logits must be (B, N)', logits.shape)

    labels = np.asarray(labels)
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise DimensionError('one label per logit row', labels.shape,
                             logits.shape)
    if np.any(labels < 0) or np.any(labels >= classes):
        raise ContractError(f'labels must lie in [0, {classes})')

    onehot = np.zeros((batch, classes))
    onehot[np.arange(batch), labels] = 1.0
    picked = ops.reduce('sum', ops.hadamard(ops.log_softmax(logits),
                                            Tensor(onehot)))
    return ops.scale(picked, -1.0 / batch)
