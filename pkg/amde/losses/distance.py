from __future__ import annotations

import numpy as np

from ..diffcore import ops
from ..diffcore.tensor import Tensor
from ..errors import DimensionError

__all__ = ('DistanceMatrix', 'pairwise_sqdist', 'sqdist_to')

# (B, B) squared Euclidean distances: symmetric, zero diagonal, >= 0
DistanceMatrix = Tensor


def pairwise_sqdist(embeddings: Tensor) -> DistanceMatrix:
    """d[a][b] = sum_j (e_a[j] - e_b[j]) ** 2 for a (B, d) batch,
    differentiable."""
    if embeddings.ndim != 2 or embeddings.shape[0] < 1:
        raise DimensionError('embeddings must be a non-empty (B, d) matrix',
                             embeddings.shape)
    return ops.pairwise_sqdist(embeddings)


def sqdist_to(query: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """Squared distances from one (d,) query to every row of a (G, d)
    gallery, computed on the difference so translations cancel exactly."""
    if gallery.ndim != 2 or query.shape != gallery.shape[1:]:
        raise DimensionError('query and gallery dimensions differ',
                             query.shape, gallery.shape)
    diff = gallery - query[None, :]
    return np.einsum('gj,gj->g', diff, diff)
