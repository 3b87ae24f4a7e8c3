"""Batch metric losses: the adaptive nearest-neighbor (ANN) loss and its
triplet and contrastive baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..diffcore import ops
from ..diffcore.tensor import Tensor
from ..errors import ContractError, DimensionError, SamplingError
from .classification import class_entropy, softmax
from .config import AnnConfig, Rounding
from .distance import pairwise_sqdist

__all__ = ('BatchEmbeddings', 'AnnStats', 'adaptive_k', 'ann_loss',
           'ann_loss_with_stats', 'batch_hard_triplet', 'contrastive_loss',
           'hardest_positives', 'hardest_negatives')


@dataclass
class BatchEmbeddings:
    """A batch as the losses see it.

    Attributes
        embeddings: Tensor
            (B, embed_dim).

        logits: Tensor
            (B, N).

        labels: numpy.ndarray
            B integer class ids in [0, N).
    """
    embeddings: Tensor
    logits: Tensor
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        batch = self.embeddings.shape[0]
        if (self.embeddings.ndim != 2 or self.logits.ndim != 2
                or self.logits.shape[0] != batch
                or self.labels.shape != (batch,)):
            raise DimensionError('embeddings, logits and labels must agree '
                                 'on the batch size', self.embeddings.shape,
                                 self.logits.shape, self.labels.shape)

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass
class AnnStats:
    """Per-anchor bookkeeping of one ANN loss evaluation.

    Attributes
        entropies: numpy.ndarray
            H_a of every anchor.

        raw_k: numpy.ndarray
            K_a before clamping to the available positives/negatives.

        used_k: numpy.ndarray
            K_a actually used.
    """
    entropies: np.ndarray
    raw_k: np.ndarray
    used_k: np.ndarray

    @property
    def clamp_events(self) -> int:
        return int(np.sum(self.used_k < self.raw_k))


def adaptive_k(entropy: float, cfg: AnnConfig) -> int:
    """K_a = max(round(H_a), K0), rounding per ``cfg.rounding``.

    Raises
        :exc:`ContractError`
            Raised when `entropy` is negative.
    """
    if entropy < 0:
        raise ContractError(f'entropy must be non-negative, got {entropy}')
    if cfg.rounding is Rounding.CEIL:
        rounded = math.ceil(entropy)
    else:
        rounded = math.floor(entropy)
    return max(int(rounded), cfg.k0)


def hardest_positives(distances: np.ndarray, labels: np.ndarray,
                      anchor: int, k: int) -> List[int]:
    """The `k` farthest same-label samples of `anchor`, ties going to the
    lower index."""
    candidates = [j for j in range(len(labels))
                  if j != anchor and labels[j] == labels[anchor]]
    candidates.sort(key=lambda j: (-distances[anchor, j], j))
    return candidates[:k]


def hardest_negatives(distances: np.ndarray, labels: np.ndarray,
                      anchor: int, k: int) -> List[int]:
    """The `k` closest different-label samples of `anchor`, ties going to
    the lower index."""
    candidates = [j for j in range(len(labels))
                  if labels[j] != labels[anchor]]
    candidates.sort(key=lambda j: (distances[anchor, j], j))
    return candidates[:k]


def _available(labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    same = labels[:, None] == labels[None, :]
    positives = same.sum(axis=1) - 1
    negatives = (~same).sum(axis=1)
    for anchor in range(len(labels)):
        if positives[anchor] < 1:
            raise SamplingError(f'anchor {anchor} has no positive in the '
                                'batch', anchor)
        if negatives[anchor] < 1:
            raise SamplingError(f'anchor {anchor} has no negative in the '
                                'batch', anchor)
    return positives, negatives


def _mined_hinge(distances: Tensor, labels: np.ndarray, ks: Sequence[int],
                 margin: float) -> Tensor:
    """sum over anchors of max(0, m + D_ap - D_an), where D_ap and D_an
    average the ``ks[a]`` hardest positive and negative distances.

    The selections are constant masks, gradients flow only through the
    selected distances.
    """
    values = distances.data
    batch = len(labels)
    positive_weights = np.zeros((batch, batch))
    negative_weights = np.zeros((batch, batch))
    for anchor, k in enumerate(ks):
        positive_weights[anchor, hardest_positives(values, labels,
                                                   anchor, k)] = 1.0 / k
        negative_weights[anchor, hardest_negatives(values, labels,
                                                   anchor, k)] = 1.0 / k

    d_ap = ops.reduce('sum', ops.hadamard(distances,
                                          Tensor(positive_weights)), 1)
    d_an = ops.reduce('sum', ops.hadamard(distances,
                                          Tensor(negative_weights)), 1)
    gap = ops.sub(ops.add(Tensor.full((batch,), margin), d_ap), d_an)
    return ops.reduce('sum', ops.relu(gap))


def ann_loss_with_stats(batch: BatchEmbeddings,
                        cfg: AnnConfig) -> Tuple[Tensor, AnnStats]:
    """The ANN loss plus the per-anchor entropies and neighborhood sizes.

    Each anchor's K_a comes from the entropy of its softmax distribution
    (or ``cfg.fixed_k``) and is clamped to the number of positives and
    negatives the batch has for it. The logits only steer the integer
    selection, no gradient reaches them through this loss.

    Raises
        :exc:`SamplingError`
            Raised when an anchor has no positive or no negative.
    """
    labels = batch.labels
    positives, negatives = _available(labels)

    probabilities = softmax(batch.logits.data)
    entropies = np.array([class_entropy(p) for p in probabilities])
    if cfg.fixed_k is not None:
        raw_k = np.full(len(labels), cfg.fixed_k, dtype=np.int64)
    else:
        raw_k = np.array([adaptive_k(h, cfg) for h in entropies],
                         dtype=np.int64)
    used_k = np.minimum(raw_k, np.minimum(positives, negatives))

    distances = pairwise_sqdist(batch.embeddings)
    loss = _mined_hinge(distances, labels, used_k, cfg.margin)
    return loss, AnnStats(entropies, raw_k, used_k)


def ann_loss(batch: BatchEmbeddings, cfg: AnnConfig) -> Tensor:
    return ann_loss_with_stats(batch, cfg)[0]


def batch_hard_triplet(batch: BatchEmbeddings, margin: float) -> Tensor:
    """Per anchor, the farthest positive against the closest negative,
    hinged at `margin` and summed."""
    labels = batch.labels
    _available(labels)
    distances = pairwise_sqdist(batch.embeddings)
    return _mined_hinge(distances, labels, [1] * len(labels), margin)


def contrastive_loss(batch: BatchEmbeddings, margin: float) -> Tensor:
    """Sum over unordered pairs: d for same-label pairs and
    max(0, margin - sqrt(d)) ** 2 for different-label pairs."""
    labels = batch.labels
    size = len(labels)
    if size < 2:
        raise ContractError('contrastive loss needs at least two samples')

    distances = pairwise_sqdist(batch.embeddings)
    upper = np.triu(np.ones((size, size), dtype=bool), k=1)
    same = labels[:, None] == labels[None, :]
    positive_mask = (upper & same).astype(np.float64)
    negative_mask = (upper & ~same).astype(np.float64)

    attract = ops.reduce('sum', ops.hadamard(distances,
                                             Tensor(positive_mask)))

    # pairs outside the mask are shifted off zero so sqrt stays finite
    shifted = ops.add(distances, Tensor(1.0 - negative_mask))
    gap = ops.relu(ops.sub(Tensor.full((size, size), margin),
                           ops.sqrt(shifted)))
    repel = ops.reduce('sum', ops.hadamard(ops.square(gap),
                                           Tensor(negative_mask)))
    return ops.add(attract, repel)
