from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SamplingError
from ..utils.json import JsonField, JsonObject, JsonTemplate
from .dataset import IdentityDataset, Split

__all__ = ('PKSpec', 'PKBatch', 'pk_sample')


def _at_least_two(value) -> int:
    if isinstance(value, bool) or int(value) != value or value < 2:
        raise ValueError(f'expected an integer >= 2, got {value!r}')
    return int(value)


PKTemplate: JsonTemplate[PKSpec] = JsonTemplate(
    p=JsonField('P', _at_least_two, default=8),
    k=JsonField('K', _at_least_two, default=4),
)


class PKSpec(JsonObject, template=PKTemplate):
    """P identities with K images each, so every anchor of a batch has a
    positive and a negative."""
    p: int
    k: int

    @property
    def batch_size(self) -> int:
        return self.p * self.k


@dataclass
class PKBatch:
    images: np.ndarray
    labels: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def pk_sample(dataset: IdentityDataset, spec: PKSpec,
              rng: np.random.Generator, split: Split = Split.TRAIN
              ) -> PKBatch:
    """Draws P distinct identities of `split`, then K images of each
    (with replacement when an identity has fewer than K), and shuffles.

    Raises
        :exc:`SamplingError`
            Raised when `split` has fewer than P identities.
    """
    groups = dataset.indices_by_label(split)
    identities = sorted(groups)
    if len(identities) < spec.p:
        raise SamplingError(
            f'{split.value} split has {len(identities)} identities, '
            f'a P={spec.p} batch needs more')

    chosen = rng.choice(identities, size=spec.p, replace=False)
    picks = []
    for identity in chosen:
        pool = groups[int(identity)]
        replace = len(pool) < spec.k
        picks.extend(rng.choice(pool, size=spec.k, replace=replace).tolist())

    indices = np.asarray(picks, dtype=np.int64)
    indices = indices[rng.permutation(len(indices))]
    return PKBatch(dataset.images[indices], dataset.labels[indices], indices)
