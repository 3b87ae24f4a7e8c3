from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from ..errors import ContractError, DimensionError
from ..utils.json import JsonField, JsonObject, JsonTemplate

__all__ = ('Split', 'DataConfig', 'IdentityDataset')


class Split(str, enum.Enum):
    TRAIN = 'train'
    QUERY = 'query'
    GALLERY = 'gallery'


def _at_least_two(value) -> int:
    if isinstance(value, bool) or int(value) != value or value < 2:
        raise ValueError(f'expected an integer >= 2, got {value!r}')
    return int(value)


def _fraction(value) -> float:
    if isinstance(value, bool) or not 0.0 <= float(value) <= 1.0:
        raise ValueError(f'expected a number in [0, 1], got {value!r}')
    return float(value)


def _non_negative(value) -> float:
    if isinstance(value, bool) or float(value) < 0:
        raise ValueError(f'expected a non-negative number, got {value!r}')
    return float(value)


def _seed(value) -> int:
    if isinstance(value, bool) or int(value) != value or value < 0:
        raise ValueError(f'expected a non-negative integer, got {value!r}')
    return int(value)


DataTemplate: JsonTemplate[DataConfig] = JsonTemplate(
    num_ids=JsonField('num_ids', _at_least_two, default=32),
    imgs_per_id=JsonField('imgs_per_id', _at_least_two, default=20),
    noise_sigma=JsonField('noise_sigma', _non_negative, default=0.1),
    brightness_scale=JsonField('brightness_scale', _non_negative,
                               default=1.0),
    query_fraction=JsonField('query_fraction', _fraction, default=0.2),
    seed=JsonField('seed', _seed, default=0),
)


class DataConfig(JsonObject, template=DataTemplate):
    """How the synthetic identity dataset is generated.

    Attributes
        num_ids, imgs_per_id: int
            Identity count and images per identity.

        noise_sigma: float
            Standard deviation of the per-pixel Gaussian noise.

        brightness_scale: float
            The per-image brightness shift is drawn from
            N(0, (brightness_scale * noise_sigma) ** 2).

        query_fraction: float
            Share of each identity's images held out as queries.

        seed: int
            The generation seed.
    """
    num_ids: int
    imgs_per_id: int
    noise_sigma: float
    brightness_scale: float
    query_fraction: float
    seed: int


@dataclass
class IdentityDataset:
    """Labeled images, each assigned to one split.

    Attributes
        images: numpy.ndarray
            (n, channels, height, width) float64.

        labels: numpy.ndarray
            n identity ids.

        splits: list[Split]
            The split of every image.

        seed: int
            The seed the dataset was generated with.
    """
    images: np.ndarray
    labels: np.ndarray
    splits: List[Split]
    seed: int
    config: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.splits = [Split(s) for s in self.splits]
        if (self.images.ndim != 4 or len(self.images) != len(self.labels)
                or len(self.splits) != len(self.labels)):
            raise DimensionError('images, labels and splits must agree',
                                 self.images.shape, self.labels.shape,
                                 (len(self.splits),))
        missing = set(self.identities(Split.QUERY)) - set(
            self.identities(Split.GALLERY))
        if missing:
            raise ContractError(
                f'query identities {sorted(missing)} have no gallery image')

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def mask(self, split: Split) -> np.ndarray:
        split = Split(split)
        return np.array([s is split for s in self.splits], dtype=bool)

    def subset(self, split: Split) -> Tuple[np.ndarray, np.ndarray]:
        """(images, labels) of one split, in dataset order."""
        mask = self.mask(split)
        return self.images[mask], self.labels[mask]

    def identities(self, split: Split) -> List[int]:
        return sorted(set(self.labels[self.mask(split)].tolist()))

    def indices_by_label(self, split: Split) -> Dict[int, List[int]]:
        """Dataset indices of each identity's images in `split`."""
        groups: Dict[int, List[int]] = {}
        for index in np.flatnonzero(self.mask(split)):
            groups.setdefault(int(self.labels[index]), []).append(int(index))
        return groups
