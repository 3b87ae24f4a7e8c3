from __future__ import annotations

import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ContractError
from ..utils.rng import derive_rng
from .dataset import DataConfig, IdentityDataset, Split

__all__ = ('generate_synthetic', 'generate_from_config', 'make_prototypes',
           'split_counts')

logger = logging.getLogger(__name__)

BANDS = 8
TEXTURE_AMPLITUDE = 0.15


def make_prototypes(num_ids: int, shape: Tuple[int, int, int],
                    seed: int) -> np.ndarray:
    """One prototype image per identity: horizontal bands of random
    intensity (the identity lives in the row structure) plus a faint
    per-identity texture."""
    channels, height, width = shape
    rng = derive_rng(seed, 0)
    rows = np.minimum(np.arange(height) * BANDS // height, BANDS - 1)

    prototypes = np.empty((num_ids,) + tuple(shape))
    for identity in range(num_ids):
        bands = rng.uniform(0.0, 1.0, size=(channels, BANDS))
        texture = rng.uniform(-TEXTURE_AMPLITUDE, TEXTURE_AMPLITUDE,
                              size=(channels, height, width))
        prototypes[identity] = bands[:, rows, None] + texture
    return prototypes


def split_counts(imgs_per_id: int, query_fraction: float
                 ) -> Tuple[int, int, int]:
    """(query, gallery, train) images per identity.

    From three images up, one image always stays in train.
    """
    query = max(1, int(round(imgs_per_id * query_fraction)))
    query = min(query, imgs_per_id - (2 if imgs_per_id >= 3 else 1))
    rest = imgs_per_id - query
    gallery = math.ceil(rest / 2)
    return query, gallery, rest - gallery


def generate_synthetic(num_ids: int, imgs_per_id: int, noise_sigma: float,
                       seed: int, *,
                       shape: Tuple[int, int, int] = (1, 64, 32),
                       query_fraction: float = 0.2,
                       brightness_scale: float = 1.0,
                       config: Optional[DataConfig] = None
                       ) -> IdentityDataset:
    """Generates a labeled dataset of `num_ids` identities.

    Every sample is its identity's prototype plus N(0, noise_sigma ** 2)
    pixel noise and one global brightness shift drawn from
    N(0, (brightness_scale * noise_sigma) ** 2); with ``noise_sigma=0``
    samples equal their prototype. Per identity the first images are
    queries, then gallery, then train (see :func:`split_counts`).

    Raises
        :exc:`ContractError`
            Raised when fewer than two identities or two images per
            identity are requested.
    """
    if num_ids < 2 or imgs_per_id < 2:
        raise ContractError('need at least 2 identities and 2 images per '
                            f'identity, got {num_ids} x {imgs_per_id}')
    if noise_sigma < 0:
        raise ContractError(f'noise_sigma must be >= 0, got {noise_sigma}')

    shape = tuple(int(s) for s in shape)
    prototypes = make_prototypes(num_ids, shape, seed)
    query, gallery, _ = split_counts(imgs_per_id, query_fraction)

    images = np.empty((num_ids * imgs_per_id,) + shape)
    labels = np.empty(num_ids * imgs_per_id, dtype=np.int64)
    splits: List[Split] = []

    for identity in range(num_ids):
        rng = derive_rng(seed, 1, identity)
        for index in range(imgs_per_id):
            noise = rng.normal(0.0, 1.0, size=shape) * noise_sigma
            shift = rng.normal(0.0, 1.0) * noise_sigma * brightness_scale
            position = identity * imgs_per_id + index
            images[position] = prototypes[identity] + noise + shift
            labels[position] = identity
            if index < query:
                splits.append(Split.QUERY)
            elif index < query + gallery:
                splits.append(Split.GALLERY)
            else:
                splits.append(Split.TRAIN)

    if config is None:
        config = DataConfig(num_ids=num_ids, imgs_per_id=imgs_per_id,
                            noise_sigma=noise_sigma,
                            brightness_scale=brightness_scale,
                            query_fraction=query_fraction, seed=seed)

    logger.debug('Generated %d images of %d identities (seed %d)',
                 len(labels), num_ids, seed)
    return IdentityDataset(images, labels, splits, seed, config)


def generate_from_config(config: DataConfig,
                         shape: Tuple[int, int, int]) -> IdentityDataset:
    return generate_synthetic(
        config.num_ids, config.imgs_per_id, config.noise_sigma, config.seed,
        shape=shape, query_fraction=config.query_fraction,
        brightness_scale=config.brightness_scale, config=config)
