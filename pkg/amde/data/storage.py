"""Dataset directories: ``meta.json`` plus one ``<id>_<index>.bin`` file of
little-endian float64 pixels per image."""
from __future__ import annotations

import logging
import os
from typing import List, Union

import numpy as np

from ..errors import ContractError
from ..utils.json import JsonArray, JsonField, JsonObject, JsonTemplate
from .dataset import DataConfig, IdentityDataset, Split

__all__ = ('DatasetMeta', 'save_dataset', 'load_dataset')

logger = logging.getLogger(__name__)

META_FILE = 'meta.json'
FORMAT_VERSION = 1
PIXEL_DTYPE = np.dtype('<f8')

PathLike = Union[str, 'os.PathLike[str]']


def _version(value) -> int:
    if value != FORMAT_VERSION:
        raise ValueError(f'unsupported dataset format {value!r}')
    return int(value)


def _sample(value) -> List:
    label, index, split = value
    return [int(label), int(index), Split(split).value]


MetaTemplate = JsonTemplate(
    format=JsonField('format', _version, default=FORMAT_VERSION),
    count=JsonField('count', int),
    image_shape=JsonField('image_shape', lambda v: tuple(int(s) for s in v),
                          list),
    seed=JsonField('seed', int),
    config=JsonField('config', object=DataConfig, default=DataConfig),
    samples=JsonArray('samples', _sample),
)


class DatasetMeta(JsonObject, template=MetaTemplate):
    """The contents of ``meta.json``, ``samples`` holds one
    ``[label, index, split]`` entry per image in dataset order."""

    def __validate__(self) -> None:
        if len(self.samples) != self.count:
            raise ContractError(f'meta.json lists {len(self.samples)} '
                                f'samples but a count of {self.count}')


def _file_name(label: int, index: int) -> str:
    return f'{label}_{index}.bin'


def save_dataset(dataset: IdentityDataset, directory: PathLike) -> None:
    """Writes `dataset` into `directory`, creating it if needed."""
    os.makedirs(directory, exist_ok=True)

    counters = {}
    samples = []
    for position, label in enumerate(dataset.labels.tolist()):
        index = counters.get(label, 0)
        counters[label] = index + 1
        samples.append([label, index, dataset.splits[position].value])
        path = os.path.join(directory, _file_name(label, index))
        dataset.images[position].astype(PIXEL_DTYPE).tofile(path)

    meta = DatasetMeta(count=len(dataset), image_shape=dataset.image_shape,
                       seed=dataset.seed, config=dataset.config,
                       samples=samples)
    with open(os.path.join(directory, META_FILE), 'w') as fp:
        fp.write(meta.marshal())

    logger.info('Saved %d images to %s', len(dataset), directory)


def load_dataset(directory: PathLike) -> IdentityDataset:
    """Reads a directory written by :func:`save_dataset`.

    Raises
        :exc:`ConfigError`
            Raised when ``meta.json`` is malformed.

        :exc:`ContractError`
            Raised when an image file is missing or has the wrong size.
    """
    with open(os.path.join(directory, META_FILE), 'rb') as fp:
        meta = DatasetMeta.unmarshal(fp.read())

    shape = tuple(meta.image_shape)
    pixels = int(np.prod(shape))
    images = np.empty((meta.count,) + shape)
    labels = []
    splits = []

    for position, (label, index, split) in enumerate(meta.samples):
        path = os.path.join(directory, _file_name(label, index))
        try:
            data = np.fromfile(path, dtype=PIXEL_DTYPE)
        except FileNotFoundError as e:
            raise ContractError(f'missing image file {path}') from e
        if data.size != pixels:
            raise ContractError(f'{path} holds {data.size} values, '
                                f'expected {pixels}')
        images[position] = data.reshape(shape)
        labels.append(label)
        splits.append(split)

    logger.info('Loaded %d images from %s', meta.count, directory)
    return IdentityDataset(images, np.asarray(labels), splits, meta.seed,
                           meta.config)
