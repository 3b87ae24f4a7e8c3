"""The ``.amde`` checkpoint format.

All integers are little-endian::

    b'AMDE' | version u32 | json length u32 | json
    | tensor count u32
    | per tensor: name length u16 | name | ndim u8 | dims u32 * ndim
                  | float64 payload
    | crc32 of every preceding byte, u32

The json block holds ``{"config": ..., "epoch": ..., "rng": ...}`` in
canonical form, so save -> load -> save reproduces the file byte for
byte.
"""
from __future__ import annotations

import json
import logging
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Any, ClassVar, Dict, Optional, Union

import numpy as np

from ..encoder.model import EncoderModel
from ..errors import (
    CheckpointChecksumError,
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
)
from ..utils.json import dumps_canonical
from .config import TrainConfig

__all__ = ('Checkpoint', 'CHECKPOINT_MAGIC', 'CHECKPOINT_VERSION',
           'dumps_checkpoint', 'loads_checkpoint', 'save_checkpoint',
           'load_checkpoint', 'checkpoint_save', 'checkpoint_load',
           'parameter_checksum')

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b'AMDE'
CHECKPOINT_VERSION = 1
PAYLOAD_DTYPE = np.dtype('<f8')

PathLike = Union[str, 'os.PathLike[str]']


@dataclass
class Checkpoint:
    """A trained model with the config and progress it came from.

    Attributes
        tensors: dict[str, numpy.ndarray]
            Named parameters in model order.

        rng: dict
            The generator state the next epoch would start from.
    """
    config: TrainConfig
    tensors: Dict[str, np.ndarray]
    epoch: int = 0
    rng: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: EncoderModel, config: TrainConfig,
                   epoch: int = 0,
                   rng: Optional[Dict[str, Any]] = None) -> Checkpoint:
        return cls(config, model.state_dict(), epoch, rng or {})

    def build_model(self) -> EncoderModel:
        """A fresh model carrying the saved parameters."""
        model = EncoderModel(self.config.resolved_encoder(),
                             seed=self.config.seed)
        model.load_state_dict(self.tensors)
        return model

    def checksum(self) -> str:
        return parameter_checksum(self.tensors)


def parameter_checksum(tensors: Union[EncoderModel, Dict[str, np.ndarray]]
                       ) -> str:
    """crc32 over the names and float64 bytes of every parameter, as
    eight hex digits."""
    if isinstance(tensors, EncoderModel):
        tensors = tensors.state_dict()
    crc = 0
    for name, value in tensors.items():
        crc = zlib.crc32(name.encode('utf-8'), crc)
        crc = zlib.crc32(np.ascontiguousarray(value, PAYLOAD_DTYPE)
                         .tobytes(), crc)
    return f'{crc:08x}'


class _Layout:
    header: ClassVar[struct.Struct] = struct.Struct('<4sI')
    u32: ClassVar[struct.Struct] = struct.Struct('<I')
    u16: ClassVar[struct.Struct] = struct.Struct('<H')
    u8: ClassVar[struct.Struct] = struct.Struct('<B')


class _Reader:
    def __init__(self, data: bytes, end: int, path: Optional[str]) -> None:
        self.data = data
        self.end = end
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > self.end:
            raise CheckpointTruncatedError(
                f'needed {size} bytes at offset {self.offset}, '
                f'{self.end - self.offset} left', self.path)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, layout: struct.Struct):
        return layout.unpack(self.take(layout.size))


def dumps_checkpoint(checkpoint: Checkpoint) -> bytes:
    meta = dumps_canonical({'config': checkpoint.config.to_dict(),
                            'epoch': checkpoint.epoch,
                            'rng': checkpoint.rng}).encode('utf-8')

    parts = [_Layout.header.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION),
             _Layout.u32.pack(len(meta)), meta,
             _Layout.u32.pack(len(checkpoint.tensors))]

    for name, value in checkpoint.tensors.items():
        encoded = name.encode('utf-8')
        value = np.asarray(value)
        parts.append(_Layout.u16.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_Layout.u8.pack(value.ndim))
        parts.extend(_Layout.u32.pack(dim) for dim in value.shape)
        parts.append(np.ascontiguousarray(value, PAYLOAD_DTYPE).tobytes())

    body = b''.join(parts)
    return body + _Layout.u32.pack(zlib.crc32(body))


def loads_checkpoint(data: bytes, path: Optional[str] = None) -> Checkpoint:
    """Parses checkpoint bytes, nothing is built unless every check
    passes.

    Raises
        :exc:`CheckpointFormatError`
            Raised on a wrong magic, trailing bytes or an unreadable json
            block.

        :exc:`CheckpointVersionError`
            Raised on an unsupported format version.

        :exc:`CheckpointTruncatedError`
            Raised when the file ends early.

        :exc:`CheckpointChecksumError`
            Raised when the crc32 does not match.
    """
    if len(data) < _Layout.header.size:
        if not CHECKPOINT_MAGIC.startswith(data[:4]):
            raise CheckpointFormatError('not an amde checkpoint', path)
        raise CheckpointTruncatedError('file ends inside the header', path)

    magic, version = _Layout.header.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError('not an amde checkpoint', path)
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f'format version {version} is not supported '
            f'(expected {CHECKPOINT_VERSION})', path)

    end = len(data) - _Layout.u32.size
    reader = _Reader(data, end, path)
    reader.take(_Layout.header.size)

    meta_length, = reader.unpack(_Layout.u32)
    meta_bytes = reader.take(meta_length)
    count, = reader.unpack(_Layout.u32)

    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        name_length, = reader.unpack(_Layout.u16)
        name = reader.take(name_length)
        ndim, = reader.unpack(_Layout.u8)
        shape = tuple(reader.unpack(_Layout.u32)[0] for _ in range(ndim))
        payload = reader.take(int(np.prod(shape, dtype=np.int64))
                              * PAYLOAD_DTYPE.itemsize)
        tensors[name.decode('utf-8', errors='replace')] = (shape, payload)

    if reader.offset != end:
        raise CheckpointFormatError(
            f'{end - reader.offset} unexpected bytes before the checksum',
            path)

    stored, = _Layout.u32.unpack_from(data, end)
    if zlib.crc32(data[:end]) != stored:
        raise CheckpointChecksumError('crc32 mismatch', path)

    try:
        meta = json.loads(meta_bytes.decode('utf-8'))
        config = TrainConfig.unmarshal(meta['config'])
        epoch = int(meta['epoch'])
        rng = dict(meta['rng'])
    except (ValueError, KeyError, TypeError, ConfigError) as e:
        raise CheckpointFormatError(f'invalid json block: {e}', path) from e

    arrays = {name: np.frombuffer(payload, PAYLOAD_DTYPE)
              .reshape(shape).astype(np.float64)
              for name, (shape, payload) in tensors.items()}
    return Checkpoint(config, arrays, epoch, rng)


def save_checkpoint(checkpoint: Checkpoint, path: PathLike) -> None:
    data = dumps_checkpoint(checkpoint)
    with open(path, 'wb') as fp:
        fp.write(data)
    logger.info('Saved checkpoint %s (%d tensors, %d bytes)', path,
                len(checkpoint.tensors), len(data))


def load_checkpoint(path: PathLike) -> Checkpoint:
    with open(path, 'rb') as fp:
        data = fp.read()
    return loads_checkpoint(data, os.fspath(path))


def checkpoint_save(model: EncoderModel, path: PathLike,
                    config: TrainConfig, epoch: int = 0,
                    rng: Optional[Dict[str, Any]] = None) -> Checkpoint:
    """Saves `model` with the config it was trained under."""
    checkpoint = Checkpoint.from_model(model, config, epoch, rng)
    save_checkpoint(checkpoint, path)
    return checkpoint


def checkpoint_load(path: PathLike) -> EncoderModel:
    return load_checkpoint(path).build_model()
