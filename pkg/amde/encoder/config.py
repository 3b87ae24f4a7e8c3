from __future__ import annotations

import enum
from typing import Tuple

from ..errors import ConfigError
from ..utils.json import JsonArray, JsonField, JsonObject, JsonTemplate
from ..utils.undefined import resolve, undefined

__all__ = ('LocalBranch', 'EncoderConfig', 'EncoderTemplate')


class LocalBranch(str, enum.Enum):
    NONE = 'none'  # global branch only
    CONV = 'conv'  # 1-D conv over rows, ReLU, mean-pool
    FC = 'fc'  # flattened rows through FC + ReLU
    RNN = 'rnn'  # vanilla tanh recurrence
    LSTM = 'lstm'  # spatially encoded local features


def _shape3(value) -> Tuple[int, int, int]:
    shape = tuple(int(v) for v in value)
    if len(shape) != 3 or min(shape) < 1:
        raise ValueError(f'expected (channels, height, width), got {value!r}')
    return shape


def _positive(value) -> int:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ValueError(f'expected a positive integer, got {value!r}')
    return int(value)


def _flag(value) -> bool:
    if not isinstance(value, bool):
        raise ValueError(f'expected true or false, got {value!r}')
    return value


EncoderTemplate: JsonTemplate[EncoderConfig] = JsonTemplate(
    input_shape=JsonField('input_shape', _shape3, list,
                          default=lambda: (1, 64, 32)),
    feature_channels=JsonField('feature_channels', _positive, default=64),
    map_height=JsonField('map_height', _positive, default=8),
    map_width=JsonField('map_width', _positive, default=4),
    reduced_channels=JsonField('reduced_channels', _positive, default=32),
    lstm_hidden=JsonField('lstm_hidden', _positive, default=undefined),
    embed_dim=JsonField('embed_dim', _positive, default=64),
    num_classes=JsonField('num_classes', _positive, default=undefined),
    local_branch=JsonField('local_branch', LocalBranch,
                           lambda branch: branch.value,
                           default=LocalBranch.LSTM),
    backbone_channels=JsonArray('backbone_channels', _positive,
                                default=undefined),
    lstm_bias=JsonField('lstm_bias', _flag, default=True),
    normalize_embedding=JsonField('normalize_embedding', _flag,
                                  default=False),
)


class EncoderConfig(JsonObject, template=EncoderTemplate):
    """Shapes and switches of the two-branch encoder.

    The backbone halves the spatial extent once per conv block, so
    ``input_shape`` height and width must equal ``map_height`` and
    ``map_width`` times ``2 ** len(backbone_channels)``.
    ``lstm_hidden`` defaults to ``reduced_channels``,
    ``backbone_channels`` to ``(16, 32, feature_channels)``.
    ``num_classes`` has no default, it is usually taken from the dataset.
    """
    input_shape: Tuple[int, int, int]
    feature_channels: int
    map_height: int
    map_width: int
    reduced_channels: int
    embed_dim: int
    local_branch: LocalBranch
    lstm_bias: bool
    normalize_embedding: bool

    def __validate__(self) -> None:
        channels = self.conv_channels
        if channels[-1] != self.feature_channels:
            raise ConfigError(
                'the last backbone channel count must equal '
                f'feature_channels ({channels[-1]} != '
                f'{self.feature_channels})', 'backbone_channels')

        factor = 2 ** len(channels)
        _, height, width = self.input_shape
        if (height != self.map_height * factor
                or width != self.map_width * factor):
            raise ConfigError(
                f'input {height}x{width} does not reduce to '
                f'{self.map_height}x{self.map_width} through '
                f'{len(channels)} downsampling blocks', 'input_shape')

    @property
    def hidden_size(self) -> int:
        return resolve(self.lstm_hidden, self.reduced_channels)

    @property
    def conv_channels(self) -> Tuple[int, ...]:
        channels = resolve(self.backbone_channels, undefined)
        if channels is undefined:
            return (16, 32, self.feature_channels)
        if not channels:
            raise ConfigError('backbone_channels must not be empty',
                              'backbone_channels')
        return tuple(channels)

    @property
    def classes(self) -> int:
        if self.num_classes is undefined or self.num_classes is None:
            raise ConfigError('num_classes is not set', 'num_classes')
        return self.num_classes

    @property
    def local_dim(self) -> int:
        if self.local_branch is LocalBranch.NONE:
            return 0
        if self.local_branch in (LocalBranch.RNN, LocalBranch.LSTM):
            return self.hidden_size
        return self.reduced_channels
