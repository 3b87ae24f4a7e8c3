from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple, Type

import numpy as np

from ..diffcore import ops
from ..diffcore.tensor import Tensor, no_grad
from ..errors import ConfigError, DimensionError
from .branches import (
    ConvBranch,
    FCBranch,
    LocalBranchLayer,
    LSTMBranch,
    RNNBranch,
)
from .config import EncoderConfig, LocalBranch
from .layers import Conv2d, Layer, Linear, avg_pool2

__all__ = ('EncoderModel', 'EncoderOutput', 'Backbone', 'backbone_forward',
           'global_pool', 'row_pool_reduce', 'forward')

logger = logging.getLogger(__name__)


@dataclass
class EncoderOutput:
    """What :meth:`EncoderModel.forward` produces, one row per image.

    Attributes
        embedding: Tensor
            f(I), (B, embed_dim).

        logits: Tensor
            (B, num_classes).

        self_feature: Optional[Tensor]
            The local-branch feature, (B, local_dim), None without one.
            For the LSTM branch this is the final hidden state.

        global_feature: Tensor
            (B, C).
    """
    embedding: Tensor
    logits: Tensor
    self_feature: Optional[Tensor]
    global_feature: Tensor


class Backbone(Layer):
    """Conv blocks of 3x3 conv, ReLU and 2x average downsampling."""
    __children__ = ('blocks',)

    def __init__(self, config: EncoderConfig,
                 rng: np.random.Generator) -> None:
        super().__init__('backbone')
        channels = (config.input_shape[0],) + config.conv_channels
        self.blocks = [
            Conv2d(f'backbone.block{i}', channels[i], channels[i + 1], rng)
            for i in range(len(channels) - 1)
        ]

    def __call__(self, images: Tensor) -> Tensor:
        x = images
        for block in self.blocks:
            x = avg_pool2(ops.relu(block(x)))
        return x


class EncoderModel:
    """All learnable parameters of the encoder and the forward pass.

    Parameters are created in a fixed order from a generator seeded with
    `seed`, so the model is a pure function of (config, seed).

    Attributes
        config: EncoderConfig
            The shapes and switches the model was built with.

        frozen: bool
            Whether the model was produced by :meth:`EncoderModel.freeze`.
    """
    __branch_map__: Dict[LocalBranch, Type[LocalBranchLayer]] = {
        LocalBranch.LSTM: LSTMBranch,
        LocalBranch.RNN: RNNBranch,
        LocalBranch.CONV: ConvBranch,
        LocalBranch.FC: FCBranch,
    }

    @classmethod
    def set_branch_class(cls, branch: LocalBranch,
                         klass: Type[LocalBranchLayer]) -> None:
        assert issubclass(klass, LocalBranchLayer)
        cls.__branch_map__ = {**cls.__branch_map__, branch: klass}

    def __init__(self, config: EncoderConfig, seed: int = 0) -> None:
        self.config = config
        self.seed = seed
        self.frozen = False
        rng = np.random.default_rng(seed)

        self.backbone = Backbone(config, rng)
        self.reduction = Linear('reduction', config.feature_channels,
                                config.reduced_channels, rng)

        self.local: Optional[LocalBranchLayer] = None
        if config.local_branch is not LocalBranch.NONE:
            klass = self.__branch_map__[config.local_branch]
            self.local = klass(config, rng)

        self.fusion = Linear('fusion',
                             config.feature_channels + config.local_dim,
                             config.embed_dim, rng)
        self.classifier = Linear('classifier', config.embed_dim,
                                 config.classes, rng)

    def __repr__(self) -> str:
        return (f'<EncoderModel branch={self.config.local_branch.value} '
                f'parameters={self.parameter_count()}>')

    def layers(self) -> List[Layer]:
        layers: List[Layer] = [self.backbone, self.reduction]
        if self.local is not None:
            layers.append(self.local)
        layers.extend((self.fusion, self.classifier))
        return layers

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for layer in self.layers():
            yield from layer.named_parameters()

    def parameters(self) -> List[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(tensor.size for tensor in self.parameters())

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.numpy()
                for name, tensor in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Copies `state` into the parameters, names and shapes
        must match exactly."""
        named = dict(self.named_parameters())
        missing = set(named) - set(state)
        unexpected = set(state) - set(named)
        if missing or unexpected:
            raise ConfigError(
                f'parameter names differ: missing {sorted(missing)}, '
                f'unexpected {sorted(unexpected)}')
        for name, tensor in named.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise DimensionError(f'parameter {name} shape differs',
                                     tensor.shape, value.shape)
            tensor.data[...] = value

    def freeze(self) -> EncoderModel:
        """Returns a copy that records no gradients, safe to share
        read-only between evaluation threads."""
        frozen = copy.deepcopy(self)
        for tensor in frozen.parameters():
            tensor.requires_grad = False
            tensor.grad = None
            tensor.data.flags.writeable = False
        frozen.frozen = True
        return frozen

    def _check_images(self, images: Tensor) -> Tuple[Tensor, bool]:
        expected = self.config.input_shape
        if images.shape == expected:
            return ops.reshape(images, (1,) + expected), True
        if images.ndim != 4 or images.shape[1:] != expected:
            raise DimensionError('image shape does not match the config',
                                 images.shape, expected)
        return images, False

    def backbone_forward(self, images: Tensor) -> Tensor:
        """Maps (B, channels, height, width) images, or a single image,
        to (B, C, H, W) feature maps."""
        batch, single = self._check_images(images)
        fmap = self.backbone(batch)
        return fmap[0] if single else fmap

    def row_pool_reduce(self, fmap: Tensor) -> List[Tensor]:
        """Averages each row of the feature map over its width and maps
        it from C to c channels, returning S_1..S_H head to foot."""
        batch, single = _promote_map(fmap)
        rows = ops.reduce('mean', batch, 3)
        sequence = []
        for t in range(batch.shape[2]):
            s_t = self.reduction(rows[:, :, t])
            sequence.append(s_t[0] if single else s_t)
        return sequence

    def lstm_encode(self, sequence: List[Tensor]) -> Tensor:
        if not isinstance(self.local, LSTMBranch):
            raise ConfigError('model has no lstm branch', 'local_branch')
        return self.local(sequence)

    def forward(self, images: Tensor) -> EncoderOutput:
        """Runs both branches, fuses them into the embedding and
        classifies the embedding.

        A single image of ``input_shape`` yields unbatched outputs.
        """
        batch, single = self._check_images(images)
        fmap = self.backbone(batch)
        global_feature = global_pool(fmap)

        self_feature = None
        if self.local is not None:
            self_feature = self.local(self.row_pool_reduce(fmap))
            fused = ops.concat([global_feature, self_feature], axis=1)
        else:
            fused = global_feature

        embedding = self.fusion(fused)
        if self.config.normalize_embedding:
            norm = ops.sqrt(ops.reduce('sum', ops.square(embedding), 1,
                                       keepdims=True))
            embedding = ops.div(embedding,
                                ops.broadcast_to(norm, embedding.shape))
        logits = self.classifier(embedding)

        output = EncoderOutput(embedding, logits, self_feature,
                               global_feature)
        if single:
            output = EncoderOutput(
                embedding[0], logits[0],
                None if self_feature is None else self_feature[0],
                global_feature[0])
        return output

    def embed(self, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Embeds an array of images in chunks without recording
        gradients."""
        chunks = []
        with no_grad():
            for start in range(0, len(images), batch_size):
                batch = Tensor(images[start:start + batch_size])
                chunks.append(self.forward(batch).embedding.data)
        return np.concatenate(chunks, axis=0)


def _promote_map(fmap: Tensor) -> Tuple[Tensor, bool]:
    if fmap.ndim == 3:
        return ops.reshape(fmap, (1,) + fmap.shape), True
    if fmap.ndim != 4:
        raise DimensionError('feature map must be (C, H, W) or (B, C, H, W)',
                             fmap.shape)
    return fmap, False


def backbone_forward(image: Tensor, model: EncoderModel) -> Tensor:
    return model.backbone_forward(image)


def global_pool(fmap: Tensor) -> Tensor:
    """Per-channel mean over every spatial position, (C, H, W) -> (C,)
    or (B, C, H, W) -> (B, C)."""
    if fmap.ndim not in (3, 4):
        raise DimensionError('feature map must be (C, H, W) or (B, C, H, W)',
                             fmap.shape)
    return ops.reduce('mean', fmap, (-2, -1))


def row_pool_reduce(fmap: Tensor, model: EncoderModel) -> List[Tensor]:
    return model.row_pool_reduce(fmap)


def forward(image: Tensor, model: EncoderModel) -> EncoderOutput:
    return model.forward(image)
