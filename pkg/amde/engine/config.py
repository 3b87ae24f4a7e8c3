from __future__ import annotations

import enum
from typing import Any, Dict, List, Optional, Tuple

from ..data.dataset import DataConfig
from ..data.occlusion import OcclusionSpec
from ..data.sampler import PKSpec
from ..data.synthetic import split_counts
from ..encoder.config import EncoderConfig, LocalBranch
from ..errors import ConfigError
from ..losses.config import AnnConfig, MetricLoss
from ..utils.json import JsonArray, JsonField, JsonObject, JsonTemplate
from ..utils.undefined import undefined

__all__ = ('LossVariant', 'OptimizerKind', 'TrainConfig', 'TrainTemplate',
           'VARIANTS', 'IMPLEMENTER_DEFAULTS')


class LossVariant(str, enum.Enum):
    SOFTMAX = 'softmax'
    SOFTMAX_ANN = 'softmax+ann'
    SOFTMAX_TRIPLET = 'softmax+triplet'
    SOFTMAX_CONTRASTIVE = 'softmax+contrastive'

    @property
    def metric(self) -> MetricLoss:
        return _VARIANT_METRICS[self]


_VARIANT_METRICS = {
    LossVariant.SOFTMAX: MetricLoss.NONE,
    LossVariant.SOFTMAX_ANN: MetricLoss.ANN,
    LossVariant.SOFTMAX_TRIPLET: MetricLoss.TRIPLET,
    LossVariant.SOFTMAX_CONTRASTIVE: MetricLoss.CONTRASTIVE,
}


class OptimizerKind(str, enum.Enum):
    ADAM = 'adam'
    SGD_MOMENTUM = 'sgd-momentum'


# the nine ablation rows: local branch and loss of each
VARIANTS: Dict[str, Tuple[LocalBranch, LossVariant]] = {
    'RN_S': (LocalBranch.NONE, LossVariant.SOFTMAX),
    'RN_A': (LocalBranch.NONE, LossVariant.SOFTMAX_ANN),
    'RNCONV_A': (LocalBranch.CONV, LossVariant.SOFTMAX_ANN),
    'RNFC_A': (LocalBranch.FC, LossVariant.SOFTMAX_ANN),
    'RNRNN_A': (LocalBranch.RNN, LossVariant.SOFTMAX_ANN),
    'RNLSTM_S': (LocalBranch.LSTM, LossVariant.SOFTMAX),
    'RNLSTM_C': (LocalBranch.LSTM, LossVariant.SOFTMAX_CONTRASTIVE),
    'RNLSTM_T': (LocalBranch.LSTM, LossVariant.SOFTMAX_TRIPLET),
    'RNLSTM_A': (LocalBranch.LSTM, LossVariant.SOFTMAX_ANN),
}


# values no published schedule pins down, reported with every run
IMPLEMENTER_DEFAULTS: Dict[str, Any] = {
    'margin': 0.3,
    'k0': 1,
    'rounding': 'ceil',
    'P': 8,
    'K': 4,
    'optimizer': 'adam',
    'learning_rate': 3e-4,
    'betas': [0.9, 0.999],
    'epochs': 30,
    'steps_per_epoch': 50,
    'backbone_channels': [16, 32, 64],
    'occlusion_fill': 'uniform',
}


def _positive_int(value) -> int:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ValueError(f'expected a positive integer, got {value!r}')
    return int(value)


def _positive_float(value) -> float:
    if isinstance(value, bool) or not float(value) > 0:
        raise ValueError(f'expected a positive number, got {value!r}')
    return float(value)


def _unit(value) -> float:
    if isinstance(value, bool) or not 0.0 <= float(value) <= 1.0:
        raise ValueError(f'expected a number in [0, 1], got {value!r}')
    return float(value)


def _beta(value) -> float:
    if isinstance(value, bool) or not 0.0 <= float(value) < 1.0:
        raise ValueError(f'expected a number in [0, 1), got {value!r}')
    return float(value)


def _seed(value) -> int:
    if isinstance(value, bool) or int(value) != value or value < 0:
        raise ValueError(f'expected a non-negative integer, got {value!r}')
    return int(value)


def _flag(value) -> bool:
    if not isinstance(value, bool):
        raise ValueError(f'expected true or false, got {value!r}')
    return value


TrainTemplate: JsonTemplate[TrainConfig] = JsonTemplate(
    encoder=JsonField('encoder', object=EncoderConfig, default=EncoderConfig),
    ann=JsonField('ann', object=AnnConfig, default=AnnConfig),
    data=JsonField('data', object=DataConfig, default=DataConfig),
    pk=JsonField('pk', object=PKSpec, default=PKSpec),
    variant=JsonField('variant', LossVariant, lambda v: v.value,
                      default=LossVariant.SOFTMAX_ANN),
    epochs=JsonField('epochs', _positive_int, default=30),
    steps_per_epoch=JsonField('steps_per_epoch', _positive_int, default=50),
    learning_rate=JsonField('learning_rate', _positive_float, default=3e-4),
    optimizer=JsonField('optimizer', OptimizerKind, lambda o: o.value,
                        default=OptimizerKind.ADAM),
    betas=JsonArray('betas', _beta, default=lambda: [0.9, 0.999]),
    momentum=JsonField('momentum', _beta, default=0.9),
    seed=JsonField('seed', _seed, default=0),
    occlusion_train=JsonField('occlusion_train', object=OcclusionSpec,
                              default=None, omitempty=True),
    occlusion_eval_s=JsonArray('occlusion_eval_s', _unit,
                               default=lambda: [0.0, 0.3, 0.6]),
    progress=JsonField('progress', _flag, default=True),
)


class TrainConfig(JsonObject, template=TrainTemplate):
    """Everything a training run depends on.

    The encoder's ``num_classes`` may be left out, it then resolves to
    the number of identities the data config generates.

    Attributes
        variant: LossVariant
            Which metric loss joins the softmax loss.

        occlusion_train: Optional[OcclusionSpec]
            Random erasing applied to training batches, off when None.

        occlusion_eval_s: list[float]
            The query occlusion levels evaluated after training.
    """
    encoder: EncoderConfig
    ann: AnnConfig
    data: DataConfig
    pk: PKSpec
    variant: LossVariant
    epochs: int
    steps_per_epoch: int
    learning_rate: float
    optimizer: OptimizerKind
    betas: List[float]
    momentum: float
    seed: int
    occlusion_train: Optional[OcclusionSpec]
    occlusion_eval_s: List[float]
    progress: bool

    def __validate__(self) -> None:
        if len(self.betas) != 2:
            raise ConfigError('betas must hold two numbers', 'betas')

        classes = self.encoder.num_classes
        if classes not in (undefined, None) and classes != self.data.num_ids:
            raise ConfigError(
                f'encoder.num_classes ({classes}) must equal data.num_ids '
                f'({self.data.num_ids})', 'encoder')
        if split_counts(self.data.imgs_per_id,
                        self.data.query_fraction)[2] < 1:
            raise ConfigError(
                f'data.imgs_per_id ({self.data.imgs_per_id}) leaves no '
                'training images per identity, use at least 3', 'data')
        if self.pk.p > self.data.num_ids:
            raise ConfigError(
                f'pk.P ({self.pk.p}) exceeds data.num_ids '
                f'({self.data.num_ids})', 'pk')

        spec = self.occlusion_train
        if spec is not None and not 0.0 <= spec.s <= 1.0:
            raise ConfigError('occlusion_train.s must be in [0, 1]',
                              'occlusion_train')

    @property
    def label(self) -> str:
        """The ablation variant name of the branch and loss, e.g.
        ``RNLSTM_A``."""
        key = (self.encoder.local_branch, self.variant)
        for name, cell in VARIANTS.items():
            if cell == key:
                return name
        return f'{self.encoder.local_branch.value}/{self.variant.value}'

    @property
    def metric(self) -> MetricLoss:
        return self.variant.metric

    def resolved_encoder(self) -> EncoderConfig:
        """The encoder config with ``num_classes`` filled in."""
        if self.encoder.num_classes in (undefined, None):
            return self.encoder.replace(num_classes=self.data.num_ids)
        return self.encoder
