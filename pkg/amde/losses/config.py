from __future__ import annotations

import enum
from typing import Optional

from ..errors import ConfigError
from ..utils.json import JsonField, JsonObject, JsonTemplate

__all__ = ('Rounding', 'MetricLoss', 'AnnConfig', 'AnnTemplate')


class Rounding(str, enum.Enum):
    CEIL = 'ceil'
    FLOOR = 'floor'


class MetricLoss(str, enum.Enum):
    NONE = 'none'
    ANN = 'ann'
    TRIPLET = 'triplet'
    CONTRASTIVE = 'contrastive'


def _non_negative(value) -> float:
    if isinstance(value, bool) or float(value) < 0:
        raise ValueError(f'expected a non-negative number, got {value!r}')
    return float(value)


def _count(value) -> int:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ValueError(f'expected an integer >= 1, got {value!r}')
    return int(value)


AnnTemplate: JsonTemplate[AnnConfig] = JsonTemplate(
    margin=JsonField('margin', _non_negative, default=0.3),
    k0=JsonField('k0', _count, default=1),
    rounding=JsonField('rounding', Rounding, lambda r: r.value,
                       default=Rounding.CEIL),
    lambda_=JsonField('lambda', _non_negative, default=1.0),
    fixed_k=JsonField('fixed_k', _count, default=None),
    contrastive_margin=JsonField('contrastive_margin', _non_negative,
                                 default=1.0),
)


class AnnConfig(JsonObject, template=AnnTemplate):
    """Settings of the metric losses.

    Attributes
        margin: float
            m, the hinge margin of the ANN and triplet losses (squared
            distance units).

        k0: int
            The smallest neighborhood size.

        rounding: Rounding
            How the entropy is rounded to an integer neighborhood size.

        lambda_: float
            The weight of the metric loss in the joint objective
            (json key ``lambda``).

        fixed_k: Optional[int]
            Uses this neighborhood size for every anchor instead of the
            entropy-driven one.

        contrastive_margin: float
            The margin of the contrastive baseline (distance units).
    """
    margin: float
    k0: int
    rounding: Rounding
    lambda_: float
    fixed_k: Optional[int]
    contrastive_margin: float

    def __validate__(self) -> None:
        if self.margin <= 0:
            raise ConfigError('margin must be positive', 'margin')
