from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..diffcore import ops
from ..diffcore.tensor import Tensor
from .classification import softmax_xent
from .config import AnnConfig, MetricLoss
from .metric import (
    AnnStats,
    BatchEmbeddings,
    ann_loss_with_stats,
    batch_hard_triplet,
    contrastive_loss,
)

__all__ = ('LossBreakdown', 'joint_loss', 'joint_loss_components',
           'metric_loss')


@dataclass
class LossBreakdown:
    total: Tensor
    softmax: Tensor
    metric: Optional[Tensor]
    ann_stats: Optional[AnnStats] = None


def metric_loss(batch: BatchEmbeddings, cfg: AnnConfig,
                metric: MetricLoss):
    """Returns (loss, ann stats) for `metric`, (None, None) for
    :attr:`MetricLoss.NONE`."""
    if metric is MetricLoss.ANN:
        return ann_loss_with_stats(batch, cfg)
    if metric is MetricLoss.TRIPLET:
        return batch_hard_triplet(batch, cfg.margin), None
    if metric is MetricLoss.CONTRASTIVE:
        return contrastive_loss(batch, cfg.contrastive_margin), None
    return None, None


def joint_loss_components(batch: BatchEmbeddings, cfg: AnnConfig,
                          metric: MetricLoss = MetricLoss.ANN
                          ) -> LossBreakdown:
    """softmax_xent + lambda * metric loss, keeping the parts."""
    softmax = softmax_xent(batch.logits, batch.labels)
    metric_value, stats = metric_loss(batch, cfg, MetricLoss(metric))
    if metric_value is None:
        return LossBreakdown(softmax, softmax, None)
    total = ops.add(softmax, ops.scale(metric_value, cfg.lambda_))
    return LossBreakdown(total, softmax, metric_value, stats)


def joint_loss(batch: BatchEmbeddings, cfg: AnnConfig,
               metric: MetricLoss = MetricLoss.ANN) -> Tensor:
    return joint_loss_components(batch, cfg, metric).total
