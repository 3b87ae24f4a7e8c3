"""Finite-difference check of the joint loss through a whole encoder."""
from __future__ import annotations

import logging
from typing import List, Optional

import numpy as np

from ..diffcore.gradcheck import GradCheckResult, grad_check
from ..diffcore.tensor import Tensor
from ..encoder.config import EncoderConfig, LocalBranch
from ..encoder.model import EncoderModel
from ..errors import ContractError
from ..losses.config import AnnConfig, MetricLoss
from ..losses.joint import joint_loss
from ..losses.metric import BatchEmbeddings

__all__ = ('tiny_encoder_config', 'check_full_pipeline')

logger = logging.getLogger(__name__)

# coordinates with smaller gradients drown in rounding noise
MIN_GRADIENT = 1e-4

# identities and images per identity of the checked batch
BATCH_P, BATCH_K = 4, 2


def tiny_encoder_config(branch: LocalBranch = LocalBranch.LSTM,
                        num_classes: int = BATCH_P) -> EncoderConfig:
    return EncoderConfig(input_shape=(1, 16, 8), backbone_channels=[4, 6, 8],
                         feature_channels=8, map_height=2, map_width=1,
                         reduced_channels=4, embed_dim=6,
                         num_classes=num_classes, local_branch=branch)


def check_full_pipeline(seed: int = 0, eps: float = 1e-5,
                        branch: LocalBranch = LocalBranch.LSTM,
                        samples: int = 8,
                        config: Optional[EncoderConfig] = None
                        ) -> List[GradCheckResult]:
    """Checks d(joint loss)/d(parameter) for every parameter tensor of a
    small random encoder on a frozen random batch.

    Up to `samples` coordinates per tensor are checked, drawn among those
    whose gradient exceeds ``MIN_GRADIENT``. The hinge margin is large so
    every anchor's hinge stays active.

    Raises
        :exc:`ContractError`
            Raised when the encoder has fewer classes than the
            ``BATCH_P`` identities of the checked batch.
    """
    config = config or tiny_encoder_config(branch)
    if config.classes < BATCH_P:
        raise ContractError(f'the checked batch needs {BATCH_P} classes, '
                            f'the encoder has {config.classes}')
    model = EncoderModel(config, seed=seed)
    rng = np.random.default_rng([seed, 1])

    labels = np.repeat(np.arange(BATCH_P), BATCH_K)
    images = Tensor(rng.normal(size=(len(labels),) + config.input_shape))
    ann = AnnConfig(margin=10.0)

    def loss(_: Tensor) -> Tensor:
        output = model.forward(images)
        batch = BatchEmbeddings(output.embedding, output.logits, labels)
        return joint_loss(batch, ann, MetricLoss.ANN)

    model.zero_grad()
    loss(images).backward()
    gradients = {name: tensor.grad.copy()
                 for name, tensor in model.named_parameters()
                 if tensor.grad is not None}
    model.zero_grad()

    results = []
    for name, tensor in model.named_parameters():
        grad = gradients.get(name)
        if grad is None:
            continue
        candidates = np.flatnonzero(np.abs(grad.reshape(-1)) > MIN_GRADIENT)
        if candidates.size == 0:
            continue
        coords = rng.choice(candidates, size=min(samples, candidates.size),
                            replace=False)
        error = grad_check(loss, tensor, eps, coords=coords.tolist())
        results.append(GradCheckResult(f'joint_loss/{name}', len(coords),
                                       error))
        logger.info('gradcheck %-32s max rel. error %.3e',
                    f'joint_loss/{name}', error)
    return results
