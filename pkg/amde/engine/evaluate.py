from __future__ import annotations

import logging
import math
from typing import List, Optional, Sequence

from ..data.dataset import IdentityDataset, Split
from ..data.occlusion import OcclusionSpec, occlude_images
from ..encoder.model import EncoderModel
from ..errors import ConfigError
from ..evaluation.metrics import cmc_at_k, mean_average_precision
from ..evaluation.ranking import rank_queries
from ..evaluation.report import MetricsRow
from ..utils.rng import derive_rng
from .checkpoint import Checkpoint

__all__ = ('evaluate', 'evaluate_model')

logger = logging.getLogger(__name__)

# stream tag of query occlusion, one seed per level
EVAL_STREAM = 4


def _occlusion_seed(seed: int, s: float) -> int:
    rng = derive_rng(seed, EVAL_STREAM, int(round(s * 1_000_000)))
    return int(rng.integers(2 ** 31))


def evaluate_model(model: EncoderModel, dataset: IdentityDataset,
                   occlusion_levels: Sequence[float], *, variant: str,
                   seed: int, threads: Optional[int] = None,
                   loss_final: float = math.nan,
                   clamp_events: int = 0) -> List[MetricsRow]:
    """One :class:`MetricsRow` per occlusion level.

    The gallery is embedded once. For every ``s > 0`` the queries are
    erased with seeded uniform-fill rectangles before embedding, ``s = 0``
    uses the clean queries as they are.
    """
    shape = tuple(model.config.input_shape)
    if dataset.image_shape != shape:
        raise ConfigError(f'dataset images are {dataset.image_shape}, '
                          f'the checkpoint expects {shape}', 'encoder')
    frozen = model if model.frozen else model.freeze()

    query_images, query_labels = dataset.subset(Split.QUERY)
    gallery_images, gallery_labels = dataset.subset(Split.GALLERY)
    gallery = frozen.embed(gallery_images)

    rows = []
    for s in occlusion_levels:
        s = float(s)
        if s == 0.0:
            images = query_images
        else:
            spec = OcclusionSpec(s=s, seed=_occlusion_seed(seed, s))
            images = occlude_images(query_images, spec)
        queries = frozen.embed(images)

        results = rank_queries(queries, query_labels, gallery,
                               gallery_labels, threads)
        row = MetricsRow(variant=variant, seed=seed, s=s,
                         rank1=cmc_at_k(results, 1),
                         rank5=cmc_at_k(results, 5),
                         map=mean_average_precision(results),
                         loss_final=loss_final, clamp_events=clamp_events)
        logger.info('%s seed %d s=%.2f: rank-1 %.4f, rank-5 %.4f, mAP %.4f',
                    variant, seed, s, row.rank1, row.rank5, row.map)
        rows.append(row)
    return rows


def evaluate(checkpoint: Checkpoint,
             dataset: IdentityDataset,
             occlusion_levels: Optional[Sequence[float]] = None, *,
             threads: Optional[int] = None, loss_final: float = math.nan,
             clamp_events: int = 0) -> List[MetricsRow]:
    """Evaluates a checkpoint at each occlusion level, by default the
    config's ``occlusion_eval_s``.

    Raises
        :exc:`ConfigError`
            Raised when the dataset images don't match the encoder input.
    """
    config = checkpoint.config
    model = checkpoint.build_model()
    if occlusion_levels is None:
        occlusion_levels = config.occlusion_eval_s
    return evaluate_model(model, dataset, occlusion_levels,
                          variant=config.label, seed=config.seed,
                          threads=threads, loss_final=loss_final,
                          clamp_events=clamp_events)
