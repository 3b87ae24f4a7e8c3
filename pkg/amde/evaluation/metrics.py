from __future__ import annotations

from typing import List, Sequence

import numpy as np

from ..errors import ContractError
from .ranking import RankingResult

__all__ = ('cmc_at_k', 'cmc_curve', 'average_precision',
           'mean_average_precision')


def _check(results: Sequence[RankingResult]) -> None:
    if not results:
        raise ContractError('no queries to evaluate')


def cmc_at_k(results: Sequence[RankingResult], k: int) -> float:
    """Fraction of queries with a relevant item among their top `k`.

    Raises
        :exc:`ContractError`
            Raised when `k` < 1 or `results` is empty.

        :exc:`ProtocolError`
            Raised when a query has no relevant gallery item.
    """
    if k < 1:
        raise ContractError(f'k must be >= 1, got {k}')
    _check(results)
    hits = sum(int(result.hit_ranks()[0] <= k) for result in results)
    return hits / len(results)


def cmc_curve(results: Sequence[RankingResult], max_k: int) -> List[float]:
    """``[cmc_at_k(results, k) for k in 1..max_k]`` in one pass."""
    if max_k < 1:
        raise ContractError(f'max_k must be >= 1, got {max_k}')
    _check(results)
    first = np.array([result.hit_ranks()[0] for result in results])
    return [float(np.mean(first <= k)) for k in range(1, max_k + 1)]


def average_precision(result: RankingResult) -> float:
    """Mean of the precision at the rank of every relevant item."""
    ranks = result.hit_ranks()
    precisions = np.arange(1, len(ranks) + 1) / ranks
    return float(np.mean(precisions))


def mean_average_precision(results: Sequence[RankingResult]) -> float:
    _check(results)
    return float(np.mean([average_precision(r) for r in results]))
