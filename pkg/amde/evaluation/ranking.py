from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from ..diffcore.tensor import Tensor
from ..errors import ContractError, DimensionError, ProtocolError
from ..losses.distance import sqdist_to
from ..utils.env import thread_count

__all__ = ('RankingResult', 'rank_gallery', 'rank_queries')

logger = logging.getLogger(__name__)

ArrayLike = Union[Tensor, np.ndarray, Sequence[float]]


def _as_array(value: ArrayLike) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data
    return np.asarray(value, dtype=np.float64)


@dataclass
class RankingResult:
    """The gallery ordering of one query.

    Attributes
        query: int
            The query's position in the query set.

        order: numpy.ndarray
            Gallery indices, nearest first.

        distances: numpy.ndarray
            Squared distances along `order`, non-decreasing.

        relevant: numpy.ndarray
            Whether each ranked gallery item shares the query's identity.
    """
    query: int
    order: np.ndarray
    distances: np.ndarray
    relevant: np.ndarray

    @property
    def num_relevant(self) -> int:
        return int(np.count_nonzero(self.relevant))

    def hit_ranks(self) -> np.ndarray:
        """1-based ranks of the relevant gallery items.

        Raises
            :exc:`ProtocolError`
                Raised when the query has no relevant gallery item.
        """
        ranks = np.flatnonzero(self.relevant) + 1
        if ranks.size == 0:
            raise ProtocolError(f'query {self.query} has no relevant '
                                'gallery item', self.query)
        return ranks


def rank_gallery(query_emb: ArrayLike, gallery_embs: ArrayLike) -> np.ndarray:
    """Gallery indices sorted by squared distance to `query_emb`, ties
    going to the lower index.

    Raises
        :exc:`DimensionError`
            Raised when the embedding sizes differ.

        :exc:`ContractError`
            Raised on an empty gallery.
    """
    query = _as_array(query_emb)
    gallery = _as_array(gallery_embs)
    if gallery.ndim != 2 or query.ndim != 1:
        raise DimensionError('expected a (d,) query and a (G, d) gallery',
                             query.shape, gallery.shape)
    if gallery.shape[0] < 1:
        raise ContractError('the gallery is empty')
    return np.argsort(sqdist_to(query, gallery), kind='stable')


def _rank_one(index: int, query: np.ndarray, label: int,
              gallery: np.ndarray, gallery_labels: np.ndarray
              ) -> RankingResult:
    distances = sqdist_to(query, gallery)
    order = np.argsort(distances, kind='stable')
    return RankingResult(index, order, distances[order],
                         gallery_labels[order] == label)


def rank_queries(query_embs: ArrayLike, query_labels: Sequence[int],
                 gallery_embs: ArrayLike, gallery_labels: Sequence[int],
                 threads: Optional[int] = None) -> List[RankingResult]:
    """Ranks the gallery for every query.

    Queries are independent and are spread over `threads` worker threads
    (default from ``AMDE_THREADS``); results come back in query order.
    """
    queries = _as_array(query_embs)
    gallery = _as_array(gallery_embs)
    query_labels = np.asarray(query_labels)
    gallery_labels = np.asarray(gallery_labels)

    if queries.ndim != 2 or gallery.ndim != 2 \
            or queries.shape[1] != gallery.shape[1]:
        raise DimensionError('query and gallery embeddings differ',
                             queries.shape, gallery.shape)
    if len(query_labels) != len(queries) \
            or len(gallery_labels) != len(gallery):
        raise DimensionError('one label per embedding', query_labels.shape,
                             queries.shape, gallery_labels.shape,
                             gallery.shape)
    if len(gallery) < 1:
        raise ContractError('the gallery is empty')

    threads = thread_count() if threads is None else max(1, int(threads))
    jobs = [(i, queries[i], query_labels[i], gallery, gallery_labels)
            for i in range(len(queries))]

    if threads == 1 or len(jobs) < 2:
        return [_rank_one(*job) for job in jobs]

    logger.debug('Ranking %d queries on %d threads', len(jobs), threads)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(lambda job: _rank_one(*job), jobs))
