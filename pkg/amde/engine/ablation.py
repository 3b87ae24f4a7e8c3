from __future__ import annotations

import logging
import math
import os
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from ..data.dataset import IdentityDataset
from ..data.synthetic import generate_from_config
from ..errors import AmdeError, ConfigError, NumericalError
from ..evaluation.report import (
    MetricsRow,
    summarize_rows,
    write_metrics_csv,
    write_summary_csv,
)
from ..utils.events import EventDispatcher
from .config import IMPLEMENTER_DEFAULTS, VARIANTS, TrainConfig
from .evaluate import evaluate_model
from .trainer import TrainerEvents, train

__all__ = ('ABLATION_LEVELS', 'CellMonitor', 'variant_config', 'run_cell',
           'ablate', 'sweep', 'parse_k_values', 'summary_path')

logger = logging.getLogger(__name__)

ABLATION_LEVELS = (0.0, 0.3, 0.6)

PathLike = Union[str, 'os.PathLike[str]']
KValue = Union[int, str]


def variant_config(base: TrainConfig, name: str) -> TrainConfig:
    """`base` with the local branch and loss of ablation row `name`.

    Raises
        :exc:`ConfigError`
            Raised for an unknown variant name.
    """
    try:
        branch, loss = VARIANTS[name]
    except KeyError:
        raise ConfigError(f'unknown variant {name!r}, expected one of '
                          f'{", ".join(VARIANTS)}', 'variant') from None
    return base.replace(encoder=base.encoder.replace(local_branch=branch),
                        variant=loss)


class _DatasetCache:
    def __init__(self) -> None:
        self._datasets: Dict[Tuple[str, tuple], IdentityDataset] = {}

    def get(self, config: TrainConfig) -> IdentityDataset:
        shape = tuple(config.encoder.input_shape)
        key = (config.data.marshal(), shape)
        if key not in self._datasets:
            self._datasets[key] = generate_from_config(config.data, shape)
        return self._datasets[key]


def _failed_rows(name: str, seed: int,
                 levels: Sequence[float]) -> List[MetricsRow]:
    return [MetricsRow(name, seed, float(s), math.nan, math.nan, math.nan,
                       math.nan, 0) for s in levels]


class CellMonitor(EventDispatcher):
    """Follows the trainers of a grid run.

    Subscribed to each cell's trainer through the `observer` argument of
    :func:`train`, it counts the completed epochs and keeps every
    numerical failure with the cell that raised it.

    Attributes
        epochs: int
            Epochs completed over all cells.

        failures: list[tuple[str, int, NumericalError]]
            (variant label, seed, error) of every failed cell.
    """
    events = TrainerEvents

    def __init__(self) -> None:
        super().__init__()
        self.epochs = 0
        self.failures: List[Tuple[str, int, NumericalError]] = []
        self.register_listener('epoch_completed', self._on_epoch)
        self.register_listener('numerical_failure', self._on_failure)

    def _on_epoch(self, event: TrainerEvents.epoch_completed) -> None:
        self.epochs += 1

    def _on_failure(self, event: TrainerEvents.numerical_failure) -> None:
        config = event.trainer.config
        logger.warning('%s seed %d diverged: %s', config.label, config.seed,
                       event.error)
        self.failures.append((config.label, config.seed, event.error))


def run_cell(config: TrainConfig, dataset: IdentityDataset, name: str,
             levels: Sequence[float],
             threads: Optional[int] = None,
             monitor: Optional[CellMonitor] = None) -> List[MetricsRow]:
    """Trains and evaluates one (variant, seed) cell; a failing cell is
    logged and yields NaN metrics instead of raising."""
    try:
        result = train(config, dataset, observer=monitor)
        return evaluate_model(result.model, dataset, levels, variant=name,
                              seed=config.seed, threads=threads,
                              loss_final=result.log.final_loss,
                              clamp_events=result.log.clamp_events)
    except AmdeError as e:
        logger.error('Cell %s seed %d failed: %s', name, config.seed, e)
        return _failed_rows(name, config.seed, levels)


def summary_path(path: PathLike) -> str:
    stem, _ = os.path.splitext(os.fspath(path))
    return f'{stem}.summary.csv'


def _log_grid(monitor: CellMonitor, cells: int) -> None:
    logger.info('Trained %d cells for %d epochs in total, %d diverged',
                cells, monitor.epochs, len(monitor.failures))


def _seed_list(seeds: Union[int, Iterable[int]]) -> List[int]:
    if isinstance(seeds, int):
        if seeds < 1:
            raise ConfigError(f'need at least one seed, got {seeds}',
                              'seeds')
        return list(range(seeds))
    return [int(seed) for seed in seeds]


def ablate(base: TrainConfig, seeds: Union[int, Iterable[int]] = 3, *,
           levels: Sequence[float] = ABLATION_LEVELS,
           variants: Optional[Sequence[str]] = None,
           out: Optional[PathLike] = None,
           threads: Optional[int] = None) -> List[MetricsRow]:
    """Runs every ablation variant for every seed and occlusion level.

    Seeds change model initialization and batch sampling, the dataset
    comes from ``base.data`` and is shared by all cells. With `out` the
    rows are written there and the per-cell mean and standard deviation
    next to it (``<stem>.summary.csv``).
    """
    names = list(variants) if variants is not None else list(VARIANTS)
    seeds = _seed_list(seeds)
    cache = _DatasetCache()
    monitor = CellMonitor()

    rows: List[MetricsRow] = []
    for name in names:
        for seed in seeds:
            config = variant_config(base, name).replace(seed=seed)
            logger.info('Ablation cell %s seed %d', name, seed)
            rows.extend(run_cell(config, cache.get(config), name, levels,
                                 threads, monitor))
    _log_grid(monitor, len(names) * len(seeds))

    if out is not None:
        write_metrics_csv(out, rows)
        write_summary_csv(summary_path(out), summarize_rows(rows),
                          IMPLEMENTER_DEFAULTS)
    return rows


def parse_k_values(text: str) -> List[KValue]:
    """Parses ``1,2,3,adaptive`` into ``[1, 2, 3, 'adaptive']``."""
    values: List[KValue] = []
    for part in text.split(','):
        part = part.strip()
        if part == 'adaptive':
            values.append(part)
            continue
        try:
            k = int(part)
        except ValueError:
            raise ConfigError(f'invalid K value {part!r}', 'k') from None
        if k < 1:
            raise ConfigError(f'K must be >= 1, got {k}', 'k')
        values.append(k)
    return values


def sweep(base: TrainConfig, ks: Sequence[KValue] = (1, 2, 3, 4, 5,
                                                     'adaptive'),
          lambdas: Sequence[float] = (), seeds: Union[int,
                                                      Iterable[int]] = 3,
          *, out: Optional[PathLike] = None,
          threads: Optional[int] = None) -> List[MetricsRow]:
    """The neighborhood-size and loss-weight study on clean queries.

    Each K value trains ``base`` with that fixed neighborhood size
    (``adaptive`` keeps the entropy-driven one), each lambda trains it
    with that metric-loss weight. Rows are labeled ``k=<value>`` and
    ``lambda=<value>``.
    """
    seeds = _seed_list(seeds)
    cache = _DatasetCache()
    monitor = CellMonitor()
    cells: List[Tuple[str, TrainConfig]] = []

    for k in ks:
        fixed = None if k == 'adaptive' else int(k)
        cells.append((f'k={k}', base.replace(
            ann=base.ann.replace(fixed_k=fixed))))
    for value in lambdas:
        cells.append((f'lambda={float(value)!r}', base.replace(
            ann=base.ann.replace(lambda_=float(value)))))

    rows: List[MetricsRow] = []
    for name, config in cells:
        for seed in seeds:
            seeded = config.replace(seed=seed)
            logger.info('Sweep cell %s seed %d', name, seed)
            rows.extend(run_cell(seeded, cache.get(seeded), name, (0.0,),
                                 threads, monitor))
    _log_grid(monitor, len(cells) * len(seeds))

    if out is not None:
        write_metrics_csv(out, rows)
        write_summary_csv(summary_path(out), summarize_rows(rows),
                          IMPLEMENTER_DEFAULTS)
    return rows
