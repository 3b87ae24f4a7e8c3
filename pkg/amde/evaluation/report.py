"""``metrics.csv`` rows and their per-cell summaries."""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from ..errors import ConfigError
from ..utils.json import dumps_canonical

__all__ = ('MetricsRow', 'SummaryRow', 'METRICS_COLUMNS', 'SUMMARY_COLUMNS',
           'metrics_csv', 'write_metrics_csv', 'read_metrics_csv',
           'summarize_rows', 'write_summary_csv')

PathLike = Union[str, 'os.PathLike[str]']


@dataclass
class MetricsRow:
    variant: str
    seed: int
    s: float
    rank1: float
    rank5: float
    map: float
    loss_final: float
    clamp_events: int

    @property
    def failed(self) -> bool:
        return math.isnan(self.rank1)


@dataclass
class SummaryRow:
    variant: str
    s: float
    runs: int
    failed: int
    rank1_mean: float
    rank1_std: float
    rank5_mean: float
    rank5_std: float
    map_mean: float
    map_std: float
    clamp_events_mean: float


METRICS_COLUMNS = tuple(f.name for f in fields(MetricsRow))
SUMMARY_COLUMNS = tuple(f.name for f in fields(SummaryRow))

_CONVERTERS = {'variant': str, 'seed': int, 's': float, 'rank1': float,
               'rank5': float, 'map': float, 'loss_final': float,
               'clamp_events': int}


def _write(fp, columns: Tuple[str, ...], records: Iterable[Dict[str, Any]]):
    writer = csv.DictWriter(fp, fieldnames=columns, lineterminator='\n')
    writer.writeheader()
    for record in records:
        writer.writerow({key: repr(value) if isinstance(value, float)
                         else value for key, value in record.items()})


def metrics_csv(rows: Iterable[MetricsRow]) -> str:
    buffer = io.StringIO()
    _write(buffer, METRICS_COLUMNS, (asdict(row) for row in rows))
    return buffer.getvalue()


def write_metrics_csv(path: PathLike, rows: Iterable[MetricsRow]) -> None:
    with open(path, 'w', newline='') as fp:
        fp.write(metrics_csv(rows))


def read_metrics_csv(path: PathLike) -> List[MetricsRow]:
    """Reads a file written by :func:`write_metrics_csv`.

    Raises
        :exc:`ConfigError`
            Raised when the header or a value is malformed.
    """
    with open(path, newline='') as fp:
        reader = csv.DictReader(fp)
        if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
            raise ConfigError(f'{path} does not have the metrics columns '
                              f'{",".join(METRICS_COLUMNS)}')
        rows = []
        for record in reader:
            try:
                rows.append(MetricsRow(**{key: _CONVERTERS[key](value)
                                          for key, value in record.items()}))
            except ValueError as e:
                raise ConfigError(f'{path}: {e}') from e
        return rows


def _mean_std(values: List[float]) -> Tuple[float, float]:
    if not values:
        return math.nan, math.nan
    array = np.asarray(values, dtype=np.float64)
    std = float(np.std(array, ddof=1)) if len(array) > 1 else 0.0
    return float(np.mean(array)), std


def summarize_rows(rows: Iterable[MetricsRow]) -> List[SummaryRow]:
    """Mean and sample standard deviation per (variant, s) cell over the
    successful seeds, cells in first-seen order."""
    cells: Dict[Tuple[str, float], List[MetricsRow]] = {}
    for row in rows:
        cells.setdefault((row.variant, row.s), []).append(row)

    summary = []
    for (variant, s), cell in cells.items():
        ok = [row for row in cell if not row.failed]
        rank1 = _mean_std([row.rank1 for row in ok])
        rank5 = _mean_std([row.rank5 for row in ok])
        mean_ap = _mean_std([row.map for row in ok])
        clamps = _mean_std([float(row.clamp_events) for row in ok])[0]
        summary.append(SummaryRow(variant, s, len(cell), len(cell) - len(ok),
                                  *rank1, *rank5, *mean_ap, clamps))
    return summary


def write_summary_csv(path: PathLike, summary: Iterable[SummaryRow],
                      implementer_defaults: Optional[Mapping] = None
                      ) -> None:
    """Writes the summary table, preceded by a ``#`` comment line holding
    the implementer defaults when given."""
    with open(path, 'w', newline='') as fp:
        if implementer_defaults is not None:
            fp.write('# implementer_defaults: '
                     f'{dumps_canonical(dict(implementer_defaults))}\n')
        _write(fp, SUMMARY_COLUMNS, (asdict(row) for row in summary))
