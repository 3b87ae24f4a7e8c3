from __future__ import annotations

import logging
import os

__all__ = ('THREADS_VARIABLE', 'thread_count')

logger = logging.getLogger(__name__)

THREADS_VARIABLE = 'AMDE_THREADS'


def thread_count() -> int:
    """The evaluation thread cap from ``AMDE_THREADS``, 1 when it is unset
    or not a positive integer."""
    value = os.environ.get(THREADS_VARIABLE)
    if value is None or not value.strip():
        return 1
    try:
        threads = int(value)
    except ValueError:
        threads = 0
    if threads < 1:
        logger.warning('Ignoring %s=%r, using 1 thread', THREADS_VARIABLE,
                       value)
        return 1
    return threads
