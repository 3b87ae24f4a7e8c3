from __future__ import annotations

from typing import Any, Dict, Optional, Tuple

__all__ = ('AmdeError', 'DimensionError', 'AxisError', 'ContractError',
           'DeterminismError', 'SamplingError', 'ProtocolError',
           'ConfigError', 'NumericalError', 'CheckpointError',
           'CheckpointFormatError', 'CheckpointVersionError',
           'CheckpointTruncatedError', 'CheckpointChecksumError')


class AmdeError(Exception):
    """Base class for every error raised by amde.

    Attributes
        code: int
            The process exit code the command line uses for this error,
            always non-zero.
    """
    code = 1


class DimensionError(AmdeError, ValueError):
    """Raised when operand shapes don't agree.

    Attributes
        shapes: tuple[tuple[int, ...], ...]
            The offending shapes, in operand order.
    """
    code = 2

    def __init__(self, message: str, *shapes: Tuple[int, ...]) -> None:
        if shapes:
            message = f'{message}: ' + ' vs '.join(str(s) for s in shapes)
        super().__init__(message)
        self.shapes = shapes


class AxisError(AmdeError, ValueError):
    code = 3

    def __init__(self, axis: Any, ndim: int) -> None:
        super().__init__(f'axis {axis!r} is invalid for a {ndim}-axis tensor')
        self.axis = axis
        self.ndim = ndim


class ContractError(AmdeError, ValueError):
    """Raised when an operation's precondition is violated."""
    code = 4


class DeterminismError(AmdeError):
    code = 5

    def __init__(self, first: float, second: float) -> None:
        super().__init__(
            f'function is not deterministic: {first!r} != {second!r}')
        self.first = first
        self.second = second


class SamplingError(AmdeError):
    """Raised when a batch can't satisfy the metric-loss sampling contract.

    Attributes
        anchor: Optional[int]
            The batch index of the offending anchor, if any.
    """
    code = 6

    def __init__(self, message: str, anchor: Optional[int] = None) -> None:
        super().__init__(message)
        self.anchor = anchor


class ProtocolError(AmdeError):
    """Raised when a retrieval query has no relevant gallery item."""
    code = 7

    def __init__(self, message: str, query: Optional[int] = None) -> None:
        super().__init__(message)
        self.query = query


class ConfigError(AmdeError, ValueError):
    code = 8

    def __init__(self, message: str, key: Optional[str] = None) -> None:
        super().__init__(message)
        self.key = key


class NumericalError(AmdeError, ArithmeticError):
    """Raised when training produces a non-finite loss, gradient or
    parameter.

    Attributes
        diagnostics: dict[str, Any]
            Step, epoch and the names of the offending tensors.
    """
    code = 9

    def __init__(self, message: str, diagnostics: Dict[str, Any]) -> None:
        details = ', '.join(f'{k}={v}' for k, v in diagnostics.items())
        super().__init__(f'{message} ({details})')
        self.diagnostics = diagnostics


class CheckpointError(AmdeError):
    code = 10

    def __init__(self, message: str, path: Optional[str] = None) -> None:
        if path is not None:
            message = f'{path}: {message}'
        super().__init__(message)
        self.path = path


class CheckpointFormatError(CheckpointError):
    code = 11


class CheckpointVersionError(CheckpointError):
    code = 12


class CheckpointTruncatedError(CheckpointError):
    code = 13


class CheckpointChecksumError(CheckpointError):
    code = 14
