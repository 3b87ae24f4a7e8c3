from __future__ import annotations

import contextlib
import logging
import threading
from typing import (
    Any,
    Dict,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from ..errors import ContractError

__all__ = ('Tensor', 'Function', 'Tape', 'no_grad', 'is_grad_enabled',
           'backward', 'as_tensor')

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]

DTYPE = np.float64

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, 'grad_enabled', True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disables tape recording for the current thread.

    Example::

        with no_grad():
            output = model.forward(images)
    """
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Function:
    """Base class for differentiable operations.

    Subclasses implement :meth:`forward`, which receives the raw arrays of
    the inputs, and :meth:`backward`, which receives the gradient with
    respect to the output and returns one gradient per input (None for
    inputs that don't need one). Anything :meth:`backward` needs is saved
    on ``self`` during :meth:`forward`.
    """

    def __init__(self, *inputs: Tensor) -> None:
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        """Runs the operation on `inputs`, recording it on the tape when any
        input requires a gradient and recording is enabled."""
        function = cls(*inputs)
        data = function.forward(*(t.data for t in inputs), **kwargs)

        requires_grad = (is_grad_enabled()
                         and any(t.requires_grad for t in inputs))
        out = Tensor(data, requires_grad=requires_grad)
        if requires_grad:
            out.creator = function
        return out

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__} inputs={len(self.inputs)}>'


class Tensor:
    """A dense float64 array that participates in reverse-mode
    differentiation.

    Attributes
        data: numpy.ndarray
            The values, always float64 and C-contiguous.

        requires_grad: bool
            Whether gradients are accumulated into :attr:`Tensor.grad`
            (for leaves) or propagated through (for op outputs).

        grad: Optional[numpy.ndarray]
            The accumulated gradient, same shape as :attr:`Tensor.data`.

        creator: Optional[Function]
            The operation that produced this tensor, None for leaves.
    """
    __slots__ = ('data', 'requires_grad', 'grad', 'creator', 'name')

    __array_priority__ = 1000

    def __init__(self, data: ArrayLike, *, requires_grad: bool = False,
                 name: Optional[str] = None) -> None:
        array = np.array(data, dtype=DTYPE, copy=True, order='C')
        if array.ndim > 0 and 0 in array.shape:
            raise ContractError(
                f'tensor extents must be positive, got {array.shape}')
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.creator: Optional[Function] = None
        self.name = name

    @classmethod
    def zeros(cls, *shape: int, requires_grad: bool = False) -> Tensor:
        return cls(np.zeros(shape, dtype=DTYPE), requires_grad=requires_grad)

    @classmethod
    def ones(cls, *shape: int, requires_grad: bool = False) -> Tensor:
        return cls(np.ones(shape, dtype=DTYPE), requires_grad=requires_grad)

    @classmethod
    def full(cls, shape: Tuple[int, ...], value: float) -> Tensor:
        return cls(np.full(shape, value, dtype=DTYPE))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(
                f'item() needs a single element, shape is {self.shape}')
        return float(self.data.reshape(()))

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=DTYPE, copy=True)
        else:
            self.grad += grad

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        suffix = ', requires_grad=True' if self.requires_grad else ''
        return f'Tensor(shape={self.shape}{suffix})'

    def __len__(self) -> int:
        return len(self.data)

    # operator sugar, the rules live in ops.py

    def __add__(self, other: Any) -> Tensor:
        from . import ops
        return ops.add(self, as_tensor(other, self.shape))

    def __radd__(self, other: Any) -> Tensor:
        from . import ops
        return ops.add(as_tensor(other, self.shape), self)

    def __sub__(self, other: Any) -> Tensor:
        from . import ops
        return ops.sub(self, as_tensor(other, self.shape))

    def __rsub__(self, other: Any) -> Tensor:
        from . import ops
        return ops.sub(as_tensor(other, self.shape), self)

    def __mul__(self, other: Any) -> Tensor:
        from . import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.hadamard(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return self.__mul__(other)

    def __truediv__(self, other: Any) -> Tensor:
        from . import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, 1.0 / float(other))
        return ops.div(self, other)

    def __neg__(self) -> Tensor:
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other: Tensor) -> Tensor:
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, key: Any) -> Tensor:
        from . import ops
        return ops.getitem(self, key)

    @property
    def T(self) -> Tensor:
        from . import ops
        return ops.transpose(self)

    def sum(self, axes: Any = None, keepdims: bool = False) -> Tensor:
        from . import ops
        return ops.reduce('sum', self, axes, keepdims=keepdims)

    def mean(self, axes: Any = None, keepdims: bool = False) -> Tensor:
        from . import ops
        return ops.reduce('mean', self, axes, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        from . import ops
        return ops.reshape(self, shape)


def as_tensor(value: Any, shape: Optional[Tuple[int, ...]] = None) -> Tensor:
    """Wraps `value` as a constant tensor, scalars are filled to `shape`."""
    if isinstance(value, Tensor):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Tensor.full(shape if shape is not None else (), float(value))
    return Tensor(value)


class Tape:
    """The ordered record of the operations that produced an output.

    :attr:`Tape.nodes` lists every recorded :class:`Function` reachable
    from the output with each operation after all of its inputs'
    operations, so a backward traversal walks it in reverse and visits
    each node exactly once.
    """

    def __init__(self, nodes: List[Function]) -> None:
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> Tape:
        order: List[Function] = []
        visited = set()

        if output.creator is None:
            return cls(order)

        stack: List[Tuple[Function, bool]] = [(output.creator, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for inp in reversed(node.inputs):
                creator = inp.creator
                if creator is not None and id(creator) not in visited:
                    stack.append((creator, False))

        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[Function]:
        return iter(self.nodes)


def backward(loss: Tensor) -> None:
    """Accumulates d(loss)/d(leaf) into the ``grad`` of every leaf tensor
    that requires a gradient. Repeated calls accumulate.

    Raises
        :exc:`ContractError`
            Raised when `loss` isn't a single element.
    """
    if loss.data.size != 1:
        raise ContractError(
            f'backward needs a scalar loss, got shape {loss.shape}')

    if not loss.requires_grad:
        return

    seed = np.ones_like(loss.data)
    if loss.creator is None:
        loss.accumulate_grad(seed)
        return

    tape = Tape.from_output(loss)
    # keyed by the producing Function, each op output has exactly one
    grads: Dict[int, np.ndarray] = {id(loss.creator): seed}

    for node in reversed(tape.nodes):
        out_grad = grads.pop(id(node), None)
        if out_grad is None:
            continue

        input_grads = node.backward(out_grad)
        for inp, grad in zip(node.inputs, input_grads):
            if grad is None or not inp.requires_grad:
                continue
            if grad.shape != inp.shape:
                grad = np.reshape(grad, inp.shape)
            if inp.creator is None:
                inp.accumulate_grad(grad)
            else:
                key = id(inp.creator)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad

    logger.debug('Backward pass visited %d nodes', len(tape))
