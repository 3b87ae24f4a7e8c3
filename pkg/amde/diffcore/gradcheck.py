from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..errors import ContractError, DeterminismError
from . import ops
from .tensor import Tensor, backward

__all__ = ('grad_check', 'GradCheckResult', 'run_gradcheck_suite',
           'OP_CASES')

logger = logging.getLogger(__name__)

TensorFunction = Callable[[Tensor], Tensor]


def _evaluate(f: TensorFunction, x: Tensor) -> float:
    out = f(x)
    if out.data.size != 1:
        raise ContractError(
            f'grad_check needs a scalar function, got shape {out.shape}')
    return float(out.data.reshape(()))


def grad_check(f: TensorFunction, x: Tensor, eps: float = 1e-5, *,
               coords: Optional[Sequence[int]] = None) -> float:
    """Compares the tape gradient of `f` at `x` with central differences.

    `x` is perturbed in place (and restored), so `f` may close over `x`
    instead of using its argument, which is how model parameters are
    checked.

    Arguments
        f: Callable[[Tensor], Tensor]
            A deterministic scalar-valued function.

        x: Tensor
            The point to check at, its ``requires_grad`` is set for the
            duration of the check.

        eps: float
            The central-difference step, in (0, 1e-2].

        coords: Optional[Sequence[int]]
            Flat indices to check, every coordinate when None.

    Returns
        float
            max over checked coordinates of
            ``|analytic - cd| / max(|analytic|, |cd|, 1e-8)``.

    Raises
        :exc:`DeterminismError`
            Raised when two evaluations of `f` at `x` disagree.
    """
    if not 0 < eps <= 1e-2:
        raise ContractError(f'eps must lie in (0, 1e-2], got {eps}')

    first = _evaluate(f, x)
    second = _evaluate(f, x)
    if first != second:
        raise DeterminismError(first, second)

    previous_flag = x.requires_grad
    previous_grad = x.grad
    x.requires_grad = True
    x.grad = None
    try:
        out = f(x)
        backward(out)
        analytic = (np.zeros_like(x.data) if x.grad is None
                    else x.grad.copy())
    finally:
        x.requires_grad = previous_flag
        x.grad = previous_grad

    flat = x.data.reshape(-1)
    grad = analytic.reshape(-1)
    indices = range(flat.size) if coords is None else coords

    worst = 0.0
    for i in indices:
        original = flat[i]
        flat[i] = original + eps
        upper = _evaluate(f, x)
        flat[i] = original - eps
        lower = _evaluate(f, x)
        flat[i] = original

        numeric = (upper - lower) / (2.0 * eps)
        scale = max(abs(grad[i]), abs(numeric), 1e-8)
        worst = max(worst, abs(grad[i] - numeric) / scale)

    return worst


@dataclass
class GradCheckResult:
    name: str
    cases: int
    max_error: float

    @property
    def passed(self) -> bool:
        return self.max_error < 1e-4


def _random_shape(rng: np.random.Generator, ndim: int) -> tuple:
    return tuple(int(n) for n in rng.integers(1, 5, size=ndim))


def _away_from_zero(rng, shape):
    # keeps relu/hinge kinks away from the perturbation
    values = rng.uniform(0.1, 1.0, size=shape)
    return values * rng.choice([-1.0, 1.0], size=shape)


def _case_matmul(rng):
    m, k, n = (int(v) for v in rng.integers(1, 5, size=3))
    b = Tensor(rng.normal(size=(k, n)))
    x = Tensor(rng.normal(size=(m, k)))
    weights = Tensor(rng.normal(size=(m, n)))
    return (lambda t: ops.reduce('sum', ops.hadamard(ops.matmul(t, b),
                                                     weights))), x


def _unary_case(function, sampler=None):
    def case(rng):
        shape = _random_shape(rng, int(rng.integers(1, 4)))
        data = (sampler or (lambda r, s: r.normal(size=s)))(rng, shape)
        x = Tensor(data)
        weights = Tensor(rng.normal(size=shape))
        return (lambda t: ops.reduce('sum',
                                     ops.hadamard(function(t), weights))), x
    return case


def _binary_case(function, sampler=None):
    def case(rng):
        shape = _random_shape(rng, int(rng.integers(1, 4)))
        other = Tensor((sampler or (lambda r, s: r.normal(size=s)))(rng, shape))
        x = Tensor(rng.normal(size=shape))
        weights = Tensor(rng.normal(size=shape))
        return (lambda t: ops.reduce('sum', ops.hadamard(function(t, other),
                                                         weights))), x
    return case


def _reduce_case(op):
    def case(rng):
        shape = _random_shape(rng, 3)
        axes = tuple(int(a) for a in np.flatnonzero(rng.random(3) < 0.5))
        x = Tensor(rng.normal(size=shape))
        out_shape = np.sum(np.zeros(shape), axis=axes or None).shape
        weights = Tensor(rng.normal(size=out_shape))
        return (lambda t: ops.reduce('sum', ops.hadamard(
            ops.reduce(op, t, axes or None), weights))), x
    return case


def _case_div_denominator(rng):
    shape = _random_shape(rng, 2)
    numerator = Tensor(rng.normal(size=shape))
    x = Tensor(_away_from_zero(rng, shape) * 2.0)
    weights = Tensor(rng.normal(size=shape))
    return (lambda t: ops.reduce('sum', ops.hadamard(ops.div(numerator, t),
                                                     weights))), x


def _case_conv2d(rng):
    b, c, o = (int(v) for v in rng.integers(1, 3, size=3))
    h, w = (int(v) for v in rng.integers(3, 6, size=2))
    weight = Tensor(rng.normal(size=(o, c, 3, 3)))
    bias = Tensor(rng.normal(size=(o,)))
    x = Tensor(rng.normal(size=(b, c, h, w)))
    weights = Tensor(rng.normal(size=(b, o, h, w)))
    return (lambda t: ops.reduce('sum', ops.hadamard(
        ops.conv2d(t, weight, bias, padding=1), weights))), x


def _case_log_softmax(rng):
    shape = _random_shape(rng, 2)
    x = Tensor(rng.normal(size=shape))
    weights = Tensor(rng.normal(size=shape))
    return (lambda t: ops.reduce('sum', ops.hadamard(ops.log_softmax(t),
                                                     weights))), x


def _case_pairwise(rng):
    b, d = int(rng.integers(2, 6)), int(rng.integers(1, 5))
    x = Tensor(rng.normal(size=(b, d)))
    weights = Tensor(rng.normal(size=(b, b)))
    return (lambda t: ops.reduce('sum', ops.hadamard(ops.pairwise_sqdist(t),
                                                     weights))), x


def _case_concat(rng):
    rows = int(rng.integers(1, 4))
    other = Tensor(rng.normal(size=(rows, 2)))
    x = Tensor(rng.normal(size=(rows, 3)))
    weights = Tensor(rng.normal(size=(rows, 5)))
    return (lambda t: ops.reduce('sum', ops.hadamard(
        ops.concat([t, other], axis=1), weights))), x


def _case_getitem(rng):
    x = Tensor(rng.normal(size=(4, 5)))
    weights = Tensor(rng.normal(size=(2, 3)))
    return (lambda t: ops.reduce('sum', ops.hadamard(
        ops.getitem(t, (slice(1, 3), slice(0, 5, 2))), weights))), x


def _case_broadcast(rng):
    x = Tensor(rng.normal(size=(1, 3)))
    weights = Tensor(rng.normal(size=(4, 3)))
    return (lambda t: ops.reduce('sum', ops.hadamard(
        ops.broadcast_to(t, (4, 3)), weights))), x


def _case_transpose(rng):
    x = Tensor(rng.normal(size=(2, 3, 4)))
    weights = Tensor(rng.normal(size=(4, 2, 3)))
    return (lambda t: ops.reduce('sum', ops.hadamard(
        ops.transpose(t, (2, 0, 1)), weights))), x


def _case_reshape(rng):
    x = Tensor(rng.normal(size=(2, 3, 4)))
    weights = Tensor(rng.normal(size=(6, 4)))
    return (lambda t: ops.reduce('sum', ops.hadamard(
        ops.reshape(t, (6, 4)), weights))), x


OP_CASES: Dict[str, Callable] = {
    'matmul': _case_matmul,
    'sigmoid': _unary_case(ops.sigmoid),
    'tanh': _unary_case(ops.tanh),
    'relu': _unary_case(ops.relu, _away_from_zero),
    'exp': _unary_case(ops.exp),
    'log': _unary_case(ops.log, lambda r, s: r.uniform(0.5, 2.0, size=s)),
    'sqrt': _unary_case(ops.sqrt, lambda r, s: r.uniform(0.5, 2.0, size=s)),
    'square': _unary_case(ops.square),
    'scale': _unary_case(lambda t: ops.scale(t, -1.7)),
    'neg': _unary_case(ops.neg),
    'add': _binary_case(ops.add),
    'sub': _binary_case(ops.sub),
    'hadamard': _binary_case(ops.hadamard),
    'div': _binary_case(ops.div, lambda r, s: r.uniform(0.5, 2.0, size=s)),
    'div_denominator': _case_div_denominator,
    'sum': _reduce_case('sum'),
    'mean': _reduce_case('mean'),
    'conv2d': _case_conv2d,
    'log_softmax': _case_log_softmax,
    'pairwise_sqdist': _case_pairwise,
    'concat': _case_concat,
    'getitem': _case_getitem,
    'broadcast_to': _case_broadcast,
    'transpose': _case_transpose,
    'reshape': _case_reshape,
}


def run_gradcheck_suite(*, full: bool = False, cases: int = 20,
                        seed: int = 0, eps: float = 1e-5
                        ) -> List[GradCheckResult]:
    """Checks every op in :data:`OP_CASES` on `cases` random inputs and,
    when `full` is set, the joint loss through a whole encoder.

    Returns
        list[GradCheckResult]
            The worst error per op.
    """
    results = []
    for index, (name, make_case) in enumerate(OP_CASES.items()):
        worst = 0.0
        for case in range(cases):
            rng = np.random.default_rng([seed, index, case])
            f, x = make_case(rng)
            worst = max(worst, grad_check(f, x, eps))
        results.append(GradCheckResult(name, cases, worst))
        logger.info('gradcheck %-16s max rel. error %.3e', name, worst)

    if full:
        from ..engine.gradcheck import check_full_pipeline
        results.extend(check_full_pipeline(seed=seed, eps=eps))

    return results
