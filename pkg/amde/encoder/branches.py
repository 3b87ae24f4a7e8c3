from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from ..diffcore import ops
from ..diffcore.tensor import Tensor
from ..errors import ContractError, DimensionError
from .config import EncoderConfig
from .layers import Conv2d, Layer, Linear, uniform_init

__all__ = ('lstm_step', 'lstm_encode', 'LocalBranchLayer', 'LSTMBranch',
           'RNNBranch', 'ConvBranch', 'FCBranch')


def _as_rows(x: Tensor) -> Tuple[Tensor, bool]:
    if x.ndim == 1:
        return ops.reshape(x, (1, x.shape[0])), True
    return x, False


def lstm_step(s_t: Tensor, h_prev: Tensor, d_prev: Tensor, weight: Tensor,
              bias: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
    """One LSTM update.

    The pre-activations ``weight @ [s_t; h_prev] + bias`` are split into
    four blocks of ``e`` rows in the order (i, f, o, g); i, f and o go
    through a sigmoid, g through tanh, then::

        d_t = f * d_prev + i * g
        h_t = o * tanh(d_t)

    Arguments
        s_t: Tensor
            The input, (c,) or (B, c).

        h_prev, d_prev: Tensor
            The previous hidden and cell state, (e,) or (B, e).

        weight: Tensor
            (4e, c + e).

        bias: Optional[Tensor]
            (4e,), no bias term when None.

    Returns
        tuple[Tensor, Tensor]
            (h_t, d_t), shaped like `h_prev`.
    """
    e = h_prev.shape[-1]
    c = s_t.shape[-1]
    if weight.shape != (4 * e, c + e):
        raise DimensionError('lstm weight must be (4e, c + e)',
                             weight.shape, (4 * e, c + e))
    if d_prev.shape != h_prev.shape or s_t.shape[:-1] != h_prev.shape[:-1]:
        raise DimensionError('lstm state shapes differ',
                             s_t.shape, h_prev.shape, d_prev.shape)
    if bias is not None and bias.shape != (4 * e,):
        raise DimensionError('lstm bias must be (4e,)', bias.shape)

    s_t, single = _as_rows(s_t)
    h_prev, _ = _as_rows(h_prev)
    d_prev, _ = _as_rows(d_prev)

    z = ops.concat([s_t, h_prev], axis=1)
    pre = ops.matmul(z, ops.transpose(weight))
    if bias is not None:
        pre = ops.add(pre, ops.broadcast_to(bias, pre.shape))

    i = ops.sigmoid(pre[:, 0:e])
    f = ops.sigmoid(pre[:, e:2 * e])
    o = ops.sigmoid(pre[:, 2 * e:3 * e])
    g = ops.tanh(pre[:, 3 * e:4 * e])

    d_t = ops.add(ops.hadamard(f, d_prev), ops.hadamard(i, g))
    h_t = ops.hadamard(o, ops.tanh(d_t))

    if single:
        return ops.reshape(h_t, (e,)), ops.reshape(d_t, (e,))
    return h_t, d_t


def lstm_encode(sequence: Sequence[Tensor], weight: Tensor,
                bias: Optional[Tensor] = None) -> Tensor:
    """Runs :func:`lstm_step` over `sequence` from a zero state and returns
    the final hidden state.

    Raises
        :exc:`ContractError`
            Raised when `sequence` is empty.
    """
    if not sequence:
        raise ContractError('lstm_encode needs a non-empty sequence')

    e = weight.shape[0] // 4
    state_shape = sequence[0].shape[:-1] + (e,)
    h = Tensor.zeros(*state_shape)
    d = Tensor.zeros(*state_shape)
    for s_t in sequence:
        h, d = lstm_step(s_t, h, d, weight, bias)
    return h


class LocalBranchLayer(Layer):
    """Base class of the local branches, maps the row sequence S_1..S_H,
    each (B, c), to one (B, output_dim) feature."""
    output_dim: int

    def __init__(self, config: EncoderConfig,
                 rng: np.random.Generator) -> None:
        super().__init__('local')
        self.config = config

    def __call__(self, sequence: Sequence[Tensor]) -> Tensor:
        raise NotImplementedError


class LSTMBranch(LocalBranchLayer):
    __params__ = ('weight', 'bias')

    def __init__(self, config: EncoderConfig,
                 rng: np.random.Generator) -> None:
        super().__init__(config, rng)
        c = config.reduced_channels
        e = config.hidden_size
        self.output_dim = e
        self.weight = self._param(
            uniform_init(rng, (4 * e, c + e), c + e), 'weight')
        if config.lstm_bias:
            bias = np.zeros(4 * e)
            bias[e:2 * e] = 1.0
            self.bias = self._param(bias, 'bias')
        else:
            self.bias = None

    def __call__(self, sequence: Sequence[Tensor]) -> Tensor:
        return lstm_encode(sequence, self.weight, self.bias)


class RNNBranch(LocalBranchLayer):
    """h_t = tanh(weight @ [S_t; h_{t-1}] + bias), returns h_H."""
    __params__ = ('weight', 'bias')

    def __init__(self, config: EncoderConfig,
                 rng: np.random.Generator) -> None:
        super().__init__(config, rng)
        c = config.reduced_channels
        e = config.hidden_size
        self.output_dim = e
        self.weight = self._param(uniform_init(rng, (e, c + e), c + e),
                                  'weight')
        self.bias = self._param(np.zeros(e), 'bias')

    def __call__(self, sequence: Sequence[Tensor]) -> Tensor:
        if not sequence:
            raise ContractError('rnn branch needs a non-empty sequence')
        e = self.output_dim
        h = Tensor.zeros(sequence[0].shape[0], e)
        for s_t in sequence:
            z = ops.concat([s_t, h], axis=1)
            pre = ops.matmul(z, ops.transpose(self.weight))
            h = ops.tanh(ops.add(pre, ops.broadcast_to(self.bias, pre.shape)))
        return h


class ConvBranch(LocalBranchLayer):
    """A width-3 convolution along the row axis, ReLU, then the mean over
    rows."""
    __children__ = ('conv',)

    def __init__(self, config: EncoderConfig,
                 rng: np.random.Generator) -> None:
        super().__init__(config, rng)
        c = config.reduced_channels
        self.output_dim = c
        self.conv = Conv2d('local.conv', c, c, rng, kernel=(3, 1),
                           padding=(1, 0))

    def __call__(self, sequence: Sequence[Tensor]) -> Tensor:
        b, c = sequence[0].shape
        columns = [ops.reshape(s_t, (b, c, 1, 1)) for s_t in sequence]
        stacked = ops.concat(columns, axis=2)
        activated = ops.relu(self.conv(stacked))
        return ops.reduce('mean', activated, (2, 3))


class FCBranch(LocalBranchLayer):
    __children__ = ('fc',)

    def __init__(self, config: EncoderConfig,
                 rng: np.random.Generator) -> None:
        super().__init__(config, rng)
        c = config.reduced_channels
        self.output_dim = c
        self.fc = Linear('local.fc', config.map_height * c, c, rng)

    def __call__(self, sequence: Sequence[Tensor]) -> Tensor:
        flat = ops.concat(list(sequence), axis=1)
        return ops.relu(self.fc(flat))
