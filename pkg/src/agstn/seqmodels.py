"""The two raw-prediction heads and the attention-weight network.

The LSTM consumes the full sensor vector at each lookback step and maps its
final hidden state through a dense layer to one raw forecast per sensor.
The conv head runs an independent valid 1-D filter over each sensor's row
of the correlation embedding, then average-pools.  The attention network
maps each sensor's own lookback history through an affine + sigmoid to a
scaling factor in (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import ContractError
from .numcore import Tensor


@dataclass
class LSTMParams:
    """Gate weights act on the concatenated [input; hidden] column."""

    w_i: Tensor
    w_f: Tensor
    w_o: Tensor
    w_g: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_g: Tensor
    w_out: Tensor
    b_out: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.w_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_i.shape[1] - self.hidden_dim


@dataclass
class ConvHeadParams:
    """One filter row per sensor (or a single shared row when ``shared``)."""

    filters: Tensor
    biases: Tensor
    shared: bool = False

    @property
    def width(self) -> int:
        return self.filters.shape[1]


@dataclass
class AttentionParams:
    """One weight row per sensor over its own lookback steps (or a single
    shared row when ``shared``)."""

    weights: Tensor
    biases: Tensor
    shared: bool = False

    @property
    def lookback(self) -> int:
        return self.weights.shape[1]


def lstm_forward(window, p: LSTMParams) -> Tensor:
    """Run the recurrence over the lookback rows of ``window`` (tau x N)
    from zero initial state and project the last hidden state to one raw
    forecast per sensor (N x 1)."""
    win = window.value if isinstance(window, Tensor) else np.asarray(window, dtype=float)
    tau, n = win.shape
    if n != p.input_dim:
        raise ContractError(f"window has {n} sensors, weights expect {p.input_dim}")

    hidden = p.hidden_dim
    h = nc.constant(np.zeros((hidden, 1)))
    c = nc.constant(np.zeros((hidden, 1)))
    for j in range(tau):
        x_t = nc.constant(win[j].reshape(n, 1))
        z = nc.vstack((x_t, h))
        i = nc.sigmoid(nc.add(nc.matmul(p.w_i, z), p.b_i))
        f = nc.sigmoid(nc.add(nc.matmul(p.w_f, z), p.b_f))
        o = nc.sigmoid(nc.add(nc.matmul(p.w_o, z), p.b_o))
        g = nc.tanh(nc.add(nc.matmul(p.w_g, z), p.b_g))
        c = nc.add(nc.multiply(f, c), nc.multiply(i, g))
        h = nc.multiply(o, nc.tanh(c))
    return nc.add(nc.matmul(p.w_out, h), p.b_out)


def conv_head(h_embed: Tensor, p: ConvHeadParams) -> Tensor:
    """Valid per-sensor 1-D cross-correlation over the embedding rows,
    ReLU, then average pooling to one value per sensor (N x 1)."""
    if not isinstance(h_embed, Tensor):
        h_embed = nc.constant(h_embed)
    n, tau = h_embed.shape
    lam = p.width
    if tau < lam:
        raise ContractError(f"lookback {tau} shorter than filter width {lam}")

    filters = nc.tile(p.filters, n, 1) if p.shared else p.filters
    if filters.shape != (n, lam):
        raise ContractError(f"filters {p.filters.shape} do not match N={n}")

    positions = []
    for j in range(tau - lam + 1):
        win = nc.slice_cols(h_embed, j, j + lam)
        positions.append(nc.sum_rows(nc.multiply(win, filters)))
    conv = nc.hstack(positions)
    biases = nc.tile(p.biases, 1, tau - lam + 1)
    activated = nc.relu(nc.add(conv, biases))
    return nc.mean_rows(activated)


def attention_weights(window, p: AttentionParams) -> Tensor:
    """Per-sensor scaling factors from the sensor's own lookback history:
    sigmoid(sum_j w[i, j] * window[j, i] + bias[i]), strictly in (0, 1)."""
    win_t = window if isinstance(window, Tensor) else nc.constant(window)
    tau, n = win_t.shape
    if tau != p.lookback:
        raise ContractError(f"window has {tau} rows, weights expect {p.lookback}")

    weights = nc.tile(p.weights, n, 1) if p.shared else p.weights
    if weights.shape != (n, tau):
        raise ContractError(f"weights {p.weights.shape} do not match N={n}")

    per_sensor = nc.sum_rows(nc.multiply(nc.transpose(win_t), weights))
    return nc.sigmoid(nc.add(per_sensor, p.biases))
