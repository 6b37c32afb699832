"""Per-timestep similarity graphs and the two-layer graph convolution.

A window graph at step ``t_j`` connects every sensor pair with the cosine
similarity of their recent histories (the lookback steps ending at ``t_j``,
truncated near the start of the panel).  Negative similarities clamp to
zero so the symmetric degree normalization stays well defined; the diagonal
is fixed at 1 and doubles as the convolution self-loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import BoundsError, ContractError, DimensionError
from .numcore import Tensor


@dataclass
class WindowGraph:
    """Symmetric nonnegative N x N weights for one time step."""

    weights: np.ndarray
    t_index: int

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass
class GCNParams:
    """Weights of the two stacked layers, shared across all lookback steps.

    ``w0`` maps the per-node features (raw value + IMF channels) to the
    hidden width, ``w1`` maps hidden to the single output column.
    """

    w0: Tensor
    w1: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.w0.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.w0.shape[0]


def build_window_graph(panel, t_j: int, lookback: int) -> WindowGraph:
    """Cosine-similarity graph over the readings in ``[t_j-lookback+1, t_j]``.

    The window is truncated to available history near the panel start (a
    single reading degenerates to sign agreement).  Zero-norm windows get
    zero off-diagonal weight; entries are clamped to [0, 1] and the
    diagonal is exactly 1.
    """
    values = np.asarray(getattr(panel, "values", panel), dtype=float)
    t_total, n = values.shape
    if n < 2:
        raise ContractError("need at least 2 sensors to build a graph")
    if t_j < 0 or t_j >= t_total:
        raise BoundsError(f"time index {t_j} outside [0, {t_total - 1}]")

    start = max(0, t_j - lookback + 1)
    window = values[start:t_j + 1]  # (w, n)

    norms = np.linalg.norm(window, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    unit = window / safe
    weights = unit.T @ unit
    weights[norms == 0, :] = 0.0
    weights[:, norms == 0] = 0.0
    np.clip(weights, 0.0, 1.0, out=weights)
    weights = 0.5 * (weights + weights.T)
    np.fill_diagonal(weights, 1.0)
    return WindowGraph(weights, t_j)


def normalize_adjacency(g: WindowGraph | np.ndarray) -> np.ndarray:
    """Symmetric degree normalization d^-1/2 A d^-1/2 with degrees taken as
    row sums plus a 1e-8 stabilizer."""
    a = g.weights if isinstance(g, WindowGraph) else np.asarray(g, dtype=float)
    deg = a.sum(axis=1) + 1e-8
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    return a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def gcn_layer(a_norm, h, w, activation=None) -> Tensor:
    """One propagation step: activation(a_norm @ h @ w); differentiable in
    ``h`` and ``w``."""
    if not isinstance(a_norm, Tensor):
        a_norm = nc.constant(a_norm)
    if not isinstance(h, Tensor):
        h = nc.constant(h)
    if a_norm.shape[0] != a_norm.shape[1]:
        raise DimensionError(f"adjacency must be square, got {a_norm.shape}")
    out = nc.matmul(nc.matmul(a_norm, h), w)
    return activation(out) if activation is not None else out


def stc_embed(window_graphs, features, params: GCNParams) -> Tensor:
    """Spatio-temporal correlation embedding: per lookback step, a ReLU
    layer into the hidden width then a linear layer into one column; the
    per-step columns are concatenated in time order into N x tau.

    ``window_graphs``: one WindowGraph or pre-normalized N x N array per
    step.  ``features``: per-step N x (1 + K) node features (raw value
    column first, IMF channels after).
    """
    if len(window_graphs) != len(features):
        raise ContractError(
            f"{len(window_graphs)} graphs vs {len(features)} feature steps")
    n = None
    columns = []
    for g, feat in zip(window_graphs, features):
        a_norm = g if isinstance(g, np.ndarray) else normalize_adjacency(g)
        if n is None:
            n = a_norm.shape[0]
        if a_norm.shape != (n, n):
            raise ContractError("inconsistent sensor count across steps")
        feat_t = feat if isinstance(feat, Tensor) else nc.constant(feat)
        if feat_t.shape != (n, params.feature_dim):
            raise ContractError(
                f"features {feat_t.shape} do not match N={n}, "
                f"1+K={params.feature_dim}")
        a_t = nc.constant(a_norm)
        hidden = gcn_layer(a_t, feat_t, params.w0, nc.relu)
        columns.append(gcn_layer(a_t, hidden, params.w1))
    return nc.hstack(columns)
