"""Full forward pass: two raw heads averaged into an ensemble, then scaled
elementwise by the learned attention weights.

The ``no-imf`` variant zeroes the IMF feature channels before the graph
convolution, so its output is invariant to the decomposition contents.
Diagnostics (both raw heads, the ensemble, the attention vector) are
first-class outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from . import seqmodels
from .errors import ContractError
from .graphs import GCNParams, stc_embed
from .numcore import Tensor
from .seqmodels import AttentionParams, ConvHeadParams, LSTMParams

VARIANTS = ("full", "no-imf")


@dataclass
class ModelMeta:
    n: int
    tau: int
    k: int              # IMF feature channels (aligned modes + residual)
    delta: int = 1
    variant: str = "full"

    def validate(self) -> None:
        if min(self.n, self.tau, self.k, self.delta) <= 0:
            raise ContractError("all model dimensions must be positive")
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}")


@dataclass
class ModelParams:
    gcn: GCNParams
    lstm: LSTMParams
    conv: ConvHeadParams
    attention: AttentionParams
    meta: ModelMeta

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """Deterministically ordered trainable leaves."""
        p = self
        return [
            ("gcn.w0", p.gcn.w0),
            ("gcn.w1", p.gcn.w1),
            ("lstm.w_i", p.lstm.w_i),
            ("lstm.w_f", p.lstm.w_f),
            ("lstm.w_o", p.lstm.w_o),
            ("lstm.w_g", p.lstm.w_g),
            ("lstm.b_i", p.lstm.b_i),
            ("lstm.b_f", p.lstm.b_f),
            ("lstm.b_o", p.lstm.b_o),
            ("lstm.b_g", p.lstm.b_g),
            ("lstm.w_out", p.lstm.w_out),
            ("lstm.b_out", p.lstm.b_out),
            ("conv.filters", p.conv.filters),
            ("conv.biases", p.conv.biases),
            ("attention.weights", p.attention.weights),
            ("attention.biases", p.attention.biases),
        ]


@dataclass
class ForwardGraph:
    """Differentiable intermediates of one forward pass."""

    prediction: Tensor
    lstm_raw: Tensor
    conv_raw: Tensor
    ensemble: Tensor
    attention: Tensor


@dataclass
class Diagnostics:
    lstm_raw: np.ndarray
    conv_raw: np.ndarray
    ensemble: np.ndarray
    attention: np.ndarray


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, int]) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(n: int, tau: int, k: int, delta: int = 1,
                variant: str = "full", seed: int = 0,
                gcn_hidden: int = 8, lstm_hidden: int = 64,
                conv_width: int = 3, conv_shared: bool = False,
                attention_shared: bool = False) -> ModelParams:
    """Seeded Xavier-uniform weights, zero biases except the LSTM forget
    bias (1.0)."""
    meta = ModelMeta(n, tau, k, delta, variant)
    meta.validate()
    if conv_width > tau:
        raise ContractError(f"conv width {conv_width} exceeds lookback {tau}")
    rng = np.random.default_rng(seed)

    feat = 1 + k
    gcn = GCNParams(
        w0=nc.parameter(xavier_uniform(rng, feat, gcn_hidden, (feat, gcn_hidden))),
        w1=nc.parameter(xavier_uniform(rng, gcn_hidden, 1, (gcn_hidden, 1))),
    )

    zdim = n + lstm_hidden
    gate = lambda: nc.parameter(
        xavier_uniform(rng, zdim, lstm_hidden, (lstm_hidden, zdim)))
    lstm = LSTMParams(
        w_i=gate(), w_f=gate(), w_o=gate(), w_g=gate(),
        b_i=nc.parameter(np.zeros((lstm_hidden, 1))),
        b_f=nc.parameter(np.ones((lstm_hidden, 1))),
        b_o=nc.parameter(np.zeros((lstm_hidden, 1))),
        b_g=nc.parameter(np.zeros((lstm_hidden, 1))),
        w_out=nc.parameter(xavier_uniform(rng, lstm_hidden, n, (n, lstm_hidden))),
        b_out=nc.parameter(np.zeros((n, 1))),
    )

    conv_rows = 1 if conv_shared else n
    conv = ConvHeadParams(
        filters=nc.parameter(
            xavier_uniform(rng, conv_width, 1, (conv_rows, conv_width))),
        biases=nc.parameter(np.zeros((n, 1))),
        shared=conv_shared,
    )

    attn_rows = 1 if attention_shared else n
    attention = AttentionParams(
        weights=nc.parameter(
            xavier_uniform(rng, tau, 1, (attn_rows, tau))),
        biases=nc.parameter(np.zeros((n, 1))),
        shared=attention_shared,
    )
    return ModelParams(gcn, lstm, conv, attention, meta)


def _check_sample(sample, meta: ModelMeta) -> None:
    tau, n = np.shape(sample.raw_window)
    if (tau, n) != (meta.tau, meta.n):
        raise ContractError(
            f"sample window {tau}x{n} does not match model {meta.tau}x{meta.n}")
    k = np.shape(sample.imf_window)[1]
    if np.shape(sample.imf_window) != (meta.tau, meta.k, meta.n):
        raise ContractError(
            f"sample IMF block {np.shape(sample.imf_window)} does not match "
            f"model (tau, K, N)=({meta.tau}, {meta.k}, {meta.n})")
    if len(sample.adjacencies) != meta.tau:
        raise ContractError(
            f"sample has {len(sample.adjacencies)} step graphs, need {meta.tau}")


def forward_graph(sample, params: ModelParams) -> ForwardGraph:
    """Build the differentiable graph for one sample.

    ``sample`` needs ``raw_window`` (tau x N), ``imf_window`` (tau x K x N)
    and ``adjacencies`` (tau pre-normalized N x N arrays or WindowGraphs).
    """
    meta = params.meta
    _check_sample(sample, meta)
    raw = np.asarray(sample.raw_window, dtype=float)
    imf = np.asarray(sample.imf_window, dtype=float)
    if meta.variant == "no-imf":
        imf = np.zeros_like(imf)

    # per-step node features [X^t_j, IMF^t_j]: N x (1 + K)
    features = [
        np.hstack([raw[j].reshape(-1, 1), imf[j].T]) for j in range(meta.tau)
    ]
    h_embed = stc_embed(sample.adjacencies, features, params.gcn)

    lstm_raw = seqmodels.lstm_forward(raw, params.lstm)
    conv_raw = seqmodels.conv_head(h_embed, params.conv)
    ensemble = nc.scale(nc.add(lstm_raw, conv_raw), 0.5)
    attention = seqmodels.attention_weights(raw, params.attention)
    prediction = nc.multiply(attention, ensemble)
    return ForwardGraph(prediction, lstm_raw, conv_raw, ensemble, attention)


def forward(sample, params: ModelParams):
    """Numpy view of one forward pass: ``(prediction, diagnostics)`` with
    the prediction as a length-N vector."""
    g = forward_graph(sample, params)
    diag = Diagnostics(
        lstm_raw=g.lstm_raw.value[:, 0].copy(),
        conv_raw=g.conv_raw.value[:, 0].copy(),
        ensemble=g.ensemble.value[:, 0].copy(),
        attention=g.attention.value[:, 0].copy(),
    )
    return g.prediction.value[:, 0].copy(), diag


# ---------------------------------------------------------------------------
# array <-> params mapping used by the checkpoint container


def params_meta_fields(params: ModelParams) -> dict[str, str]:
    m = params.meta
    return {
        "meta.n": str(m.n),
        "meta.tau": str(m.tau),
        "meta.k": str(m.k),
        "meta.delta": str(m.delta),
        "meta.variant": m.variant,
        "meta.gcn_hidden": str(params.gcn.hidden_dim),
        "meta.lstm_hidden": str(params.lstm.hidden_dim),
        "meta.conv_width": str(params.conv.width),
        "meta.conv_shared": str(int(params.conv.shared)),
        "meta.attention_shared": str(int(params.attention.shared)),
    }


def params_from_arrays(fields: dict[str, str],
                       arrays: dict[str, np.ndarray]) -> ModelParams:
    meta = ModelMeta(
        n=int(fields["meta.n"]),
        tau=int(fields["meta.tau"]),
        k=int(fields["meta.k"]),
        delta=int(fields["meta.delta"]),
        variant=fields["meta.variant"],
    )
    meta.validate()
    params = init_params(
        meta.n, meta.tau, meta.k, meta.delta, meta.variant, seed=0,
        gcn_hidden=int(fields["meta.gcn_hidden"]),
        lstm_hidden=int(fields["meta.lstm_hidden"]),
        conv_width=int(fields["meta.conv_width"]),
        conv_shared=bool(int(fields["meta.conv_shared"])),
        attention_shared=bool(int(fields["meta.attention_shared"])),
    )
    for name, tensor in params.named_parameters():
        if name not in arrays:
            raise ContractError(f"checkpoint is missing array {name!r}")
        if arrays[name].shape != tensor.value.shape:
            raise ContractError(
                f"array {name!r} has shape {arrays[name].shape}, "
                f"expected {tensor.value.shape}")
        tensor.value = arrays[name].copy()
    return params
