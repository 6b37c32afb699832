"""Optimization loop: mini-batch Adam on mean squared error with stepwise
learning-rate decay, early stopping on validation loss, and a bit-exact
checkpoint container.

Checkpoint layout: an ASCII header (magic + format version, ``field`` lines,
an ``array`` manifest of name/rows/cols/byte-offset) terminated by ``end``,
followed by the arrays as little-endian float64 in manifest order.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import model as model_mod
from . import numcore as nc
from .errors import (
    CheckpointManifestError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ContractError,
    DivergenceError,
)
from .model import ModelParams
from .numcore import Tensor

CHECKPOINT_MAGIC = "agstn-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr0: float = 1e-3
    lr_decay: float = 0.7
    decay_every: int = 5
    max_epochs: int = 200
    patience: int = 10
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    delta: int = 1
    shuffle: bool = True
    grad_clip: float = 5.0   # global norm; 0 disables

    def validate(self) -> None:
        if min(self.batch_size, self.max_epochs, self.patience,
               self.decay_every, self.delta) <= 0:
            raise ContractError("batch_size, epochs, patience, decay_every "
                                "and delta must be positive")
        if self.lr0 <= 0 or not (0 < self.lr_decay <= 1):
            raise ContractError("lr0 must be > 0 and lr_decay in (0, 1]")
        if self.patience > self.max_epochs:
            raise ContractError("patience cannot exceed max_epochs")
        if self.optimizer not in ("adam", "sgd"):
            raise ContractError(f"unknown optimizer {self.optimizer!r}")
        if self.grad_clip < 0:
            raise ContractError("grad_clip must be >= 0")

    def learning_rate(self, epoch: int) -> float:
        return self.lr0 * self.lr_decay ** (epoch // self.decay_every)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("epoch,train_loss,val_loss,lr\n")
            for e in range(self.epochs):
                fh.write(f"{e},{self.train_loss[e]!r},"
                         f"{self.val_loss[e]!r},{self.lr[e]!r}\n")


def mse_loss(pred, target):
    """Mean squared error; differentiable when ``pred`` is a Tensor, a plain
    float otherwise."""
    if isinstance(pred, Tensor):
        tgt = target if isinstance(target, Tensor) else nc.constant(
            np.asarray(target, dtype=float).reshape(-1, 1))
        if pred.shape != tgt.shape:
            raise ContractError(f"pred {pred.shape} vs target {tgt.shape}")
        d = nc.sub(pred, tgt)
        return nc.mean_all(nc.multiply(d, d))
    p = np.asarray(pred, dtype=float).reshape(-1)
    t = np.asarray(target, dtype=float).reshape(-1)
    if p.shape != t.shape:
        raise ContractError(f"pred {p.shape} vs target {t.shape}")
    return float(np.mean((p - t) ** 2))


def sample_loss_graph(sample, params: ModelParams):
    g = model_mod.forward_graph(sample, params)
    return mse_loss(g.prediction, sample.target)


class _Optimizer:
    def __init__(self, cfg: TrainConfig, named_params):
        self.cfg = cfg
        self.named = named_params
        self.step_count = 0
        if cfg.optimizer == "adam":
            self.m = {n: np.zeros_like(t.value) for n, t in named_params}
            self.v = {n: np.zeros_like(t.value) for n, t in named_params}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        cfg = self.cfg
        if cfg.grad_clip > 0:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if total > cfg.grad_clip:
                factor = cfg.grad_clip / total
                grads = {n: g * factor for n, g in grads.items()}
        self.step_count += 1
        if cfg.optimizer == "sgd":
            for name, tensor in self.named:
                tensor.value -= lr * grads[name]
            return
        t = self.step_count
        bc1 = 1.0 - cfg.beta1 ** t
        bc2 = 1.0 - cfg.beta2 ** t
        for name, tensor in self.named:
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            tensor.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def adam_step(params: ModelParams, grads: dict[str, np.ndarray],
              lr: float, state: _Optimizer | None = None,
              cfg: TrainConfig | None = None) -> _Optimizer:
    """One optimizer step outside the full loop (used by tests)."""
    if state is None:
        state = _Optimizer(cfg or TrainConfig(), params.named_parameters())
    state.step(grads, lr)
    return state


def _validation_loss(samples, indices, params) -> float:
    losses = [
        float(sample_loss_graph(samples[i], params).value[0, 0])
        for i in indices
    ]
    return float(np.mean(losses))


def train(dataset, cfg: TrainConfig, params: ModelParams | None = None):
    """Run the full protocol and return ``(best_params, history)``.

    Per-sample graphs and features must already live on the dataset (the
    data module precomputes them once).  The best-validation parameters are
    restored into the returned object.  Deterministic given config + seed.
    """
    cfg.validate()
    samples = dataset.samples
    train_idx = list(dataset.train_indices)
    val_idx = list(dataset.val_indices)
    if not train_idx or not val_idx:
        raise ContractError("dataset needs nonempty train and validation splits")
    if dataset.delta != cfg.delta:
        raise ContractError(
            f"dataset horizon {dataset.delta} != config horizon {cfg.delta}")

    if params is None:
        params = model_mod.init_params(
            dataset.n, dataset.tau, dataset.k_channels, cfg.delta, seed=cfg.seed)
    named = params.named_parameters()
    opt = _Optimizer(cfg, named)
    rng = np.random.default_rng(cfg.seed)
    history = TrainHistory()

    best_val = np.inf
    best_state: dict[str, np.ndarray] = {}
    epochs_since_best = 0

    for epoch in range(cfg.max_epochs):
        lr = cfg.learning_rate(epoch)
        order = (rng.permutation(len(train_idx)) if cfg.shuffle
                 else np.arange(len(train_idx)))
        epoch_losses = []
        for b0 in range(0, len(order), cfg.batch_size):
            batch = order[b0:b0 + cfg.batch_size]
            acc = {name: np.zeros_like(t.value) for name, t in named}
            for pos in batch:
                loss = sample_loss_graph(samples[train_idx[pos]], params)
                value = float(loss.value[0, 0])
                if not np.isfinite(value):
                    raise DivergenceError(
                        f"non-finite loss at epoch {epoch}, "
                        f"batch {b0 // cfg.batch_size}")
                epoch_losses.append(value)
                nc.backward(loss)
                for name, t in named:
                    acc[name] += t.grad
            inv = 1.0 / len(batch)
            grads = {name: g * inv for name, g in acc.items()}
            opt.step(grads, lr)

        val = _validation_loss(samples, val_idx, params)
        if not np.isfinite(val):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        history.train_loss.append(float(np.mean(epoch_losses)))
        history.val_loss.append(val)
        history.lr.append(lr)

        if val < best_val:
            best_val = val
            history.best_epoch = epoch
            best_state = {name: t.value.copy() for name, t in named}
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                history.stopped_early = True
                break

    for name, t in named:
        t.value = best_state[name].copy()
    return params, history


# ---------------------------------------------------------------------------
# checkpoint container


class Checkpoint(NamedTuple):
    params: ModelParams
    history: TrainHistory
    fields: dict[str, str]
    arrays: dict[str, np.ndarray]


def _history_to_parts(history: TrainHistory):
    fields = {
        "history.best_epoch": str(history.best_epoch),
        "history.stopped_early": str(int(history.stopped_early)),
    }
    curve = np.column_stack([
        np.asarray(history.train_loss, dtype=float).reshape(-1),
        np.asarray(history.val_loss, dtype=float).reshape(-1),
        np.asarray(history.lr, dtype=float).reshape(-1),
    ]) if history.epochs else np.zeros((0, 3))
    return fields, curve


def _history_from_parts(fields, curve: np.ndarray) -> TrainHistory:
    return TrainHistory(
        train_loss=list(curve[:, 0]) if curve.size else [],
        val_loss=list(curve[:, 1]) if curve.size else [],
        lr=list(curve[:, 2]) if curve.size else [],
        best_epoch=int(fields.get("history.best_epoch", -1)),
        stopped_early=bool(int(fields.get("history.stopped_early", 0))),
    )


def save_checkpoint(params: ModelParams, history: TrainHistory, path,
                    extra_fields: dict[str, str] | None = None,
                    extra_arrays: dict[str, np.ndarray] | None = None) -> None:
    fields = dict(model_mod.params_meta_fields(params))
    hist_fields, curve = _history_to_parts(history)
    fields.update(hist_fields)
    if extra_fields:
        for k, v in extra_fields.items():
            fields[k] = str(v)

    arrays: list[tuple[str, np.ndarray]] = [
        (name, t.value) for name, t in params.named_parameters()
    ]
    if curve.size:
        arrays.append(("history.curve", curve))
    if extra_arrays:
        arrays.extend((k, np.atleast_2d(np.asarray(v, dtype=float)))
                      for k, v in extra_arrays.items())

    header = io.StringIO()
    header.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
    for key in fields:
        header.write(f"field {key} = {fields[key]}\n")
    offset = 0
    blobs = []
    for name, arr in arrays:
        arr2 = np.atleast_2d(np.asarray(arr, dtype=float))
        header.write(f"array {name} {arr2.shape[0]} {arr2.shape[1]} {offset}\n")
        blob = arr2.astype("<f8").tobytes(order="C")
        blobs.append(blob)
        offset += len(blob)
    header.write("end\n")

    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header.getvalue().encode("ascii"))
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()

    lines = []
    pos = 0
    header_done = False
    while pos < len(raw):
        nl = raw.find(b"\n", pos)
        if nl < 0:
            break
        try:
            line = raw[pos:nl].decode("ascii")
        except UnicodeDecodeError as exc:
            raise CheckpointManifestError(f"undecodable header line: {exc}")
        pos = nl + 1
        if line == "end":
            header_done = True
            break
        lines.append(line)
    if not header_done:
        raise CheckpointTruncatedError("header has no 'end' terminator")
    if not lines:
        raise CheckpointVersionError("empty header")

    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise CheckpointVersionError(f"not a checkpoint file: {lines[0]!r}")
    if magic[1] != str(CHECKPOINT_VERSION):
        raise CheckpointVersionError(
            f"format version {magic[1]} unsupported (expected {CHECKPOINT_VERSION})")

    fields: dict[str, str] = {}
    manifest: list[tuple[str, int, int, int]] = []
    for line in lines[1:]:
        if line.startswith("field "):
            key, _, value = line[len("field "):].partition(" = ")
            fields[key] = value
        elif line.startswith("array "):
            parts = line.split()
            if len(parts) != 5:
                raise CheckpointManifestError(f"bad manifest line: {line!r}")
            try:
                manifest.append(
                    (parts[1], int(parts[2]), int(parts[3]), int(parts[4])))
            except ValueError:
                raise CheckpointManifestError(f"bad manifest line: {line!r}")
        else:
            raise CheckpointManifestError(f"unknown header line: {line!r}")

    binary = raw[pos:]
    expected = 0
    arrays: dict[str, np.ndarray] = {}
    for name, rows, cols, offset in manifest:
        if rows <= 0 or cols <= 0 or offset != expected or name in arrays:
            raise CheckpointManifestError(
                f"manifest inconsistency at array {name!r}")
        nbytes = rows * cols * 8
        if offset + nbytes > len(binary):
            raise CheckpointTruncatedError(
                f"file ends inside array {name!r}")
        arrays[name] = np.frombuffer(
            binary, dtype="<f8", count=rows * cols, offset=offset
        ).reshape(rows, cols).copy()
        expected = offset + nbytes
    if expected != len(binary):
        raise CheckpointManifestError(
            f"{len(binary) - expected} trailing bytes after last array")

    params = model_mod.params_from_arrays(fields, arrays)
    curve = arrays.get("history.curve", np.zeros((0, 3)))
    history = _history_from_parts(fields, curve)
    return Checkpoint(params, history, fields, arrays)
