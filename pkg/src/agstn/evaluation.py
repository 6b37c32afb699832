"""Error and ranking metrics, whole-split evaluation, and the two reference
baselines (persistence and per-sensor AR(1)).

Split-level aggregation: MAE is the mean of per-sample MAEs; RMSE is the
root of the pooled mean squared error; P@k and NDCG average per sample.
All metrics are computed on de-standardized predictions against the raw
targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod
from .errors import ContractError


def _check_pair(pred, truth):
    p = np.asarray(pred, dtype=float).reshape(-1)
    t = np.asarray(truth, dtype=float).reshape(-1)
    if p.size != t.size or p.size == 0:
        raise ContractError(f"length mismatch: {p.size} vs {t.size}")
    return p, t


def mae(pred, truth) -> float:
    p, t = _check_pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def rmse(pred, truth) -> float:
    p, t = _check_pair(pred, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def _descending_order(values: np.ndarray) -> np.ndarray:
    """Sort indices by value descending, ties broken by lower sensor index."""
    return np.argsort(-values, kind="stable")


def precision_at_k(pred, truth, k: int = 5) -> float:
    p, t = _check_pair(pred, truth)
    if p.size < k:
        raise ContractError(f"need at least k={k} sensors, got {p.size}")
    top_p = set(_descending_order(p)[:k].tolist())
    top_t = set(_descending_order(t)[:k].tolist())
    return len(top_p & top_t) / k


def ndcg(pred, truth, gain_shift: float | None = None) -> float:
    """Discounted cumulative gain of the prediction-descending order over
    the truth gains, normalized by the ideal ordering.

    Gains are the truth values shifted to be nonnegative; the shift is the
    (negated) split minimum when given, otherwise the instance minimum, and
    only applies when negatives exist.  Zero ideal gain is defined as 1.
    """
    p, t = _check_pair(pred, truth)
    if gain_shift is None:
        gain_shift = max(0.0, -float(t.min()))
    gains = t + gain_shift
    discounts = 1.0 / np.log2(np.arange(2, p.size + 2))
    dcg = float(np.sum(gains[_descending_order(p)] * discounts))
    idcg = float(np.sum(gains[_descending_order(t)] * discounts))
    if idcg == 0.0:
        return 1.0
    return dcg / idcg


@dataclass
class EvalReport:
    mae: float
    rmse: float
    p_at_k: float
    ndcg: float
    k: int
    delta: int
    n_samples: int
    per_sample: dict[str, np.ndarray] = field(default_factory=dict)

    def rows(self, prefix: str = "") -> list[tuple[str, float]]:
        tag = f"{prefix}." if prefix else ""
        return [(f"{tag}mae", self.mae), (f"{tag}rmse", self.rmse),
                (f"{tag}p_at_{self.k}", self.p_at_k), (f"{tag}ndcg", self.ndcg)]


def _aggregate(preds: np.ndarray, truths: np.ndarray, k: int,
               delta: int) -> EvalReport:
    n_samples = preds.shape[0]
    maes = np.array([mae(preds[i], truths[i]) for i in range(n_samples)])
    sqes = np.array([np.mean((preds[i] - truths[i]) ** 2)
                     for i in range(n_samples)])
    shift = max(0.0, -float(truths.min()))
    pks = np.array([precision_at_k(preds[i], truths[i], k)
                    for i in range(n_samples)])
    ndcgs = np.array([ndcg(preds[i], truths[i], gain_shift=shift)
                      for i in range(n_samples)])
    return EvalReport(
        mae=float(maes.mean()),
        rmse=float(np.sqrt(sqes.mean())),
        p_at_k=float(pks.mean()),
        ndcg=float(ndcgs.mean()),
        k=k, delta=delta, n_samples=n_samples,
        per_sample={"mae": maes, "mse": sqes, "p_at_k": pks, "ndcg": ndcgs,
                    "pred": preds, "truth": truths},
    )


def evaluate(dataset, split: str = "test", k: int = 5,
             params=None, predict=None) -> EvalReport:
    """Model metrics over one split on de-standardized values.

    Exactly one of ``params`` (a trained model) or ``predict`` (a callable
    ``sample -> raw prediction vector``, the oracle-injection hook) must be
    given.
    """
    if (params is None) == (predict is None):
        raise ContractError("pass exactly one of params or predict")
    indices = dataset.split_indices(split)
    if len(indices) == 0:
        raise ContractError(f"split {split!r} is empty")

    preds = []
    truths = []
    for i in indices:
        sample = dataset.samples[i]
        if predict is not None:
            raw_pred = np.asarray(predict(sample), dtype=float).reshape(-1)
        else:
            out, _ = model_mod.forward(sample, params)
            raw_pred = dataset.destandardize(out)
        preds.append(raw_pred)
        truths.append(dataset.destandardize(sample.target))
    return _aggregate(np.array(preds), np.array(truths), k, dataset.delta)


def fit_ar1(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-sensor lag-1 least squares on the raw training range."""
    values = dataset.panel.values
    train_end = dataset.samples[dataset.train_indices[-1]].origin_t + dataset.delta
    rows = values[:train_end + 1]
    x, y = rows[:-1], rows[1:]
    n = rows.shape[1]
    slope = np.empty(n)
    intercept = np.empty(n)
    for j in range(n):
        xm, ym = x[:, j].mean(), y[:, j].mean()
        var = np.mean((x[:, j] - xm) ** 2)
        slope[j] = 0.0 if var == 0 else np.mean(
            (x[:, j] - xm) * (y[:, j] - ym)) / var
        intercept[j] = ym - slope[j] * xm
    return slope, intercept


def baselines(dataset, split: str = "test", k: int = 5) -> dict[str, EvalReport]:
    """Persistence repeats the last observation; AR(1) iterates the fitted
    per-sensor lag-1 map ``delta`` times."""
    slope, intercept = fit_ar1(dataset)
    delta = dataset.delta

    def persistence(sample):
        return dataset.destandardize(sample.raw_window[-1])

    def ar1(sample):
        x = dataset.destandardize(sample.raw_window[-1])
        for _ in range(delta):
            x = slope * x + intercept
        return x

    return {
        "persistence": evaluate(dataset, split, k, predict=persistence),
        "ar1": evaluate(dataset, split, k, predict=ar1),
    }
