"""Figure rendering for the CLI report paths.

Each figure lands next to its CSV artifact; rendering uses the Agg backend
so no display is needed.  Figures are a convenience view of the delimited
output, never a replacement for it.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_DPI = 120


def render_history(history, path) -> None:
    """Training and validation loss curves with the learning-rate schedule."""
    epochs = np.arange(history.epochs)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, history.train_loss, label="train loss")
    ax.plot(epochs, history.val_loss, label="validation loss")
    if history.best_epoch >= 0:
        ax.axvline(history.best_epoch, color="gray", ls="--", lw=0.8,
                   label=f"best epoch ({history.best_epoch})")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE (standardized)")
    ax.set_yscale("log")
    ax2 = ax.twinx()
    ax2.plot(epochs, history.lr, color="tab:green", alpha=0.4, label="lr")
    ax2.set_ylabel("learning rate")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_forecast_traces(origins, truths, preds, sensor_ids, path,
                           max_sensors: int = 4) -> None:
    """Forecast-vs-truth traces for the first few sensors of a split."""
    truths = np.asarray(truths)
    preds = np.asarray(preds)
    n_show = min(max_sensors, truths.shape[1])
    fig, axes = plt.subplots(n_show, 1, figsize=(8, 2.2 * n_show),
                             sharex=True, squeeze=False)
    for i in range(n_show):
        ax = axes[i, 0]
        ax.plot(origins, truths[:, i], label="truth", lw=1.0)
        ax.plot(origins, preds[:, i], label="forecast", lw=1.0, alpha=0.8)
        ax.set_ylabel(sensor_ids[i])
        if i == 0:
            ax.legend(loc="upper right", fontsize=8)
    axes[-1, 0].set_xlabel("origin time index")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_metric_bars(rows_by_model, path) -> None:
    """Grouped bars: one group per metric, one bar per model."""
    models = list(rows_by_model)
    metrics = [name for name, _ in rows_by_model[models[0]]]
    width = 0.8 / len(models)
    x = np.arange(len(metrics))
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, model in enumerate(models):
        vals = [v for _, v in rows_by_model[model]]
        ax.bar(x + i * width, vals, width, label=model)
    ax.set_xticks(x + width * (len(models) - 1) / 2)
    ax.set_xticklabels(metrics)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_graph_heatmap(weights, sensor_ids, t_index, path) -> None:
    weights = np.asarray(weights)
    fig, ax = plt.subplots(figsize=(5.5, 4.8))
    im = ax.imshow(weights, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(sensor_ids)))
    ax.set_yticks(range(len(sensor_ids)))
    ax.set_xticklabels(sensor_ids, rotation=90, fontsize=7)
    ax.set_yticklabels(sensor_ids, fontsize=7)
    ax.set_title(f"window graph at t={t_index}")
    fig.colorbar(im, ax=ax, label="cosine weight")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_imf_channels(series, imf_set, sensor_id, path) -> None:
    """Stacked view of one sensor's decomposition: input, modes, residual."""
    k = imf_set.k
    rows = k + 2
    fig, axes = plt.subplots(rows, 1, figsize=(8, 1.6 * rows),
                             sharex=True, squeeze=False)
    axes[0, 0].plot(series, lw=0.8, color="black")
    axes[0, 0].set_ylabel("input")
    for i in range(k):
        axes[i + 1, 0].plot(imf_set.imfs[i], lw=0.8)
        axes[i + 1, 0].set_ylabel(f"imf{i + 1}")
    axes[-1, 0].plot(imf_set.residual, lw=0.8, color="tab:red")
    axes[-1, 0].set_ylabel("residual")
    axes[-1, 0].set_xlabel("t")
    axes[0, 0].set_title(f"decomposition of {sensor_id}")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
