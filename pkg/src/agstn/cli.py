"""Command-line surface: synth, decompose, train, predict, evaluate,
inspect-graph.

Artifacts are plain CSV plus rendered PNG figures alongside (disable with
--no-figures).  Exit codes: 0 success, 1 internal error or training
divergence, 2 user-input error.  Expected failures print one
machine-parseable line ``<error-class>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import data as data_mod
from . import evaluation as eval_mod
from . import graphs as graphs_mod
from . import model as model_mod
from . import report as report_mod
from . import signal as signal_mod
from . import train as train_mod
from .errors import AgstnError, IngestionError
from .signal import EEMDConfig


def _default_threads() -> int:
    env = os.environ.get("AGSTN_THREADS", "").strip()
    if env.isdigit() and int(env) >= 1:
        return int(env)
    return 1


def _write_csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# checkpoint pipeline state


def _pipeline_fields(cfg: config_mod.RunConfig, dataset) -> dict[str, str]:
    e = cfg.eemd
    return {
        "pipeline.sensors": ",".join(dataset.sensor_ids),
        "pipeline.time_unit": cfg.time_unit,
        "pipeline.k_target": str(dataset.k_target),
        "pipeline.imf_context": str(cfg.imf_context),
        "pipeline.eval_k": str(cfg.eval_k),
        "pipeline.eemd.ensemble_size": str(e.ensemble_size),
        "pipeline.eemd.noise_std_ratio": _fmt(e.noise_std_ratio),
        "pipeline.eemd.max_sift_iterations": str(e.max_sift_iterations),
        "pipeline.eemd.sift_threshold": _fmt(e.sift_threshold),
        "pipeline.eemd.max_imfs": str(e.max_imfs),
        "pipeline.eemd.seed": str(e.seed),
    }


class _Pipeline:
    """Feature-generation state recovered from a checkpoint."""

    def __init__(self, ckpt: train_mod.Checkpoint):
        f = ckpt.fields
        self.params = ckpt.params
        self.history = ckpt.history
        self.sensors = f["pipeline.sensors"].split(",")
        self.time_unit = f.get("pipeline.time_unit", "step")
        self.k_target = int(f["pipeline.k_target"])
        context = int(f.get("pipeline.imf_context", "0"))
        self.imf_context = context if context > 0 else None
        self.eval_k = int(f.get("pipeline.eval_k", "5"))
        self.eemd = EEMDConfig(
            ensemble_size=int(f["pipeline.eemd.ensemble_size"]),
            noise_std_ratio=float(f["pipeline.eemd.noise_std_ratio"]),
            max_sift_iterations=int(f["pipeline.eemd.max_sift_iterations"]),
            sift_threshold=float(f["pipeline.eemd.sift_threshold"]),
            max_imfs=int(f["pipeline.eemd.max_imfs"]),
            seed=int(f["pipeline.eemd.seed"]),
        )
        self.mean = ckpt.arrays["pipeline.mean"].reshape(-1)
        self.std = ckpt.arrays["pipeline.std"].reshape(-1)

    def check_panel(self, panel: data_mod.Panel) -> None:
        if panel.sensor_ids != self.sensors:
            raise IngestionError(
                "panel sensors do not match the checkpoint "
                f"({panel.sensor_ids} vs {self.sensors})")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    spec = config_mod.load_synth_spec(args.spec)
    panel = data_mod.gen_synthetic(spec)
    data_mod.save_csv(panel, args.out)
    print(f"wrote {panel.t_len}x{panel.n} panel to {args.out}")
    return 0


def cmd_decompose(args) -> int:
    panel = data_mod.load_csv(args.data)
    if args.config:
        cfg = config_mod.load_run_config(args.config)
        eemd_cfg = cfg.eemd
    else:
        eemd_cfg = EEMDConfig(seed=args.seed)
    sets = signal_mod.decompose_panel(panel.values, eemd_cfg)

    t_len = panel.t_len
    header = "sensor_id,channel," + ",".join(f"t{j}" for j in range(t_len))
    rows = []
    for sid, s in zip(panel.sensor_ids, sets):
        for ch in range(s.k):
            rows.append([sid, f"imf{ch + 1}"] + [_fmt(v) for v in s.imfs[ch]])
        rows.append([sid, "residual"] + [_fmt(v) for v in s.residual])
    _write_csv(args.out, header, rows)
    print(f"wrote {len(rows)} channel rows to {args.out}")

    if not args.no_figures:
        fig_path = str(Path(args.out).with_suffix(".png"))
        report_mod.render_imf_channels(
            panel.values[:, 0], sets[0], panel.sensor_ids[0], fig_path)
        print(f"wrote {fig_path}")
    return 0


def _build_dataset(cfg: config_mod.RunConfig, panel: data_mod.Panel,
                   scaler=None, k_target=None):
    return data_mod.make_windows(
        panel, cfg.tau, cfg.delta,
        eemd_config=cfg.eemd,
        k_target=k_target if k_target is not None
        else (cfg.k_target or None),
        imf_context=cfg.imf_context or None,
        with_imf=True,
        scaler=scaler,
        threads=cfg.threads,
    )


def cmd_train(args) -> int:
    cfg = config_mod.load_run_config(args.config)
    if args.threads:
        cfg.threads = args.threads
    if not cfg.data_path:
        raise IngestionError("config is missing data.path")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    panel = data_mod.load_csv(cfg.data_path, cfg.time_unit)
    dataset = _build_dataset(cfg, panel)

    params = model_mod.init_params(
        dataset.n, cfg.tau, dataset.k_channels, cfg.delta,
        variant=cfg.variant, seed=cfg.seed,
        gcn_hidden=cfg.gcn_hidden, lstm_hidden=cfg.lstm_hidden,
        conv_width=cfg.conv_width, conv_shared=cfg.conv_shared,
        attention_shared=cfg.attention_shared)
    best, history = train_mod.train(dataset, cfg.train, params)

    ckpt_path = out_dir / "checkpoint.agstn"
    train_mod.save_checkpoint(
        best, history, ckpt_path,
        extra_fields=_pipeline_fields(cfg, dataset),
        extra_arrays={"pipeline.mean": dataset.mean.reshape(1, -1),
                      "pipeline.std": dataset.std.reshape(1, -1)})
    history.to_csv(out_dir / "history.csv")
    with open(out_dir / "resolved.cfg", "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())
    if not args.no_figures:
        report_mod.render_history(history, out_dir / "history.png")

    print(f"trained {history.epochs} epochs "
          f"(best {history.best_epoch}, "
          f"val {history.val_loss[history.best_epoch]:.6f}); "
          f"checkpoint at {ckpt_path}")
    return 0


def cmd_predict(args) -> int:
    ckpt = train_mod.load_checkpoint(args.checkpoint)
    pipe = _Pipeline(ckpt)
    panel = data_mod.load_csv(args.data, pipe.time_unit)
    pipe.check_panel(panel)
    meta = pipe.params.meta

    sample = data_mod.build_sample(
        panel, args.at, meta.tau, meta.delta, pipe.k_target,
        pipe.mean, pipe.std, eemd_config=pipe.eemd,
        imf_context=pipe.imf_context,
        with_imf=meta.variant == "full")
    out, diag = model_mod.forward(sample, pipe.params)

    destd = lambda v: v * pipe.std + pipe.mean
    pred = destd(out)
    rows = [
        [sid, _fmt(pred[i]), _fmt(destd(diag.lstm_raw)[i]),
         _fmt(destd(diag.conv_raw)[i]), _fmt(destd(diag.ensemble)[i]),
         _fmt(diag.attention[i])]
        for i, sid in enumerate(panel.sensor_ids)
    ]
    _write_csv(args.out, "sensor_id,prediction,lstm_raw,conv_raw,"
                         "ensemble,attention", rows)
    print(f"wrote forecast for t={args.at}+{meta.delta} to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = train_mod.load_checkpoint(args.checkpoint)
    pipe = _Pipeline(ckpt)
    panel = data_mod.load_csv(args.data, pipe.time_unit)
    pipe.check_panel(panel)
    meta = pipe.params.meta

    dataset = data_mod.make_windows(
        panel, meta.tau, meta.delta,
        eemd_config=pipe.eemd, k_target=pipe.k_target,
        imf_context=pipe.imf_context, with_imf=meta.variant == "full",
        scaler=(pipe.mean, pipe.std), threads=args.threads or 1)

    k = args.k
    rep = eval_mod.evaluate(dataset, args.split, k, params=pipe.params)
    base = eval_mod.baselines(dataset, args.split, k)

    rows = []
    by_model = {}
    for name, r in [("agstn", rep), ("persistence", base["persistence"]),
                    ("ar1", base["ar1"])]:
        named_rows = r.rows(name)
        by_model[name] = [(m.split(".", 1)[1], v) for m, v in named_rows]
        rows.extend((m, _fmt(v)) for m, v in named_rows)
    _write_csv(args.out, "metric,value", rows)

    out_base = Path(args.out)
    txt_path = out_base.with_suffix(".txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(f"split = {args.split}\nk = {k}\ndelta = {meta.delta}\n"
                 f"n_samples = {rep.n_samples}\n")
        for m, v in rows:
            fh.write(f"{m} = {v}\n")

    if args.emit_ranking:
        origins = [dataset.samples[i].origin_t
                   for i in dataset.split_indices(args.split)]
        rank_rows = []
        for j, origin in enumerate(origins):
            pred_order = np.argsort(-rep.per_sample["pred"][j], kind="stable")
            true_order = np.argsort(-rep.per_sample["truth"][j], kind="stable")
            for r in range(k):
                rank_rows.append([
                    origin, r + 1,
                    dataset.sensor_ids[pred_order[r]],
                    dataset.sensor_ids[true_order[r]],
                ])
        _write_csv(args.emit_ranking,
                   "origin_t,rank,predicted_sensor,true_sensor", rank_rows)

    if not args.no_figures:
        origins = [dataset.samples[i].origin_t
                   for i in dataset.split_indices(args.split)]
        report_mod.render_forecast_traces(
            origins, rep.per_sample["truth"], rep.per_sample["pred"],
            dataset.sensor_ids,
            out_base.parent / (out_base.stem + "_traces.png"))
        report_mod.render_metric_bars(
            by_model, out_base.parent / (out_base.stem + "_metrics.png"))

    print(f"agstn mae={rep.mae:.6f} rmse={rep.rmse:.6f} "
          f"p@{k}={rep.p_at_k:.4f} ndcg={rep.ndcg:.4f} "
          f"({rep.n_samples} samples); report at {args.out}")
    return 0


def cmd_inspect_graph(args) -> int:
    panel = data_mod.load_csv(args.data)
    g = graphs_mod.build_window_graph(panel.values, args.at, args.tau)
    rows = []
    for u in range(g.n):
        for v in range(u, g.n):
            rows.append([panel.sensor_ids[u], panel.sensor_ids[v],
                         _fmt(g.weights[u, v])])
    _write_csv(args.out, "u,v,weight", rows)
    print(f"wrote {len(rows)} edges for t={args.at} to {args.out}")

    if not args.no_figures:
        fig_path = str(Path(args.out).with_suffix(".png"))
        report_mod.render_graph_heatmap(g.weights, panel.sensor_ids,
                                        args.at, fig_path)
        print(f"wrote {fig_path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agstn",
        description="Attention-adjusted graph spatio-temporal forecasting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic panel CSV")
    p.add_argument("--spec", required=True,
                   help="synthetic spec document (key = value)")
    p.add_argument("--out", required=True, help="output panel CSV path")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("decompose",
                       help="emit per-sensor IMF channels as CSV")
    p.add_argument("--data", required=True, help="input panel CSV")
    p.add_argument("--out", required=True, help="output channels CSV")
    p.add_argument("--config", default="",
                   help="run config supplying eemd.* settings (optional)")
    p.add_argument("--seed", type=int, default=0,
                   help="decomposition seed when no config is given")
    p.add_argument("--no-figures", action="store_true",
                   help="skip the decomposition PNG")
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True, help="run config document")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker threads for feature building "
                        "(also via AGSTN_THREADS)")
    p.add_argument("--no-figures", action="store_true",
                   help="skip the loss-curve PNG")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict",
                       help="forecast one origin with diagnostics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="input panel CSV")
    p.add_argument("--at", type=int, required=True,
                   help="origin time index (window end)")
    p.add_argument("--out", required=True, help="output forecast CSV")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate",
                       help="score a checkpoint on a chronological split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="input panel CSV")
    p.add_argument("--split", choices=("train", "val", "test"),
                   default="test")
    p.add_argument("--k", type=int, default=5, help="ranking cutoff")
    p.add_argument("--out", required=True, help="output report CSV")
    p.add_argument("--emit-ranking", default="",
                   help="also dump per-sample top-k lists to this CSV")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker threads for feature building "
                        "(also via AGSTN_THREADS)")
    p.add_argument("--no-figures", action="store_true",
                   help="skip trace/metric PNGs")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("inspect-graph",
                       help="dump one window graph as an edge list")
    p.add_argument("--data", required=True, help="input panel CSV")
    p.add_argument("--at", type=int, required=True, help="time index")
    p.add_argument("--tau", type=int, default=6,
                   help="lookback steps for the similarity window")
    p.add_argument("--out", required=True, help="output edge-list CSV")
    p.add_argument("--no-figures", action="store_true",
                   help="skip the heatmap PNG")
    p.set_defaults(fn=cmd_inspect_graph)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except AgstnError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io-error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal-error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
