"""Key = value configuration documents with dotted sections.

Every tunable of the pipeline lives in one flat registry; unknown keys are
rejected and every value is range-checked at parse time.  The resolved
configuration can be echoed back out as the same text format.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SyntheticSpec, default_synthetic_spec
from .errors import ConfigError
from .signal import EEMDConfig
from .train import TrainConfig


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment; blank lines are
    ignored."""
    out: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', "
                              f"got {raw_line.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_kv_file(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv_text(fh.read(), source=str(path))


def _to_bool(key: str, value: str) -> bool:
    low = value.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _to_int(key: str, value: str, lo=None, hi=None) -> int:
    try:
        out = int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if lo is not None and out < lo:
        raise ConfigError(f"{key}: must be >= {lo}, got {out}")
    if hi is not None and out > hi:
        raise ConfigError(f"{key}: must be <= {hi}, got {out}")
    return out


def _to_float(key: str, value: str, lo=None, hi=None) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if not np.isfinite(out):
        raise ConfigError(f"{key}: must be finite, got {value!r}")
    if lo is not None and out < lo:
        raise ConfigError(f"{key}: must be >= {lo}, got {out}")
    if hi is not None and out > hi:
        raise ConfigError(f"{key}: must be <= {hi}, got {out}")
    return out


@dataclass
class RunConfig:
    """The full set of pipeline tunables for a training run."""

    tau: int = 6
    delta: int = 1
    seed: int = 0
    variant: str = "full"
    data_path: str = ""
    time_unit: str = "step"
    k_target: int = 0            # 0 = median of training decomposition
    imf_context: int = 0         # 0 = full history up to the window end
    threads: int = 1
    eval_k: int = 5
    eemd: EEMDConfig = field(default_factory=EEMDConfig)
    gcn_hidden: int = 8
    lstm_hidden: int = 64
    conv_width: int = 3
    conv_shared: bool = False
    attention_shared: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_text(self) -> str:
        e, t = self.eemd, self.train
        pairs = [
            ("tau", self.tau), ("delta", self.delta), ("seed", self.seed),
            ("variant", self.variant), ("data.path", self.data_path),
            ("data.time_unit", self.time_unit),
            ("eval.k", self.eval_k),
            ("imf.k_target", self.k_target), ("imf.context", self.imf_context),
            ("threads", self.threads),
            ("eemd.ensemble_size", e.ensemble_size),
            ("eemd.noise_std_ratio", e.noise_std_ratio),
            ("eemd.max_sift_iterations", e.max_sift_iterations),
            ("eemd.sift_threshold", e.sift_threshold),
            ("eemd.max_imfs", e.max_imfs),
            ("gcn.hidden", self.gcn_hidden),
            ("lstm.hidden", self.lstm_hidden),
            ("conv.width", self.conv_width),
            ("conv.shared", str(self.conv_shared).lower()),
            ("attention.shared", str(self.attention_shared).lower()),
            ("train.batch_size", t.batch_size), ("train.lr0", t.lr0),
            ("train.lr_decay", t.lr_decay),
            ("train.decay_every", t.decay_every),
            ("train.max_epochs", t.max_epochs), ("train.patience", t.patience),
            ("train.optimizer", t.optimizer),
            ("train.beta1", t.beta1), ("train.beta2", t.beta2),
            ("train.eps", t.eps), ("train.grad_clip", t.grad_clip),
            ("train.shuffle", str(t.shuffle).lower()),
        ]
        return "".join(f"{k} = {v}\n" for k, v in pairs)


_RUN_KEYS = {
    "tau", "delta", "seed", "variant", "data.path", "data.time_unit",
    "eval.k", "imf.k_target", "imf.context", "threads",
    "eemd.ensemble_size", "eemd.noise_std_ratio", "eemd.max_sift_iterations",
    "eemd.sift_threshold", "eemd.max_imfs",
    "gcn.hidden", "lstm.hidden", "conv.width", "conv.shared",
    "attention.shared",
    "train.batch_size", "train.lr0", "train.lr_decay", "train.decay_every",
    "train.max_epochs", "train.patience", "train.optimizer", "train.beta1",
    "train.beta2", "train.eps", "train.grad_clip", "train.shuffle",
}


def resolve_run_config(kv: dict[str, str]) -> RunConfig:
    unknown = sorted(set(kv) - _RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = RunConfig()
    g = kv.get

    cfg.tau = _to_int("tau", g("tau", "6"), lo=2)
    cfg.delta = _to_int("delta", g("delta", "1"), lo=1)
    cfg.seed = _to_int("seed", g("seed", "0"))
    cfg.variant = g("variant", "full")
    if cfg.variant not in ("full", "no-imf"):
        raise ConfigError(f"variant: expected full|no-imf, got {cfg.variant!r}")
    cfg.data_path = g("data.path", "")
    cfg.time_unit = g("data.time_unit", "step")
    cfg.eval_k = _to_int("eval.k", g("eval.k", "5"), lo=1)
    cfg.k_target = _to_int("imf.k_target", g("imf.k_target", "0"), lo=0)
    cfg.imf_context = _to_int("imf.context", g("imf.context", "0"), lo=0)
    cfg.threads = _to_int("threads", g("threads", "1"), lo=1)

    cfg.eemd = EEMDConfig(
        ensemble_size=_to_int("eemd.ensemble_size",
                              g("eemd.ensemble_size", "50"), lo=1),
        noise_std_ratio=_to_float("eemd.noise_std_ratio",
                                  g("eemd.noise_std_ratio", "0.2"), lo=0.0),
        max_sift_iterations=_to_int("eemd.max_sift_iterations",
                                    g("eemd.max_sift_iterations", "50"), lo=1),
        sift_threshold=_to_float("eemd.sift_threshold",
                                 g("eemd.sift_threshold", "0.2"), lo=1e-12),
        max_imfs=_to_int("eemd.max_imfs", g("eemd.max_imfs", "8"), lo=1),
        seed=cfg.seed,
    )

    cfg.gcn_hidden = _to_int("gcn.hidden", g("gcn.hidden", "8"), lo=1)
    cfg.lstm_hidden = _to_int("lstm.hidden", g("lstm.hidden", "64"), lo=1)
    cfg.conv_width = _to_int("conv.width", g("conv.width", "3"), lo=1)
    if cfg.conv_width > cfg.tau:
        raise ConfigError(f"conv.width: must be <= tau={cfg.tau}")
    cfg.conv_shared = _to_bool("conv.shared", g("conv.shared", "false"))
    cfg.attention_shared = _to_bool("attention.shared",
                                    g("attention.shared", "false"))

    cfg.train = TrainConfig(
        batch_size=_to_int("train.batch_size", g("train.batch_size", "32"), lo=1),
        lr0=_to_float("train.lr0", g("train.lr0", "0.001"), lo=1e-12),
        lr_decay=_to_float("train.lr_decay", g("train.lr_decay", "0.7"),
                           lo=1e-6, hi=1.0),
        decay_every=_to_int("train.decay_every", g("train.decay_every", "5"), lo=1),
        max_epochs=_to_int("train.max_epochs", g("train.max_epochs", "200"), lo=1),
        patience=_to_int("train.patience", g("train.patience", "10"), lo=1),
        optimizer=g("train.optimizer", "adam"),
        beta1=_to_float("train.beta1", g("train.beta1", "0.9"), lo=0.0, hi=1.0),
        beta2=_to_float("train.beta2", g("train.beta2", "0.999"), lo=0.0, hi=1.0),
        eps=_to_float("train.eps", g("train.eps", "1e-8"), lo=0.0),
        grad_clip=_to_float("train.grad_clip", g("train.grad_clip", "5.0"), lo=0.0),
        shuffle=_to_bool("train.shuffle", g("train.shuffle", "true")),
        seed=cfg.seed,
        delta=cfg.delta,
    )
    if cfg.train.optimizer not in ("adam", "sgd"):
        raise ConfigError(
            f"train.optimizer: expected adam|sgd, got {cfg.train.optimizer!r}")
    if cfg.train.patience > cfg.train.max_epochs:
        raise ConfigError("train.patience: cannot exceed train.max_epochs")
    return cfg


def load_run_config(path) -> RunConfig:
    return resolve_run_config(parse_kv_file(path))


# ---------------------------------------------------------------------------
# synthetic-spec documents

_SYNTH_KEYS = {
    "n", "t", "seed", "ar", "noise_std", "graph", "self_weight",
    "seasonal.amplitude", "seasonal.periods",
    "scale.min", "scale.max", "offset.min", "offset.max",
}


def resolve_synth_spec(kv: dict[str, str]) -> SyntheticSpec:
    unknown = sorted(set(kv) - _SYNTH_KEYS)
    if unknown:
        raise ConfigError(f"unknown synth keys: {', '.join(unknown)}")
    g = kv.get
    n = _to_int("n", g("n", "8"), lo=2)
    t_len = _to_int("t", g("t", "2000"), lo=4)
    seed = _to_int("seed", g("seed", "7"))
    ar = _to_float("ar", g("ar", "0.9"), lo=0.0, hi=1.0)
    noise_std = _to_float("noise_std", g("noise_std", "0.05"), lo=0.0)
    graph = g("graph", "ring")
    self_weight = _to_float("self_weight", g("self_weight", "0.5"),
                            lo=0.0, hi=1.0)
    amplitude = _to_float("seasonal.amplitude", g("seasonal.amplitude", "1.0"),
                          lo=0.0)
    periods_txt = g("seasonal.periods", "24,48")
    try:
        periods = tuple(float(p) for p in periods_txt.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"seasonal.periods: expected comma-separated "
                          f"numbers, got {periods_txt!r}")
    if not periods or min(periods) <= 0:
        raise ConfigError("seasonal.periods: need positive periods")
    scale_min = _to_float("scale.min", g("scale.min", "0.5"))
    scale_max = _to_float("scale.max", g("scale.max", "2.0"))
    offset_min = _to_float("offset.min", g("offset.min", "-1.0"))
    offset_max = _to_float("offset.max", g("offset.max", "4.0"))
    if scale_min > scale_max or offset_min > offset_max:
        raise ConfigError("scale/offset ranges must have min <= max")
    if graph not in ("ring", "chain", "identity"):
        raise ConfigError(f"graph: expected ring|chain|identity, got {graph!r}")

    return default_synthetic_spec(
        n=n, t_len=t_len, seed=seed, graph=graph, self_weight=self_weight,
        ar=ar, noise_std=noise_std, base_amplitude=amplitude,
        periods=periods, scale_range=(scale_min, scale_max),
        offset_range=(offset_min, offset_max))


def load_synth_spec(path) -> SyntheticSpec:
    return resolve_synth_spec(parse_kv_file(path))
