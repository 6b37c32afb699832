"""Panel ingestion, chronological windowing, and the planted-structure
synthetic generator.

A panel is a T x N matrix of sensor readings with strictly increasing,
equally spaced timestamps.  Windowing slices one sample per valid origin
``t``: the raw lookback rows ``[t - tau + 1, t]``, the aligned IMF channel
slice, the per-step similarity graphs, and the target row ``t + delta``.
Splits are chronological 70/10/20 over origins (floor rule, remainder to
test).  Inputs and targets are z-scored with per-sensor statistics fitted
on the training range only; IMF channels are scaled consistently so the
channel sum still reconstructs the standardized series.

Decomposition policy: training windows slice one decomposition of the full
training-range series; validation and test windows are decomposed from
data up to each window's end only, so no future values leak into features.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import graphs as graphs_mod
from . import signal as signal_mod
from .errors import BoundsError, ContractError, IngestionError
from .signal import EEMDConfig, IMFSet


@dataclass
class Panel:
    values: np.ndarray            # (T, N) float64, fully imputed
    timestamps: np.ndarray        # (T,) strictly increasing, equally spaced
    sensor_ids: list[str]
    time_unit: str = "step"
    imputed_cells: int = 0

    @property
    def t_len(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass
class WindowSample:
    raw_window: np.ndarray        # (tau, N) standardized
    imf_window: np.ndarray        # (tau, K, N) standardized scale
    target: np.ndarray            # (N,) standardized, at origin + delta
    graphs: list                  # tau WindowGraphs (raw cosine weights)
    adjacencies: list             # tau pre-normalized (N, N) arrays
    origin_t: int = 0


@dataclass
class WindowedDataset:
    samples: list[WindowSample]
    train_indices: range
    val_indices: range
    test_indices: range
    tau: int
    delta: int
    k_channels: int
    mean: np.ndarray              # (N,) train-range statistics
    std: np.ndarray               # (N,)
    sensor_ids: list[str] = field(default_factory=list)
    k_target: int = 0
    panel: Panel | None = None

    @property
    def n(self) -> int:
        return self.mean.size

    def split_indices(self, split: str) -> range:
        try:
            return {"train": self.train_indices, "val": self.val_indices,
                    "test": self.test_indices}[split]
        except KeyError:
            raise ContractError(f"unknown split {split!r}")

    def destandardize(self, vec: np.ndarray) -> np.ndarray:
        return np.asarray(vec) * self.std + self.mean

    def standardize(self, vec: np.ndarray) -> np.ndarray:
        return (np.asarray(vec) - self.mean) / self.std


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_cell(text: str) -> float:
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na", "null"):
        return math.nan
    return float(text)


def load_csv(path, time_unit: str = "step") -> Panel:
    """Parse a panel CSV: header ``timestamp,<sensor>,...``, one row per
    time step.  Gaps are imputed by forward fill; leading gaps get the
    sensor's mean over the first 70% of rows.  Validation failures name the
    offending 1-based row."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip() != ""]
    if len(lines) < 2:
        raise IngestionError(f"{path}: need a header and at least one row")

    header = [c.strip() for c in lines[0].split(",")]
    if len(header) < 2:
        raise IngestionError(f"{path}: header must have timestamp + sensors")
    sensor_ids = header[1:]
    if len(set(sensor_ids)) != len(sensor_ids):
        raise IngestionError(f"{path}: duplicate sensor ids in header")
    n = len(sensor_ids)

    timestamps = np.empty(len(lines) - 1)
    values = np.empty((len(lines) - 1, n))
    for r, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != n + 1:
            raise IngestionError(
                f"{path}: row {r} has {len(cells)} columns, expected {n + 1}")
        try:
            timestamps[r - 2] = float(cells[0])
        except ValueError:
            raise IngestionError(f"{path}: row {r} has unparseable timestamp "
                                 f"{cells[0]!r}")
        for j, cell in enumerate(cells[1:]):
            try:
                values[r - 2, j] = _parse_cell(cell)
            except ValueError:
                raise IngestionError(
                    f"{path}: row {r} column {sensor_ids[j]!r} has "
                    f"unparseable value {cell!r}")

    diffs = np.diff(timestamps)
    bad = np.nonzero(diffs <= 0)[0]
    if bad.size:
        raise IngestionError(
            f"{path}: row {int(bad[0]) + 3} has non-increasing timestamp")
    if diffs.size > 1:
        step = diffs[0]
        if np.abs(diffs - step).max() > 1e-6 * max(abs(step), 1.0):
            r = int(np.abs(diffs - step).argmax()) + 3
            raise IngestionError(f"{path}: row {r} breaks equal spacing")

    # impute: forward fill, then train-range mean for leading gaps
    imputed = int(np.isnan(values).sum())
    if imputed:
        for j in range(n):
            col = values[:, j]
            nan_mask = np.isnan(col)
            if not nan_mask.any():
                continue
            idx = np.where(~nan_mask, np.arange(col.size), -1)
            np.maximum.accumulate(idx, out=idx)
            filled = np.where(idx >= 0, col[np.maximum(idx, 0)], math.nan)
            lead = np.isnan(filled)
            if lead.any():
                head = col[: max(1, int(0.7 * col.size))]
                head = head[~np.isnan(head)]
                if head.size == 0:
                    raise IngestionError(
                        f"{path}: sensor {sensor_ids[j]!r} has no usable values")
                filled[lead] = head.mean()
            values[:, j] = filled

    return Panel(values, timestamps, sensor_ids, time_unit, imputed)


def save_csv(panel: Panel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("timestamp," + ",".join(panel.sensor_ids) + "\n")
        for t in range(panel.t_len):
            ts = panel.timestamps[t]
            ts_txt = repr(float(ts)) if ts != int(ts) else str(int(ts))
            fh.write(ts_txt + "," +
                     ",".join(repr(float(v)) for v in panel.values[t]) + "\n")


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass
class SyntheticSpec:
    n: int
    t_len: int
    diffusion: np.ndarray             # (N, N) row-stochastic hidden graph
    ar: float = 0.9
    seasonal_amplitudes: np.ndarray | None = None   # (N, M)
    seasonal_periods: np.ndarray | None = None      # (N, M)
    noise_std: float = 0.05
    scales: np.ndarray | None = None                # (N,)
    offsets: np.ndarray | None = None               # (N,)
    seed: int = 0

    def validate(self) -> None:
        if self.n < 1 or self.t_len < 1:
            raise ContractError("n and t_len must be positive")
        d = np.asarray(self.diffusion, dtype=float)
        if d.shape != (self.n, self.n):
            raise ContractError(f"diffusion must be {self.n}x{self.n}")
        if np.abs(d.sum(axis=1) - 1.0).max() > 1e-9:
            raise ContractError("diffusion rows must sum to 1")
        if self.noise_std < 0:
            raise ContractError("noise_std must be >= 0")


def ring_graph(n: int, self_weight: float = 0.5) -> np.ndarray:
    """Row-stochastic ring: each sensor keeps ``self_weight`` and splits the
    remainder between its two neighbors."""
    g = np.zeros((n, n))
    side = (1.0 - self_weight) / 2.0
    for i in range(n):
        g[i, i] = self_weight
        g[i, (i - 1) % n] += side
        g[i, (i + 1) % n] += side
    return g


def chain_graph(n: int, self_weight: float = 0.5) -> np.ndarray:
    g = np.zeros((n, n))
    for i in range(n):
        nbrs = [j for j in (i - 1, i + 1) if 0 <= j < n]
        g[i, i] = self_weight
        for j in nbrs:
            g[i, j] = (1.0 - self_weight) / len(nbrs)
    return g


def default_synthetic_spec(n: int = 8, t_len: int = 2000, seed: int = 7,
                           graph: str = "ring", self_weight: float = 0.5,
                           ar: float = 0.9, noise_std: float = 0.05,
                           base_amplitude: float = 1.0,
                           periods: tuple[float, ...] = (24.0, 48.0),
                           scale_range: tuple[float, float] = (0.5, 2.0),
                           offset_range: tuple[float, float] = (-1.0, 4.0),
                           ) -> SyntheticSpec:
    """Materialize a spec with per-sensor seasonal structure drawn from the
    seed: every sensor mixes the given periods with jittered amplitudes."""
    rng = np.random.default_rng(seed)
    m = len(periods)
    amps = base_amplitude * rng.uniform(0.5, 1.5, size=(n, m))
    pers = np.tile(np.asarray(periods, dtype=float), (n, 1))
    # one dominant component per sensor, cycling so neighbours differ
    for i in range(n):
        amps[i, i % m] *= 1.5
    if graph == "ring":
        g = ring_graph(n, self_weight)
    elif graph == "chain":
        g = chain_graph(n, self_weight)
    elif graph == "identity":
        g = np.eye(n)
    else:
        raise ContractError(f"unknown graph kind {graph!r}")
    return SyntheticSpec(
        n=n, t_len=t_len, diffusion=g, ar=ar,
        seasonal_amplitudes=amps, seasonal_periods=pers,
        noise_std=noise_std,
        scales=rng.uniform(*scale_range, size=n),
        offsets=rng.uniform(*offset_range, size=n),
        seed=seed,
    )


def gen_synthetic(spec: SyntheticSpec) -> Panel:
    """Simulate ``x[t+1] = ar * (G @ x[t]) + seasonal(t) + noise`` from
    ``x[0] = seasonal(0)``, then apply the per-sensor affine scaling.
    Deterministic given the seed."""
    spec.validate()
    n, t_len = spec.n, spec.t_len
    rng = np.random.default_rng(spec.seed)
    g = np.asarray(spec.diffusion, dtype=float)

    if spec.seasonal_amplitudes is None:
        seasonal = np.zeros((t_len, n))
    else:
        amps = np.asarray(spec.seasonal_amplitudes, dtype=float)
        pers = np.asarray(spec.seasonal_periods, dtype=float)
        steps = np.arange(t_len)[:, None, None]
        seasonal = (amps[None, :, :]
                    * np.sin(2.0 * np.pi * steps / pers[None, :, :])).sum(axis=2)

    values = np.empty((t_len, n))
    values[0] = seasonal[0]
    for t in range(t_len - 1):
        noise = spec.noise_std * rng.standard_normal(n)
        values[t + 1] = spec.ar * (g @ values[t]) + seasonal[t] + noise

    scales = np.ones(n) if spec.scales is None else np.asarray(spec.scales)
    offsets = np.zeros(n) if spec.offsets is None else np.asarray(spec.offsets)
    values = values * scales + offsets

    ids = [f"s{i}" for i in range(n)]
    return Panel(values, np.arange(t_len, dtype=float), ids)


# ---------------------------------------------------------------------------
# windowing


def _standardize_block(block: np.ndarray, mean: np.ndarray,
                       std: np.ndarray) -> np.ndarray:
    """Scale an IMF channel block (K+1, T, N) into standardized units: modes
    divide by the sensor std, the residual channel also absorbs the mean
    shift, so the channel sum equals the standardized series."""
    out = block / std[None, None, :]
    out[-1] -= (mean / std)[None, :]
    return out


def _per_window_imf(values: np.ndarray, end_t: int, tau: int, k_target: int,
                    eemd_config: EEMDConfig, context: int | None) -> np.ndarray:
    """Decompose each sensor from history ending at ``end_t`` (optionally
    truncated to the trailing ``context`` points) and slice the last ``tau``
    steps of the aligned block, returning (tau, k_target + 1, N)."""
    start = 0 if context is None else max(0, end_t + 1 - context)
    segment = values[start:end_t + 1]
    sets = []
    for i in range(values.shape[1]):
        cfg = replace(eemd_config,
                      seed=eemd_config.seed + 1_000_003 * i + 7919 * end_t)
        sets.append(signal_mod.eemd(segment[:, i], cfg))
    block = signal_mod.align_imf_count(sets, k_target)   # (k+1, seg_len, n)
    return block[:, -tau:, :].transpose(1, 0, 2)          # (tau, k+1, n)


def make_windows(panel: Panel, tau: int, delta: int,
                 eemd_config: EEMDConfig | None = None,
                 k_target: int | None = None,
                 imf_context: int | None = None,
                 with_imf: bool = True,
                 scaler: tuple[np.ndarray, np.ndarray] | None = None,
                 threads: int = 1) -> WindowedDataset:
    """Build one sample per valid origin with chronological 70/10/20 splits.

    ``k_target`` defaults to the lower median of per-sensor mode counts on
    the training-range decomposition.  ``scaler`` overrides the fitted
    standardization statistics (used when evaluating a stored model on a
    new panel).  ``with_imf=False`` skips decomposition and zero-fills the
    channels (requires an explicit ``k_target``).
    """
    if tau < 2:
        raise ContractError("tau must be >= 2")
    if delta < 1:
        raise ContractError("delta must be >= 1")
    t_len, n = panel.values.shape
    origins = list(range(tau - 1, t_len - delta))
    n_origins = len(origins)
    n_train = int(0.7 * n_origins)
    n_val = int(0.1 * n_origins)
    n_test = n_origins - n_train - n_val
    if n_train < 1 or n_val < 1 or n_test < 1:
        need = tau + delta + 9
        raise ContractError(
            f"panel too short: T={t_len} gives {n_origins} windows; "
            f"need T >= {need} for nonempty 70/10/20 splits")

    train_origins = origins[:n_train]
    train_end = train_origins[-1] + delta     # last row a train sample touches

    values = panel.values
    if scaler is None:
        train_rows = values[:train_end + 1]
        mean = train_rows.mean(axis=0)
        std = train_rows.std(axis=0)
        std = np.where(std > 0, std, 1.0)
    else:
        mean = np.asarray(scaler[0], dtype=float).reshape(-1)
        std = np.asarray(scaler[1], dtype=float).reshape(-1)
        if mean.size != n or std.size != n:
            raise ContractError("scaler statistics do not match sensor count")
    std_values = (values - mean) / std

    # one graph per step index, shared by every sample that touches it
    cfg_eemd = eemd_config or EEMDConfig()
    graph_cache: dict[int, graphs_mod.WindowGraph] = {}
    adj_cache: dict[int, np.ndarray] = {}
    for t_j in range(origins[0] - tau + 1, origins[-1] + 1):
        g = graphs_mod.build_window_graph(values, t_j, tau)
        graph_cache[t_j] = g
        adj_cache[t_j] = graphs_mod.normalize_adjacency(g)

    # IMF features
    if with_imf:
        train_sets = []
        for i in range(n):
            cfg_i = replace(cfg_eemd, seed=cfg_eemd.seed + 1_000_003 * i)
            train_sets.append(signal_mod.eemd(values[:train_end + 1, i], cfg_i))
        if k_target is None:
            counts = sorted(s.k for s in train_sets)
            k_target = max(1, counts[(len(counts) - 1) // 2])
        train_block = signal_mod.align_imf_count(train_sets, k_target)
        train_block = _standardize_block(train_block, mean, std)
    else:
        if k_target is None:
            k_target = 2
        train_block = None
    k_channels = k_target + 1

    samples: list[WindowSample] = []
    later_imf: dict[int, np.ndarray] = {}
    if with_imf:
        later_origins = origins[n_train:]

        def job(t):
            block = _per_window_imf(values, t, tau, k_target, cfg_eemd,
                                    imf_context)
            return t, _standardize_block(
                block.transpose(1, 0, 2), mean, std).transpose(1, 0, 2)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for t, block in pool.map(job, later_origins):
                    later_imf[t] = block
        else:
            for t in later_origins:
                later_imf[t] = job(t)[1]

    for pos, t in enumerate(origins):
        if with_imf:
            if pos < n_train:
                imf_win = np.ascontiguousarray(
                    train_block[:, t - tau + 1:t + 1, :].transpose(1, 0, 2))
            else:
                imf_win = later_imf[t]
        else:
            imf_win = np.zeros((tau, k_channels, n))
        samples.append(WindowSample(
            raw_window=std_values[t - tau + 1:t + 1].copy(),
            imf_window=imf_win,
            target=std_values[t + delta].copy(),
            graphs=[graph_cache[j] for j in range(t - tau + 1, t + 1)],
            adjacencies=[adj_cache[j] for j in range(t - tau + 1, t + 1)],
            origin_t=t,
        ))

    return WindowedDataset(
        samples=samples,
        train_indices=range(0, n_train),
        val_indices=range(n_train, n_train + n_val),
        test_indices=range(n_train + n_val, n_origins),
        tau=tau, delta=delta, k_channels=k_channels,
        mean=mean, std=std,
        sensor_ids=list(panel.sensor_ids),
        k_target=k_target,
        panel=panel,
    )


def build_sample(panel: Panel, origin_t: int, tau: int, delta: int,
                 k_target: int, mean: np.ndarray, std: np.ndarray,
                 eemd_config: EEMDConfig | None = None,
                 imf_context: int | None = None,
                 with_imf: bool = True) -> WindowSample:
    """One standalone sample for point prediction at ``origin_t`` (the
    target row may lie beyond the panel; only the input rows must exist)."""
    t_len, n = panel.values.shape
    if origin_t < tau - 1 or origin_t >= t_len:
        raise BoundsError(
            f"time index {origin_t} outside [{tau - 1}, {t_len - 1}]")
    values = panel.values
    std_values = (values - mean) / std
    cfg = eemd_config or EEMDConfig()
    if with_imf:
        block = _per_window_imf(values, origin_t, tau, k_target, cfg,
                                imf_context)
        block = _standardize_block(block.transpose(1, 0, 2), mean,
                                   std).transpose(1, 0, 2)
    else:
        block = np.zeros((tau, k_target + 1, n))
    gs = [graphs_mod.build_window_graph(values, j, tau)
          for j in range(origin_t - tau + 1, origin_t + 1)]
    target_t = origin_t + delta
    target = (std_values[target_t] if target_t < t_len
              else np.full(n, np.nan))
    return WindowSample(
        raw_window=std_values[origin_t - tau + 1:origin_t + 1].copy(),
        imf_window=block,
        target=target,
        graphs=gs,
        adjacencies=[graphs_mod.normalize_adjacency(g) for g in gs],
        origin_t=origin_t,
    )
