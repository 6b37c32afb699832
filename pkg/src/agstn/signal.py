"""Empirical mode decomposition and its noise-ensemble variant.

A series is repeatedly sifted into intrinsic mode functions (oscillatory
components whose envelope mean is near zero) and a final near-monotone
residual.  The channel sum of IMFs plus residual reconstructs the input
exactly up to float rounding.

Envelope boundary handling: with three or more extrema, the two nearest
extrema are mirrored across each boundary before spline fitting; with
exactly two, the envelope is the straight line through them (a natural
spline on two knots); with one, the single extremum is mirrored to both
sides, giving a constant envelope.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    ContractError,
    EnvelopeUndefinedError,
    SeriesTooShortError,
)


@dataclass
class IMFSet:
    """Decomposition of one series: ``imfs`` is K x T (one mode per row,
    fastest first), ``residual`` is length T."""

    imfs: np.ndarray
    residual: np.ndarray

    @property
    def k(self) -> int:
        return self.imfs.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.imfs.sum(axis=0) + self.residual


@dataclass(frozen=True)
class EEMDConfig:
    ensemble_size: int = 50
    noise_std_ratio: float = 0.2
    max_sift_iterations: int = 50
    sift_threshold: float = 0.2
    max_imfs: int = 8
    seed: int = 0

    def validate(self) -> None:
        if self.ensemble_size < 1:
            raise ContractError("ensemble_size must be >= 1")
        if self.noise_std_ratio < 0:
            raise ContractError("noise_std_ratio must be >= 0")
        if self.max_imfs < 1:
            raise ContractError("max_imfs must be >= 1")
        if self.max_sift_iterations < 1:
            raise ContractError("max_sift_iterations must be >= 1")
        if self.sift_threshold <= 0:
            raise ContractError("sift_threshold must be > 0")


def find_extrema(x: np.ndarray):
    """Strict local extrema by three-point comparison; a plateau bordered by
    lower (higher) values contributes its midpoint index as a maximum
    (minimum).

    Returns ``((max_idx, max_val), (min_idx, min_val))``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    if n < 3:
        raise SeriesTooShortError(f"need at least 3 points, got {n}")

    max_idx: list[int] = []
    min_idx: list[int] = []
    i = 1
    while i < n - 1:
        if x[i] == x[i - 1]:
            i += 1
            continue
        j = i
        while j < n - 1 and x[j + 1] == x[i]:
            j += 1
        # run [i..j] of equal values with x[i-1] != x[i]
        if j < n - 1:
            mid = (i + j) // 2
            if x[i] > x[i - 1] and x[i] > x[j + 1]:
                max_idx.append(mid)
            elif x[i] < x[i - 1] and x[i] < x[j + 1]:
                min_idx.append(mid)
        i = j + 1

    max_idx_arr = np.asarray(max_idx, dtype=int)
    min_idx_arr = np.asarray(min_idx, dtype=int)
    return (max_idx_arr, x[max_idx_arr]), (min_idx_arr, x[min_idx_arr])


def _natural_spline_eval(knot_x: np.ndarray, knot_y: np.ndarray,
                         t: np.ndarray) -> np.ndarray:
    spline = CubicSpline(knot_x, knot_y, bc_type="natural", extrapolate=True)
    return spline(t)


def envelope(x: np.ndarray, extrema) -> np.ndarray:
    """Envelope through one kind of extrema, evaluated at every sample
    position of ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    idx, val = extrema
    idx = np.asarray(idx, dtype=float).reshape(-1)
    val = np.asarray(val, dtype=float).reshape(-1)
    t = np.arange(n, dtype=float)

    if idx.size == 0:
        raise EnvelopeUndefinedError("no extrema of the requested kind")
    if idx.size == 1:
        # mirror the single extremum across both boundaries; constant value
        return np.full(n, val[0])
    if idx.size == 2:
        # a natural spline on two knots is the straight line through them
        slope = (val[1] - val[0]) / (idx[1] - idx[0])
        return val[0] + slope * (t - idx[0])

    left_end, right_end = 0.0, float(n - 1)
    ext_x = [idx]
    ext_y = [val]
    # mirror the two extrema nearest each boundary (skip mirrors that land
    # on an existing knot position)
    lx = 2.0 * left_end - idx[:2]
    keep = lx < idx[0]
    ext_x.insert(0, lx[keep][::-1])
    ext_y.insert(0, val[:2][keep][::-1])
    rx = 2.0 * right_end - idx[-2:]
    keep = rx > idx[-1]
    ext_x.append(rx[keep][::-1])
    ext_y.append(val[-2:][keep][::-1])

    knot_x = np.concatenate(ext_x)
    knot_y = np.concatenate(ext_y)
    return _natural_spline_eval(knot_x, knot_y, t)


def sift(x: np.ndarray, sift_threshold: float = 0.2,
         max_sift_iterations: int = 50):
    """Extract one IMF: subtract the envelope mean until the normalized
    squared change between iterations drops below ``sift_threshold``.

    Returns ``(imf, remainder)`` with ``imf + remainder == x`` exactly.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    (max_i, max_v), (min_i, min_v) = find_extrema(x)
    if max_i.size < 2 or min_i.size < 2:
        raise EnvelopeUndefinedError(
            f"sift needs >= 2 maxima and >= 2 minima "
            f"(got {max_i.size}/{min_i.size})")

    h = x
    for it in range(max_sift_iterations):
        if it > 0:
            (max_i, max_v), (min_i, min_v) = find_extrema(h)
            if max_i.size < 2 or min_i.size < 2:
                break
        upper = envelope(h, (max_i, max_v))
        lower = envelope(h, (min_i, min_v))
        m = 0.5 * (upper + lower)
        h_new = h - m
        denom = float(np.sum(h * h))
        sd = float(np.sum(m * m)) / max(denom, 1e-300)
        h = h_new
        if sd < sift_threshold:
            break
    return h, x - h


def emd(x: np.ndarray, config: EEMDConfig | None = None) -> IMFSet:
    """Plain decomposition: sift the remainder until it has fewer than two
    maxima or minima, or the IMF cap is reached."""
    cfg = config or EEMDConfig()
    cfg.validate()
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size < 4:
        raise SeriesTooShortError(f"need at least 4 points, got {x.size}")

    imfs: list[np.ndarray] = []
    remainder = x
    while len(imfs) < cfg.max_imfs:
        try:
            imf, remainder = sift(remainder, cfg.sift_threshold,
                                  cfg.max_sift_iterations)
        except EnvelopeUndefinedError:
            break
        imfs.append(imf)
    stack = np.array(imfs) if imfs else np.empty((0, x.size))
    return IMFSet(stack, remainder)


def eemd(x: np.ndarray, config: EEMDConfig) -> IMFSet:
    """Noise-ensemble decomposition.

    Member ``m`` decomposes ``x`` plus white noise drawn from the
    deterministic sub-seed ``seed + m``; mode ``k`` is averaged over the
    members that produced at least ``k+1`` modes.  The residual is defined
    as ``x`` minus the averaged modes, restoring exact completeness.  With
    ``ensemble_size=1`` and zero noise this equals :func:`emd`.
    """
    config.validate()
    x = np.asarray(x, dtype=float).reshape(-1)
    noise_std = config.noise_std_ratio * float(np.std(x))
    if config.ensemble_size == 1 and noise_std == 0.0:
        return emd(x, config)

    member_sets: list[IMFSet] = []
    for m in range(config.ensemble_size):
        rng = np.random.default_rng(config.seed + m)
        noise = rng.standard_normal(x.size) * noise_std
        member_sets.append(emd(x + noise, config))

    k_out = max(s.k for s in member_sets)
    if k_out == 0:
        return IMFSet(np.empty((0, x.size)), x.copy())

    imfs = np.zeros((k_out, x.size))
    for k in range(k_out):
        rows = [s.imfs[k] for s in member_sets if s.k > k]
        imfs[k] = np.mean(rows, axis=0)
    residual = x - imfs.sum(axis=0)
    return IMFSet(imfs, residual)


def align_imf_count(sets: list[IMFSet], k_target: int) -> np.ndarray:
    """Unify per-sensor mode counts into a fixed feature block.

    Sensors with more than ``k_target`` modes fold the surplus into their
    residual; sensors with fewer get zero rows.  The residual is appended as
    the final channel, so the output has ``k_target + 1`` channels:
    shape ``(k_target + 1, T, N)``.  Channel sums still reconstruct each
    input series.
    """
    if k_target < 1:
        raise ContractError("k_target must be >= 1")
    if not sets:
        raise ContractError("no decompositions to align")
    t_len = sets[0].residual.size
    for s in sets:
        if s.residual.size != t_len:
            raise ContractError("decompositions have unequal lengths")

    block = np.zeros((k_target + 1, t_len, len(sets)))
    for i, s in enumerate(sets):
        imfs = s.imfs
        residual = s.residual.copy()
        if s.k > k_target:
            residual += imfs[k_target:].sum(axis=0)
            imfs = imfs[:k_target]
        if imfs.shape[0]:
            block[:imfs.shape[0], :, i] = imfs
        block[k_target, :, i] = residual
    return block


def decompose_panel(values: np.ndarray, config: EEMDConfig,
                    seed_stride: int = 1_000_003) -> list[IMFSet]:
    """Run :func:`eemd` per sensor column of a T x N value matrix with a
    per-sensor sub-seed so runs stay reproducible sensor by sensor."""
    sets = []
    for i in range(values.shape[1]):
        cfg = replace(config, seed=config.seed + seed_stride * i)
        sets.append(eemd(values[:, i], cfg))
    return sets
