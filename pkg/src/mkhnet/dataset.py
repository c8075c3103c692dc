"""Multivariate time-series data: loading, splits, normalisation, windows,
missingness simulation and a synthetic graph-diffusion generator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .autodiff import Rng


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class MtsDataset:
    """``values`` is variables x time; entries with ``mask == False`` are stored as 0."""

    values: np.ndarray
    mask: np.ndarray
    variable_names: tuple[str, ...] = ()
    granularity: str = ""

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise DatasetError(f"mask shape {self.mask.shape} != values shape {self.values.shape}")
        if not self.variable_names:
            object.__setattr__(self, "variable_names",
                               tuple(f"v{i}" for i in range(self.values.shape[0])))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float]
    boundaries: tuple[int, int, int, int]

    def segment(self, name: str) -> tuple[int, int]:
        i = {"train": 0, "val": 1, "test": 2}[name]
        return self.boundaries[i], self.boundaries[i + 1]


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass
class WindowBatch:
    inputs: np.ndarray          # b x n x tau
    targets: np.ndarray         # b x n x horizon
    input_mask: np.ndarray
    target_mask: np.ndarray
    window_start_times: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self) -> int:
        return self.inputs.shape[0]


def load_csv(path: str | Path) -> MtsDataset:
    """Header row of variable names, then one row per time step; empty cell = missing."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    names = tuple(c.strip() for c in rows[0])
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if not body:
        raise DatasetError(f"{path}: no data rows (empty dataset)")
    n = len(names)
    values = np.zeros((n, len(body)))
    mask = np.zeros((n, len(body)), dtype=bool)
    for t, row in enumerate(body):
        if len(row) != n:
            raise DatasetError(f"{path}: row {t + 2} has {len(row)} fields, expected {n}")
        for i, cell in enumerate(row):
            cell = cell.strip()
            if not cell:
                continue
            try:
                values[i, t] = float(cell)
            except ValueError:
                raise DatasetError(f"{path}: row {t + 2}, column {i + 1}: non-numeric cell {cell!r}") from None
            mask[i, t] = True
    return MtsDataset(values, mask, names)


def save_csv(ds: MtsDataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.variable_names)
        for t in range(ds.T):
            w.writerow([repr(float(ds.values[i, t])) if ds.mask[i, t] else "" for i in range(ds.n)])


def chronological_split(ds: MtsDataset | int, ratios: Sequence[float]) -> SplitSpec:
    T = ds if isinstance(ds, int) else ds.T
    r = tuple(float(x) for x in ratios)
    if len(r) != 3 or min(r) < 0 or not math.isclose(sum(r), 1.0, abs_tol=1e-9):
        raise DatasetError(f"split ratios must be three non-negative fractions summing to 1, got {ratios}")
    c1 = math.floor(r[0] * T + 1e-9)
    c2 = math.floor((r[0] + r[1]) * T + 1e-9)
    return SplitSpec(r, (0, min(c1, T), min(c2, T), T))


def fit_normalizer(ds: MtsDataset, split: SplitSpec) -> NormalizationStats:
    lo, hi = split.segment("train")
    v, m = ds.values[:, lo:hi], ds.mask[:, lo:hi]
    cnt = m.sum(axis=1)
    mean = np.where(cnt > 0, (v * m).sum(axis=1) / np.maximum(cnt, 1), 0.0)
    var = np.where(cnt > 0, (((v - mean[:, None]) * m) ** 2).sum(axis=1) / np.maximum(cnt, 1), 0.0)
    return NormalizationStats(mean, np.maximum(np.sqrt(var), 1e-8))


def apply_normalizer(ds: MtsDataset, stats: NormalizationStats) -> MtsDataset:
    z = (ds.values - stats.mean[:, None]) / stats.std[:, None]
    return replace(ds, values=np.where(ds.mask, z, 0.0))


def invert_normalizer(x: np.ndarray, stats: NormalizationStats, node_axis: int = -2) -> np.ndarray:
    """Map normalised values back to original units; ``node_axis`` indexes variables."""
    shape = [1] * np.ndim(x)
    shape[node_axis] = -1
    return np.asarray(x) * stats.std.reshape(shape) + stats.mean.reshape(shape)


def window_count(length: int, tau: int, horizon: int) -> int:
    return max(0, length - tau - horizon + 1)


def window_starts(segment: tuple[int, int], tau: int, horizon: int) -> np.ndarray:
    lo, hi = segment
    return lo + np.arange(window_count(hi - lo, tau, horizon))


def gather_windows(ds: MtsDataset, starts: np.ndarray, tau: int, horizon: int) -> WindowBatch:
    starts = np.asarray(starts, dtype=int)
    idx_in = starts[:, None] + np.arange(tau)[None, :]
    idx_out = starts[:, None] + tau + np.arange(horizon)[None, :]
    # (b, n, steps)
    take = lambda a, idx: np.transpose(a[:, idx], (1, 0, 2))
    return WindowBatch(take(ds.values, idx_in), take(ds.values, idx_out),
                       take(ds.mask, idx_in), take(ds.mask, idx_out), starts)


def make_windows(ds: MtsDataset, segment: tuple[int, int], tau: int, horizon: int,
                 batch_size: int, rng: Rng | None = None) -> Iterator[WindowBatch]:
    """Stride-1 rolling windows inside ``segment``; shuffled when ``rng`` is given."""
    if tau < 1 or horizon < 1 or batch_size < 1:
        raise DatasetError("tau, horizon and batch_size must be >= 1")
    starts = window_starts(segment, tau, horizon)
    if rng is not None:
        starts = starts[rng.permutation(len(starts))]
    for i in range(0, len(starts), batch_size):
        yield gather_windows(ds, starts[i:i + batch_size], tau, horizon)


def simulate_point_missing(ds: MtsDataset, ratio: float, rng: Rng) -> MtsDataset:
    """Drop each observed entry independently with probability ``ratio``."""
    if not 0.0 <= ratio <= 1.0:
        raise DatasetError(f"missing ratio must lie in [0, 1], got {ratio}")
    drop = rng.uniform(ds.mask.shape) < ratio
    mask = ds.mask & ~drop
    return replace(ds, values=np.where(mask, ds.values, 0.0), mask=mask)


def simulate_block_missing(ds: MtsDataset, ratio: float, failure_prob: float, rng: Rng,
                           horizon: int = 12) -> MtsDataset:
    """Sensor-failure blocks, then point drops until ``ratio`` of all entries are missing.

    A failure starts at each (variable, step) with probability ``failure_prob``
    and masks a run whose length is uniform on [ceil(horizon/2), 2*horizon].
    """
    if not 0.0 <= ratio <= 1.0 or not 0.0 <= failure_prob <= 1.0:
        raise DatasetError("ratio and failure_prob must lie in [0, 1]")
    n, T = ds.mask.shape
    starts = rng.uniform((n, T)) < failure_prob
    lo, hi = max(1, math.ceil(horizon / 2)), max(1, 2 * horizon)
    lengths = rng.integers(lo, hi + 1, size=(n, T))
    # a run covers step t if some start s <= t has s + len > t
    reach = np.where(starts, np.arange(T)[None, :] + lengths, -1)
    covered = np.maximum.accumulate(reach, axis=1) > np.arange(T)[None, :]
    mask = ds.mask & ~covered
    missing = 1.0 - mask.mean()
    if missing < ratio:
        q = (ratio - missing) / (1.0 - missing)
        mask &= ~(rng.uniform((n, T)) < q)
    return replace(ds, values=np.where(mask, ds.values, 0.0), mask=mask)


def row_normalized_adjacency(adjacency: np.ndarray) -> np.ndarray:
    a = np.asarray(adjacency, dtype=float)
    deg = a.sum(axis=1, keepdims=True)
    return np.divide(a, deg, out=np.zeros_like(a), where=deg > 0)


def make_synthetic(n: int, T: int, adjacency: np.ndarray, noise_std: float, rng: Rng, *,
                   seasonal_amplitude: float = 1.0, period: int = 288,
                   observation_noise_std: float = 0.0,
                   initial_state: np.ndarray | None = None) -> MtsDataset:
    """Graph-diffusion autoregression with a daily seasonal forcing.

    x_t = 0.5 x_{t-1} + 0.4 A_row x_{t-1} + a sin(2 pi t / period) + N(0, noise_std);
    ``observation_noise_std`` adds i.i.d. noise on top of the recorded series
    without feeding back into the dynamics.
    """
    a_hat = row_normalized_adjacency(adjacency)
    if a_hat.shape != (n, n):
        raise DatasetError(f"adjacency must be {n}x{n}")
    x = np.zeros(n) if initial_state is None else np.asarray(initial_state, dtype=float).copy()
    out = np.empty((n, T))
    for t in range(T):
        drive = seasonal_amplitude * math.sin(2 * math.pi * t / period)
        noise = rng.normal(n, scale=noise_std) if noise_std > 0 else 0.0
        x = 0.5 * x + 0.4 * (a_hat @ x) + drive + noise
        out[:, t] = x
    if observation_noise_std > 0:
        out = out + rng.normal((n, T), scale=observation_noise_std)
    return MtsDataset(out, np.ones((n, T), dtype=bool), granularity="5 min")
