"""Losses, metrics, Adam, the plateau schedule, and the train/evaluate loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Rng, Tensor
from .dataset import (MtsDataset, NormalizationStats, SplitSpec, apply_normalizer,
                      chronological_split, fit_normalizer, gather_windows, invert_normalizer,
                      make_windows, window_starts)
from .model import MKHNet

log = logging.getLogger(__name__)

MAPE_MIN_TARGET = 1e-3


class TrainingDiverged(RuntimeError):
    pass


class EmptySplitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# losses


def mae_loss(pred, target, target_mask) -> Tensor:
    mask = np.asarray(target_mask, dtype=float)
    count = mask.sum()
    if count == 0:
        raise ValueError("MAE loss undefined: no observed target entries")
    return ad.sum_(ad.abs_(ad.const(pred) - target) * mask) * (1.0 / count)


def gaussian_nll_loss(mu, var, target, target_mask) -> Tensor:
    """Mean over observed entries of log(var)/2 + (x - mu)^2 / (2 var)."""
    mask = np.asarray(target_mask, dtype=float)
    count = mask.sum()
    if count == 0:
        raise ValueError("Gaussian NLL undefined: no observed target entries")
    resid = ad.const(target) - mu
    terms = 0.5 * ad.log(var) + (resid * resid) / (2.0 * ad.const(var))
    return ad.sum_(terms * mask) * (1.0 / count)


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricsReport:
    mae: float
    rmse: float
    mape: float
    mae_per_step: np.ndarray
    rmse_per_step: np.ndarray
    mape_per_step: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return {"mae": self.mae, "rmse": self.rmse, "mape": self.mape}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "mae", "rmse", "mape"])
            for i in range(len(self.mae_per_step)):
                w.writerow([i + 1, repr(float(self.mae_per_step[i])),
                            repr(float(self.rmse_per_step[i])), repr(float(self.mape_per_step[i]))])
            w.writerow(["all", repr(self.mae), repr(self.rmse), repr(self.mape)])


def _masked_mean(x: np.ndarray, m: np.ndarray, axis=None):
    cnt = m.sum(axis=axis)
    s = np.where(m, x, 0.0).sum(axis=axis)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cnt > 0, s / np.maximum(cnt, 1), np.nan)


def metrics(pred, target, mask=None, stats: NormalizationStats | None = None) -> MetricsReport:
    """MAE / RMSE / MAPE(%) on the original scale over observed entries.

    Arrays are ``(..., n, horizon)``; with ``stats`` both inputs are
    de-normalised first.  MAPE skips targets with |y| < 1e-3.
    """
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    mask = np.ones(target.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if stats is not None:
        pred, target = invert_normalizer(pred, stats), invert_normalizer(target, stats)
    err = pred - target
    mape_mask = mask & (np.abs(target) >= MAPE_MIN_TARGET)
    ape = np.abs(err) / np.where(mape_mask, np.abs(target), 1.0)
    h = target.shape[-1]
    per = lambda x, m: _masked_mean(x.reshape(-1, h), m.reshape(-1, h), axis=0)
    return MetricsReport(
        mae=float(_masked_mean(np.abs(err), mask)),
        rmse=float(np.sqrt(_masked_mean(err ** 2, mask))),
        mape=float(100.0 * _masked_mean(ape, mape_mask)),
        mae_per_step=per(np.abs(err), mask),
        rmse_per_step=np.sqrt(per(err ** 2, mask)),
        mape_per_step=100.0 * per(ape, mape_mask),
    )


# ---------------------------------------------------------------------------
# optimisation


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1.0 - b1 ** self.t, 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_global_norm(grads: Sequence[np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


class PlateauScheduler:
    """Multiply the lr by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, lr: float, patience: int = 5, factor: float = 0.5, min_delta: float = 1e-6):
        self.lr, self.patience, self.factor, self.min_delta = lr, patience, factor, min_delta
        self.best = math.inf
        self.stale = 0

    def step(self, val_metric: float) -> float:
        if self.best - val_metric >= self.min_delta:
            self.best = val_metric
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr *= self.factor
                self.stale = 0
        return self.lr


# ---------------------------------------------------------------------------
# data plumbing


@dataclass
class PreparedData:
    raw: MtsDataset            # original units (after any simulated missingness)
    normalized: MtsDataset
    stats: NormalizationStats
    split: SplitSpec


def prepare_data(ds: MtsDataset, ratios=(0.6, 0.2, 0.2)) -> PreparedData:
    split = chronological_split(ds, ratios)
    stats = fit_normalizer(ds, split)
    return PreparedData(ds, apply_normalizer(ds, stats), stats, split)


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 1e-3
    batch_size: int = 32
    patience_lr: int = 5
    lr_factor: float = 0.5
    patience_stop: int = 10
    min_delta: float = 1e-6
    clip_norm: float = 5.0
    seed: int = 0
    loss_kind: str = "mae"     # "mae" | "nll"
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.loss_kind not in ("mae", "nll"):
            raise ValueError(f"loss_kind must be 'mae' or 'nll', got {self.loss_kind!r}")


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    initial_val_mae: float = math.nan
    best_val_mae: float = math.nan
    best_epoch: int = 0


@dataclass
class Predictions:
    mean: np.ndarray           # (windows, n, horizon), original units
    std: np.ndarray | None     # original units
    target: np.ndarray         # original units
    target_mask: np.ndarray
    starts: np.ndarray


def predict_split(model: MKHNet, data: PreparedData, split: str, batch_size: int = 256) -> Predictions:
    """Deterministic, chronologically ordered forecasts over one split."""
    tau, horizon = model.cfg.tau, model.cfg.horizon
    starts = window_starts(data.split.segment(split), tau, horizon)
    if len(starts) == 0:
        raise EmptySplitError(f"split '{split}' holds no complete window (tau={tau}, horizon={horizon})")
    means, vars_ = [], []
    for i in range(0, len(starts), batch_size):
        batch = gather_windows(data.normalized, starts[i:i + batch_size], tau, horizon)
        mu, var = model.predict(batch.inputs)
        means.append(mu)
        if var is not None:
            vars_.append(var)
    raw = gather_windows(data.raw, starts, tau, horizon)
    mean = invert_normalizer(np.concatenate(means), data.stats)
    std = None
    if vars_:
        std = np.sqrt(np.concatenate(vars_)) * data.stats.std[:, None]
    return Predictions(mean, std, raw.targets, raw.target_mask, starts)


def evaluate(model: MKHNet, data: PreparedData, split: str = "test", batch_size: int = 256) -> MetricsReport:
    p = predict_split(model, data, split, batch_size)
    return metrics(p.mean, p.target, p.target_mask)


def historical_average_baseline(data: PreparedData, tau: int, horizon: int, split: str = "test") -> MetricsReport:
    """Forecast every future step as the observed mean of the look-back window."""
    starts = window_starts(data.split.segment(split), tau, horizon)
    if len(starts) == 0:
        raise EmptySplitError(f"split '{split}' holds no complete window")
    w = gather_windows(data.raw, starts, tau, horizon)
    cnt = w.input_mask.sum(axis=-1, keepdims=True)
    avg = np.where(cnt > 0, (w.inputs * w.input_mask).sum(axis=-1, keepdims=True) / np.maximum(cnt, 1),
                   data.stats.mean[None, :, None])
    pred = np.broadcast_to(avg, w.targets.shape)
    return metrics(pred, w.targets, w.target_mask)


def _batch_loss(model: MKHNet, batch, cfg: TrainConfig, rng: Rng) -> Tensor:
    out = model.forward(batch.inputs, train=True, rng=rng)
    if cfg.loss_kind == "nll":
        if out.var is None:
            raise ValueError("NLL training needs a model with an uncertainty head")
        return gaussian_nll_loss(out.mean, out.var, batch.targets, batch.target_mask)
    return mae_loss(out.mean, batch.targets, batch.target_mask)


def train(model: MKHNet, data: PreparedData, cfg: TrainConfig) -> TrainResult:
    """Adam + plateau schedule + early stopping; restores the best-validation weights.

    Any non-finite value met on the way aborts with :class:`TrainingDiverged`
    naming the op that produced it.
    """
    if cfg.epochs <= 0:
        return TrainResult()
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            return _train(model, data, cfg)
    except NonFiniteError as exc:
        raise TrainingDiverged(f"training diverged: {exc}") from exc


def _train(model: MKHNet, data: PreparedData, cfg: TrainConfig) -> TrainResult:
    params = model.parameters()
    rng = Rng(cfg.seed).child(1)
    opt = Adam(params, cfg.lr)
    sched = PlateauScheduler(cfg.lr, cfg.patience_lr, cfg.lr_factor, cfg.min_delta)
    result = TrainResult()
    result.initial_val_mae = evaluate(model, data, "val", cfg.eval_batch_size).mae
    best_state = model.state_dict()
    best, stale = math.inf, 0
    tau, horizon = model.cfg.tau, model.cfg.horizon
    for epoch in range(1, cfg.epochs + 1):
        lr_used = opt.lr
        losses = []
        for batch in make_windows(data.normalized, data.split.segment("train"), tau, horizon,
                                  cfg.batch_size, rng):
            if not batch.target_mask.any():
                continue
            loss = _batch_loss(model, batch, cfg, rng)
            grads = ad.backward(loss, params)
            clip_global_norm(grads, cfg.clip_norm)
            opt.step(grads)
            if not all(np.all(np.isfinite(p.data)) for p in params):
                raise TrainingDiverged(f"epoch {epoch}: optimizer step produced non-finite parameters")
            losses.append(loss.item())
        val = evaluate(model, data, "val", cfg.eval_batch_size).mae
        if not math.isfinite(val):
            raise TrainingDiverged(f"epoch {epoch}: validation MAE is {val}")
        opt.lr = sched.step(val)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)) if losses else math.nan,
               "val_mae": val, "lr": lr_used}
        result.history.append(row)
        log.info("epoch %d train_loss %.6f val_mae %.6f lr %.2e", epoch, row["train_loss"], val, lr_used)
        if best - val >= cfg.min_delta:
            best, stale = val, 0
            best_state = model.state_dict()
            result.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience_stop:
                break
    model.load_state_dict(best_state)
    result.best_val_mae = best
    return result


def write_history_csv(history: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_mae", "lr"])
        for r in history:
            w.writerow([r["epoch"], repr(r["train_loss"]), repr(r["val_mae"]), repr(r["lr"])])
