"""Scaled-down synthetic experiments shared by ``scripts/`` and the acceptance suite."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .autodiff import Rng
from .config import RunConfig
from .dataset import MtsDataset, make_synthetic, simulate_point_missing
from .graphs import ExplicitGraph, random_sensor_graph
from .model import MKHNet
from .training import (PreparedData, TrainResult, evaluate, historical_average_baseline, predict_split,
                       prepare_data, train)

N_NODES = 20
T_STEPS = 2000
NOISE_STD = 0.5


@dataclass
class SyntheticSetup:
    graph: ExplicitGraph
    dataset: MtsDataset


def diffusion_setup(*, graph_seed: int = 1, data_seed: int = 2, noise_std: float = NOISE_STD,
                    seasonal_amplitude: float = 1.0, observation_noise_std: float = 0.0) -> SyntheticSetup:
    graph = random_sensor_graph(N_NODES, Rng(graph_seed))
    ds = make_synthetic(N_NODES, T_STEPS, graph.adjacency, noise_std, Rng(data_seed),
                        seasonal_amplitude=seasonal_amplitude, observation_noise_std=observation_noise_std)
    return SyntheticSetup(graph, ds)


@dataclass
class RunOutcome:
    model: MKHNet
    data: PreparedData
    result: TrainResult
    test_mae: float
    final_val_mae: float
    seconds: float


def run(setup: SyntheticSetup, cfg: RunConfig, missing_ratio: float = 0.0) -> RunOutcome:
    """Train one model on ``setup`` under ``cfg``; point-missing is seeded from ``cfg.seed``."""
    ds = setup.dataset
    if missing_ratio > 0:
        ds = simulate_point_missing(ds, missing_ratio, Rng(cfg.seed).child(7))
    cfg = cfg.with_(n_nodes=ds.n)
    data = prepare_data(ds, cfg.split_ratios())
    model = MKHNet(cfg.model_config(), setup.graph, seed=cfg.seed)
    t0 = time.perf_counter()
    result = train(model, data, cfg.train_config())
    seconds = time.perf_counter() - t0
    return RunOutcome(model, data, result, evaluate(model, data, "test").mae,
                      evaluate(model, data, "val").mae, seconds)


def ha_test_mae(outcome: RunOutcome) -> float:
    cfg = outcome.model.cfg
    return historical_average_baseline(outcome.data, cfg.tau, cfg.horizon, "test").mae


def median_sigma(outcome: RunOutcome, split: str = "test") -> float:
    p = predict_split(outcome.model, outcome.data, split)
    if p.std is None:
        raise ValueError("model has no uncertainty head")
    return float(np.median(p.std[p.target_mask]))
