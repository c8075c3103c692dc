"""Command-line entry point: ``mkhnet {train,eval,forecast,inspect,make-synth}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .autodiff import Rng
from .checkpoint import Checkpoint, CheckpointFormatError
from .config import ConfigError, RunConfig, load_config
from .dataset import (DatasetError, MtsDataset, apply_normalizer, chronological_split, gather_windows,
                      load_csv, make_synthetic, save_csv, simulate_block_missing,
                      simulate_point_missing, window_starts)
from .graphs import GraphFormatError, load_edge_list, random_sensor_graph, save_edge_list
from .hypergraph_inference import hyperedge_probabilities, pairwise_similarity, threshold_incidence
from .model import MKHNet
from .training import (PreparedData, TrainingDiverged, evaluate, historical_average_baseline,
                       prepare_data, train, write_history_csv)

log = logging.getLogger("mkhnet")

CHECKPOINT_NAME = "checkpoint.mkhn"
HISTORY_NAME = "history.csv"
MISSING_STREAM = 7


class CapabilityError(RuntimeError):
    pass


def corrupt(ds: MtsDataset, cfg: RunConfig) -> MtsDataset:
    """Apply the configured missingness simulation (deterministic in ``cfg.seed``)."""
    if cfg.missing == "none" or (cfg.missing_ratio == 0 and cfg.missing == "point"):
        return ds
    rng = Rng(cfg.seed).child(MISSING_STREAM)
    if cfg.missing == "point":
        return simulate_point_missing(ds, cfg.missing_ratio, rng)
    return simulate_block_missing(ds, cfg.missing_ratio, cfg.failure_prob, rng, horizon=cfg.horizon)


def load_run_data(cfg: RunConfig, data_path, stats=None) -> PreparedData:
    ds = corrupt(load_csv(data_path), cfg)
    if stats is None:
        return prepare_data(ds, cfg.split_ratios())
    split = chronological_split(ds, cfg.split_ratios())
    return PreparedData(ds, apply_normalizer(ds, stats), stats, split)


def model_from_checkpoint(ck: Checkpoint, graph_path) -> MKHNet:
    graph = load_edge_list(graph_path, ck.config.n_nodes)
    model = MKHNet(ck.config.model_config(), graph, seed=ck.seed)
    model.load_state_dict(ck.params)
    return model


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.loss is not None:
        over["loss"] = args.loss
    if args.missing is not None:
        over["missing"] = args.missing
    if args.missing_ratio is not None:
        over["missing_ratio"] = args.missing_ratio
    if args.epochs is not None:
        over["epochs"] = args.epochs
    cfg = cfg.with_(**over)
    raw = load_csv(args.data)
    if cfg.n_nodes not in (0, raw.n):
        raise ConfigError(f"config n_nodes={cfg.n_nodes} but data has {raw.n} variables")
    cfg = cfg.with_(n_nodes=raw.n)
    graph = load_edge_list(args.graph, raw.n)
    data = prepare_data(corrupt(raw, cfg), cfg.split_ratios())
    model = MKHNet(cfg.model_config(), graph, seed=cfg.seed)
    result = train(model, data, cfg.train_config())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_io.save(Checkpoint(cfg, model.state_dict(), data.stats, cfg.seed), out / CHECKPOINT_NAME)
    write_history_csv(result.history, out / HISTORY_NAME)
    print(f"initial val MAE {result.initial_val_mae!r}")
    print(f"best val MAE {result.best_val_mae!r} (epoch {result.best_epoch})")
    print(f"wrote {out / CHECKPOINT_NAME} and {out / HISTORY_NAME}")
    return 0


def cmd_eval(args) -> int:
    ck = ckpt_io.load(args.checkpoint)
    model = model_from_checkpoint(ck, args.graph)
    data = load_run_data(ck.config, args.data, ck.stats)
    report = evaluate(model, data, args.split)
    print(f"split {args.split}: MAE {report.mae!r} RMSE {report.rmse!r} MAPE {report.mape!r}")
    if args.baseline:
        ha = historical_average_baseline(data, ck.config.tau, ck.config.horizon, args.split)
        print(f"historical average: MAE {ha.mae!r} RMSE {ha.rmse!r} MAPE {ha.mape!r}")
    out = Path(args.out) if args.out else Path(args.checkpoint).with_name(f"metrics_{args.split}.csv")
    report.write_csv(out)
    print(f"wrote {out}")
    return 0


def forecast_rows(model: MKHNet, data: PreparedData, with_uncertainty: bool) -> tuple[list[str], list[list]]:
    cfg = model.cfg
    if with_uncertainty and not cfg.uncertainty:
        raise CapabilityError("--with-uncertainty needs a checkpoint trained with loss = nll")
    T = data.normalized.T
    if T < cfg.tau:
        raise DatasetError(f"need at least tau={cfg.tau} time steps, got {T}")
    x = data.normalized.values[:, T - cfg.tau:][None]
    mu, var = model.predict(x)
    mean = mu[0] * data.stats.std[:, None] + data.stats.mean[:, None]
    header = ["node"] + [f"mean_{h + 1}" for h in range(cfg.horizon)]
    rows = [[name] + [repr(float(v)) for v in mean[i]] for i, name in enumerate(data.raw.variable_names)]
    if with_uncertainty:
        sigma = np.sqrt(var[0]) * data.stats.std[:, None]
        header += [f"sigma_{h + 1}" for h in range(cfg.horizon)]
        for i, row in enumerate(rows):
            row.extend(repr(float(v)) for v in sigma[i])
    return header, rows


def cmd_forecast(args) -> int:
    ck = ckpt_io.load(args.checkpoint)
    if args.with_uncertainty and ck.config.loss != "nll":
        raise CapabilityError("--with-uncertainty needs a checkpoint trained with loss = nll")
    model = model_from_checkpoint(ck, args.graph)
    data = load_run_data(ck.config, args.data, ck.stats)
    header, rows = forecast_rows(model, data, args.with_uncertainty)
    _write_csv(args.out, header, rows)
    return 0


def cmd_inspect(args) -> int:
    ck = ckpt_io.load(args.checkpoint)
    if not ck.config.spatial:
        raise CapabilityError("checkpoint was trained without spatial branches")
    if args.emit == "incidence":
        inc = threshold_incidence(*hyperedge_probabilities(
            pairwise_similarity(ck.params["embeddings.z_node"], ck.params["embeddings.z_edge"])))
        header = [f"e{j}" for j in range(inc.shape[1])]
        _write_csv(args.out, header, [[str(int(v)) for v in row] for row in inc])
        return 0
    if not (args.data and args.graph):
        raise CapabilityError(f"--emit {args.emit} needs --data and --graph")
    model = model_from_checkpoint(ck, args.graph)
    data = load_run_data(ck.config, args.data, ck.stats)
    starts = window_starts(data.split.segment(args.split), model.cfg.tau, model.cfg.horizon)
    if len(starts) == 0:
        raise DatasetError(f"split '{args.split}' holds no complete window")
    batch = gather_windows(data.normalized, starts[-1:], model.cfg.tau, model.cfg.horizon)
    trace: dict = {}
    model.forward(batch.inputs, train=False, trace=trace)
    if args.emit == "alpha":
        mat, cols = trace["alpha"][0][0], [f"n{i}" for i in range(model.cfg.n_nodes)]
    elif args.emit == "beta":
        mat, cols = trace["beta"][0][0], [f"e{j}" for j in range(model.cfg.m_hyperedges)]
    else:
        mat, cols = trace["gates"][0], [f"f{k}" for k in range(model.cfg.d)]
    _write_csv(args.out, cols, [[repr(float(v)) for v in row] for row in mat])
    return 0


def cmd_make_synth(args) -> int:
    rng = Rng(args.seed)
    graph = random_sensor_graph(args.nodes, rng.child(0))
    ds = make_synthetic(args.nodes, args.steps, graph.adjacency, args.noise_std, rng.child(1),
                        seasonal_amplitude=args.seasonal_amplitude,
                        observation_noise_std=args.observation_noise_std)
    save_csv(ds, args.out_data)
    save_edge_list(graph, args.out_graph)
    print(f"wrote {args.out_data} ({args.nodes} variables x {args.steps} steps) and {args.out_graph}")
    return 0


def _write_csv(path, header, rows) -> None:
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mkhnet", description="Multi-source hypergraph forecaster")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model and write checkpoint + history")
    t.add_argument("--data", required=True)
    t.add_argument("--graph", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int)
    t.add_argument("--loss", choices=["mae", "nll"])
    t.add_argument("--missing", choices=["none", "point", "block"])
    t.add_argument("--missing-ratio", type=float)
    t.add_argument("--epochs", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="metrics of a checkpoint on one split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--graph", required=True)
    e.add_argument("--split", choices=["train", "val", "test"], default="test")
    e.add_argument("--out", help="per-horizon metrics CSV (default: next to the checkpoint)")
    e.add_argument("--baseline", action="store_true", help="also report the historical average")
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("forecast", help="forecast the next horizon after the end of the data")
    f.add_argument("--checkpoint", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--graph", required=True)
    f.add_argument("--with-uncertainty", action="store_true")
    f.add_argument("--out")
    f.set_defaults(func=cmd_forecast)

    i = sub.add_parser("inspect", help="export learned structure or attention as CSV")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--emit", choices=["incidence", "alpha", "beta", "gates"], required=True)
    i.add_argument("--data")
    i.add_argument("--graph")
    i.add_argument("--split", choices=["train", "val", "test"], default="test")
    i.add_argument("--out")
    i.set_defaults(func=cmd_inspect)

    s = sub.add_parser("make-synth", help="write a synthetic dataset and its graph")
    s.add_argument("--nodes", type=int, default=20)
    s.add_argument("--steps", type=int, default=2000)
    s.add_argument("--out-data", required=True)
    s.add_argument("--out-graph", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-std", type=float, default=0.5)
    s.add_argument("--seasonal-amplitude", type=float, default=1.0)
    s.add_argument("--observation-noise-std", type=float, default=0.0)
    s.set_defaults(func=cmd_make_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ConfigError, CheckpointFormatError, DatasetError, GraphFormatError,
            CapabilityError, TrainingDiverged, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
