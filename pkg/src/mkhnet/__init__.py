"""Multivariate time-series forecasting with learned hypergraphs, subgraph
patches and a dual-hypergraph view, trained by a small reverse-mode autodiff
engine over numpy."""

from .autodiff import Rng, Tensor
from .config import RunConfig, load_config
from .dataset import MtsDataset, load_csv, make_synthetic
from .graphs import ExplicitGraph, load_edge_list
from .model import MKHNet, ModelConfig
from .training import TrainConfig, evaluate, prepare_data, train

__all__ = [
    "Rng", "Tensor", "RunConfig", "load_config", "MtsDataset", "load_csv", "make_synthetic",
    "ExplicitGraph", "load_edge_list", "MKHNet", "ModelConfig", "TrainConfig", "evaluate",
    "prepare_data", "train",
]
