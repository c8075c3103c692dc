"""Subgraph-patch encoder: a p-layer GCN per patch, mean-pooled per node."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .graphs import SubgraphPatch, normalized_adjacency
from .params import glorot


@dataclass
class SgrlParams:
    weights: list[Tensor]   # one d x d matrix per GCN layer

    @classmethod
    def init(cls, d: int, p: int, rng: Rng) -> "SgrlParams":
        if p < 1:
            raise ValueError("the subgraph extractor needs p >= 1 layers")
        return cls([glorot(rng, d, d) for _ in range(p)])


def gcn_layer(h, a_hat: np.ndarray, w: Tensor) -> Tensor:
    """ReLU(A_hat H W)."""
    return ad.relu(ad.matmul(ad.const(a_hat), ad.const(h) @ w))


class PatchPlan:
    """Precomputed gather/pool operators for a fixed patch set."""

    def __init__(self, patches: Sequence[SubgraphPatch], n: int):
        self.patches = list(patches)
        self.n = n
        counts = np.zeros(n)
        for pt in self.patches:
            counts[list(pt.expanded_nodes)] += 1
        if np.any(counts == 0):
            raise ValueError("some node is covered by no patch")
        self.gather = []   # |patch| x n one-hot
        self.pool = []     # n x |patch|, each row averaging over covering patches
        self.a_hat = []
        for pt in self.patches:
            idx = np.array(pt.expanded_nodes)
            g = np.zeros((len(idx), n))
            g[np.arange(len(idx)), idx] = 1.0
            self.gather.append(g)
            self.pool.append(g.T / counts[:, None])
            self.a_hat.append(normalized_adjacency(pt))


def encode_patch(x_bar, gather: np.ndarray, a_hat: np.ndarray, params: SgrlParams) -> Tensor:
    h = ad.matmul(ad.const(gather), ad.const(x_bar))
    for w in params.weights:
        h = gcn_layer(h, a_hat, w)
    return h


def pool_across_patches(outputs: Sequence[Tensor], pools: Sequence[np.ndarray]) -> Tensor:
    total = None
    for out, pool in zip(outputs, pools):
        part = ad.matmul(ad.const(pool), out)
        total = part if total is None else total + part
    return total


def encode_subgraphs(x_bar, plan: PatchPlan, params: SgrlParams, order: Sequence[int] | None = None) -> Tensor:
    order = range(len(plan.patches)) if order is None else order
    outs = [encode_patch(x_bar, plan.gather[i], plan.a_hat[i], params) for i in order]
    return pool_across_patches(outs, [plan.pool[i] for i in order])
