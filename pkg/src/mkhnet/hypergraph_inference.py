"""Hypergraph structure inference from learned node/hyperedge embeddings.

Similarity between hypernode and hyperedge embeddings gives a two-channel
connection probability; a tempered Gumbel-softmax turns it into a (soft or
straight-through hard) incidence matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, Tensor


@dataclass
class EmbeddingBank:
    z_node: Tensor   # n x d
    z_edge: Tensor   # m x d

    @classmethod
    def init(cls, n: int, m: int, d: int, rng: Rng) -> "EmbeddingBank":
        s = 1.0 / math.sqrt(d)
        return cls(Tensor(rng.normal((n, d), scale=s), requires_grad=True),
                   Tensor(rng.normal((m, d), scale=s), requires_grad=True))


@dataclass(frozen=True)
class GumbelConfig:
    temperature: float = 0.05
    hard: bool = True

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("Gumbel temperature must be positive")


def pairwise_similarity(z_node, z_edge) -> Tensor:
    """(z_i . z_j + 1) / (2 |z_i| |z_j|), clamped to [0, 1]."""
    z_node, z_edge = ad.const(z_node), ad.const(z_edge)
    norm_i = ad.clip(ad.sqrt(ad.sum_(z_node * z_node, axis=1, keepdims=True)), lo=1e-8)
    norm_j = ad.clip(ad.sqrt(ad.sum_(z_edge * z_edge, axis=1, keepdims=True)), lo=1e-8)
    s = (z_node @ z_edge.T + 1.0) / ((2.0 * norm_i) @ norm_j.T)
    return ad.clip(s, 0.0, 1.0)


def hyperedge_probabilities(s) -> tuple[Tensor, Tensor]:
    """Channels (connected, not connected) = (sigmoid(S), sigmoid(1 - S))."""
    s = ad.const(s)
    return ad.sigmoid(s), ad.sigmoid(1.0 - s)


def gumbel_channels(p_conn, p_not, temperature: float,
                    noise: tuple[np.ndarray, np.ndarray] | None) -> tuple[Tensor, Tensor]:
    """Two-category tempered softmax of (g_k + P_k) / temperature.

    For two categories the softmax equals a logistic of the scaled difference,
    which is what is evaluated here.
    """
    p_conn, p_not = ad.const(p_conn), ad.const(p_not)
    diff = p_conn - p_not
    if noise is not None:
        diff = diff + (noise[0] - noise[1])
    return ad.sigmoid(diff * (1.0 / temperature)), ad.sigmoid(diff * (-1.0 / temperature))


def gumbel_sample_incidence(p_conn, p_not, cfg: GumbelConfig, rng: Rng | None,
                            noise: tuple[np.ndarray, np.ndarray] | None = None) -> Tensor:
    """Sample an n x m incidence; hard mode binarises with straight-through gradients.

    With ``rng=None`` and no explicit ``noise`` the Gumbel noise is zero.
    """
    p_conn = ad.const(p_conn)
    if noise is None and rng is not None:
        noise = (rng.gumbel(p_conn.shape), rng.gumbel(p_conn.shape))
    soft, _ = gumbel_channels(p_conn, p_not, cfg.temperature, noise)
    if not cfg.hard:
        return soft
    return ad.straight_through((soft.data > 0.5).astype(float), soft)


def threshold_incidence(p_conn, p_not) -> np.ndarray:
    """Noise-free evaluation structure: 1 where P_conn > P_not."""
    return (ad.const(p_conn).data > ad.const(p_not).data).astype(float)


def infer_incidence(bank: EmbeddingBank, cfg: GumbelConfig, *, train: bool,
                    rng: Rng | None) -> Tensor:
    p_conn, p_not = hyperedge_probabilities(pairwise_similarity(bank.z_node, bank.z_edge))
    if not train:
        return Tensor(threshold_incidence(p_conn, p_not))
    return gumbel_sample_incidence(p_conn, p_not, cfg, rng)
