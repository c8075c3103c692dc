"""Hypergraph representation learning: HgAT message passing, the HgT
transformer encoder, and the gated fusion of the two.

All functions accept features with arbitrary leading batch axes, i.e.
``(..., n, d)``; incidence matrices are shared across the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .params import glorot, ones, zeros


@dataclass
class HgatHead:
    w0: Tensor   # d x d
    w1: Tensor   # d x d
    w2: Tensor   # d x d
    w3: Tensor   # 2d

    @classmethod
    def init(cls, d: int, rng: Rng) -> "HgatHead":
        return cls(glorot(rng, d, d), glorot(rng, d, d), glorot(rng, d, d),
                   glorot(rng, 2 * d, 1, shape=(2 * d,)))


@dataclass
class HgatLayer:
    heads: list[HgatHead]
    f_s: Tensor
    f_g: Tensor

    @classmethod
    def init(cls, d: int, n_heads: int, rng: Rng) -> "HgatLayer":
        return cls([HgatHead.init(d, rng) for _ in range(n_heads)],
                   glorot(rng, d, d), glorot(rng, d, d))


@dataclass
class HgatParams:
    layers: list[HgatLayer]
    dropout: float = field(default=0.1, metadata={"static": True})

    @classmethod
    def init(cls, d: int, n_heads: int, n_layers: int, rng: Rng, dropout: float = 0.1) -> "HgatParams":
        if n_heads < 1 or n_layers < 1:
            raise ValueError("HgAT needs at least one head and one layer")
        return cls([HgatLayer.init(d, n_heads, rng) for _ in range(n_layers)], dropout)


@dataclass
class HgtLayer:
    ln1_gain: Tensor
    ln1_bias: Tensor
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    mlp_w1: Tensor   # d x 4d
    mlp_b1: Tensor
    mlp_w2: Tensor   # 4d x d
    mlp_b2: Tensor

    @classmethod
    def init(cls, d: int, rng: Rng) -> "HgtLayer":
        return cls(ones(d), zeros(d),
                   glorot(rng, d, d), glorot(rng, d, d), glorot(rng, d, d), glorot(rng, d, d),
                   ones(d), zeros(d),
                   glorot(rng, d, 4 * d), zeros(4 * d), glorot(rng, 4 * d, d), zeros(d))


@dataclass
class HgtParams:
    layers: list[HgtLayer]
    n_heads: int = field(default=4, metadata={"static": True})
    dropout: float = field(default=0.1, metadata={"static": True})
    eps: float = field(default=1e-5, metadata={"static": True})

    @classmethod
    def init(cls, d: int, n_heads: int, n_layers: int, rng: Rng, dropout: float = 0.1) -> "HgtParams":
        if d % n_heads:
            raise ValueError(f"embedding size {d} not divisible by {n_heads} attention heads")
        return cls([HgtLayer.init(d, rng) for _ in range(n_layers)], n_heads, dropout)


@dataclass
class FusionGateParams:
    f_s: Tensor
    f_g: Tensor

    @classmethod
    def init(cls, d: int, rng: Rng) -> "FusionGateParams":
        return cls(glorot(rng, d, d), glorot(rng, d, d))


@dataclass
class DualParams:
    """HgAT on the dual hypergraph: full layers, then an intra-edge readout."""

    layers: list[HgatLayer]
    readout: list[Tensor]   # per-head W0 of the final intra-edge aggregation
    dropout: float = field(default=0.1, metadata={"static": True})

    @classmethod
    def init(cls, d: int, n_heads: int, n_layers: int, rng: Rng, dropout: float = 0.1) -> "DualParams":
        return cls([HgatLayer.init(d, n_heads, rng) for _ in range(n_layers - 1)],
                   [glorot(rng, d, d) for _ in range(n_heads)], dropout)


# ---------------------------------------------------------------------------
# HgAT


def _membership(incidence: Tensor) -> np.ndarray:
    return incidence.data > 0.5


def _prepend_axis(t: Tensor) -> Tensor:
    return ad.reshape(t, t.shape[:-1] + (1, t.shape[-1]))


def hgat_intra_edge(h, incidence, w0: Tensor) -> tuple[Tensor, Tensor]:
    """Attention-weighted aggregation of incident hypernodes into each hyperedge.

    Returns hyperedge features ``(..., m, d)`` and attention ``(..., m, n)``.
    Logits are the feature-sum of ReLU(h W0); empty hyperedges yield zeros.
    """
    h, inc = ad.const(h), ad.const(incidence)
    member = _membership(inc).T                       # m x n
    nonempty = member.any(axis=1)
    safe = member.copy()
    safe[~nonempty] = True
    wh = h @ w0
    scores = ad.sum_(ad.relu(wh), axis=-1)            # (..., n)
    logits = _prepend_axis(scores) + np.zeros(member.shape)
    alpha = ad.softmax(logits, safe) * nonempty[:, None]
    msg = (alpha * inc.T) @ wh
    return ad.sigmoid(msg) * nonempty[:, None], alpha


def hgat_inter_edge(h, h_edges, incidence, head: HgatHead) -> tuple[Tensor, Tensor]:
    """Update hypernodes from their incident hyperedges.

    Returns node features ``(..., n, d)`` and attention ``(..., n, m)``.
    """
    h, h_edges, inc = ad.const(h), ad.const(h_edges), ad.const(incidence)
    d = h.shape[-1]
    member = _membership(inc)                         # n x m
    has = member.any(axis=1)
    safe = member.copy()
    safe[~has] = True
    a = ad.reshape(head.w3[:d], (d, 1))
    c = ad.reshape(head.w3[d:], (d, 1))
    node_score = (h @ head.w2) @ a                    # (..., n, 1)
    edge_score = (h_edges @ head.w2) @ c              # (..., m, 1)
    phi = ad.relu(node_score + ad.transpose(edge_score))
    beta = ad.softmax(phi, safe) * has[:, None]
    msg = (beta * inc) @ (h_edges @ head.w1)
    return ad.relu(h @ head.w0 + msg), beta


def hgat_gate(h_out, x_bar, f_s: Tensor, f_g: Tensor) -> Tensor:
    h_out, x_bar = ad.const(h_out), ad.const(x_bar)
    g = ad.sigmoid(h_out @ f_s + x_bar @ f_g)
    return ad.sigmoid(g * h_out + (1.0 - g) * x_bar)


def hgat_layer(h, x_bar, incidence, layer: HgatLayer, dropout: float = 0.0,
               rng: Rng | None = None, trace: dict | None = None) -> Tensor:
    total = None
    alphas, betas = [], []
    for head in layer.heads:
        h_e, alpha = hgat_intra_edge(h, incidence, head.w0)
        h_n, beta = hgat_inter_edge(h, h_e, incidence, head)
        total = h_n if total is None else total + h_n
        alphas.append(alpha.data)
        betas.append(beta.data)
    if trace is not None:
        trace.setdefault("alpha", []).append(np.mean(alphas, axis=0))
        trace.setdefault("beta", []).append(np.mean(betas, axis=0))
    total = ad.dropout(total, dropout, rng)
    return hgat_gate(total, x_bar, layer.f_s, layer.f_g)


def hgat_encode(x_bar, incidence, params: HgatParams, rng: Rng | None = None,
                trace: dict | None = None) -> Tensor:
    h = ad.const(x_bar)
    for layer in params.layers:
        h = hgat_layer(h, x_bar, incidence, layer, params.dropout, rng, trace)
    return h


# ---------------------------------------------------------------------------
# HgT


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    lead, n, d = x.shape[:-2], x.shape[-2], x.shape[-1]
    k = len(lead)
    x = ad.reshape(x, lead + (n, n_heads, d // n_heads))
    return ad.transpose(x, tuple(range(k)) + (k + 1, k, k + 2))


def _merge_heads(x: Tensor) -> Tensor:
    lead, h, n, dh = x.shape[:-3], x.shape[-3], x.shape[-2], x.shape[-1]
    k = len(lead)
    x = ad.transpose(x, tuple(range(k)) + (k + 1, k, k + 2))
    return ad.reshape(x, lead + (n, h * dh))


def multi_head_attention(x, layer: HgtLayer, n_heads: int) -> tuple[Tensor, Tensor]:
    """Unmasked scaled dot-product self-attention over all hypernodes."""
    x = ad.const(x)
    d = x.shape[-1]
    if d % n_heads:
        raise ValueError(f"embedding size {d} not divisible by {n_heads} attention heads")
    q = _split_heads(x @ layer.wq, n_heads)
    k = _split_heads(x @ layer.wk, n_heads)
    v = _split_heads(x @ layer.wv, n_heads)
    att = ad.softmax((q @ ad.transpose(k)) * (1.0 / math.sqrt(d // n_heads)))
    return _merge_heads(att @ v) @ layer.wo, att


def mlp(x, layer: HgtLayer) -> Tensor:
    return ad.relu(x @ layer.mlp_w1 + layer.mlp_b1) @ layer.mlp_w2 + layer.mlp_b2


def hgt_layer(h, x_bar, layer: HgtLayer, n_heads: int, dropout: float = 0.0,
              rng: Rng | None = None, eps: float = 1e-5) -> Tensor:
    """Pre-LN block; the MLP residual adds the initial features, not the block input."""
    h = ad.const(h)
    att, _ = multi_head_attention(ad.layer_norm(h, layer.ln1_gain, layer.ln1_bias, eps), layer, n_heads)
    h1 = ad.dropout(att, dropout, rng) + h
    m = mlp(ad.layer_norm(h1, layer.ln2_gain, layer.ln2_bias, eps), layer)
    return ad.dropout(m, dropout, rng) + x_bar


def hgt_encode(x_bar, params: HgtParams, rng: Rng | None = None) -> Tensor:
    h = ad.const(x_bar)
    for layer in params.layers:
        h = hgt_layer(h, x_bar, layer, params.n_heads, params.dropout, rng, params.eps)
    return h


# ---------------------------------------------------------------------------
# fusion and dual branch


def fuse_imp(h_hgt, h_hgat, gate: FusionGateParams) -> Tensor:
    h_hgt, h_hgat = ad.const(h_hgt), ad.const(h_hgat)
    g = ad.sigmoid(h_hgt @ gate.f_s + h_hgat @ gate.f_g)
    return ad.sigmoid(g * h_hgt + (1.0 - g) * h_hgat)


def encode_dual(edge_features, dual_incidence, params: DualParams, rng: Rng | None = None) -> Tensor:
    """Hyperedge-level outputs of HgAT on the dual hypergraph: one row per original node.

    ``edge_features`` are the dual hypernode features ``(..., |E|, d)``;
    ``dual_incidence`` is the transposed graph incidence ``|E| x |V|``.
    """
    h = ad.const(edge_features)
    for layer in params.layers:
        h = hgat_layer(h, edge_features, dual_incidence, layer, params.dropout, rng)
    out = None
    for w0 in params.readout:
        h_e, _ = hgat_intra_edge(h, dual_incidence, w0)
        out = h_e if out is None else out + h_e
    return out
