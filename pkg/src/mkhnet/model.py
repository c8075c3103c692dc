"""The full forecaster: projection, three spatial branches, MoE fusion, heads."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .graphs import ExplicitGraph, edge_endpoint_mean_operator, extract_patches
from .hypergraph_encoder import (DualParams, FusionGateParams, HgatParams, HgtParams,
                                 encode_dual, fuse_imp, hgat_encode, hgt_encode)
from .hypergraph_inference import EmbeddingBank, GumbelConfig, infer_incidence, threshold_incidence, \
    hyperedge_probabilities, pairwise_similarity
from .params import named_parameters
from .projection import ProjectionParams, glu_project
from .subgraph_encoder import PatchPlan, SgrlParams, encode_subgraphs
from .temporal_head import (MoeGateParams, TemporalParams, moe_fuse, moe_gate, point_forecast,
                            temporal_conv_stack, uncertainty_forecast)


@dataclass(frozen=True)
class ModelConfig:
    n_nodes: int
    tau: int = 12
    horizon: int = 12
    d: int = 16
    m_hyperedges: int = 8
    k_patches: int = 4
    p_hops: int = 2
    hgat_heads: int = 4
    hgat_layers: int = 1
    hgt_heads: int = 4
    hgt_layers: int = 2
    dropout: float = 0.1
    temperature: float = 0.05
    hard_sampling: bool = True
    uncertainty: bool = False
    spatial: bool = True   # False: every spatial branch is the identity on the projected features

    def __post_init__(self):
        for f in ("n_nodes", "tau", "horizon", "d", "m_hyperedges", "k_patches", "p_hops",
                  "hgat_heads", "hgat_layers", "hgt_heads"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1")
        if self.d % self.hgt_heads:
            raise ValueError(f"d={self.d} not divisible by hgt_heads={self.hgt_heads}")
        if self.k_patches > self.n_nodes:
            raise ValueError(f"k_patches={self.k_patches} exceeds n_nodes={self.n_nodes}")


@dataclass
class MKHNetParams:
    projection: ProjectionParams
    embeddings: EmbeddingBank | None
    hgat: HgatParams | None
    hgt: HgtParams | None
    fusion: FusionGateParams | None
    sgrl: SgrlParams | None
    dual: DualParams | None
    moe: MoeGateParams
    temporal: TemporalParams


@dataclass
class ForecastOutput:
    mean: Tensor              # (..., n, horizon), normalised scale
    var: Tensor | None = None


class MKHNet:
    def __init__(self, cfg: ModelConfig, graph: ExplicitGraph, seed: int = 0):
        if graph.n_nodes != cfg.n_nodes:
            raise ValueError(f"graph has {graph.n_nodes} nodes, config expects {cfg.n_nodes}")
        self.cfg = cfg
        self.graph = graph
        self.gumbel = GumbelConfig(cfg.temperature, cfg.hard_sampling)
        rng = Rng(seed)
        d, n = cfg.d, cfg.n_nodes
        spatial = cfg.spatial
        self.params = MKHNetParams(
            projection=ProjectionParams.init(cfg.tau, d, rng),
            embeddings=EmbeddingBank.init(n, cfg.m_hyperedges, d, rng) if spatial else None,
            hgat=HgatParams.init(d, cfg.hgat_heads, cfg.hgat_layers, rng, cfg.dropout) if spatial else None,
            hgt=HgtParams.init(d, cfg.hgt_heads, cfg.hgt_layers, rng, cfg.dropout) if spatial else None,
            fusion=FusionGateParams.init(d, rng) if spatial else None,
            sgrl=SgrlParams.init(d, cfg.p_hops, rng) if spatial else None,
            dual=DualParams.init(d, cfg.hgat_heads, cfg.hgat_layers, rng, cfg.dropout) if spatial else None,
            moe=MoeGateParams.init(d, rng),
            temporal=TemporalParams.init(d, cfg.horizon, rng, cfg.uncertainty),
        )
        if spatial:
            if graph.n_edges == 0:
                raise ValueError("the dual-hypergraph branch needs a graph with at least one edge")
            self.patch_plan = PatchPlan(extract_patches(graph, cfg.k_patches, cfg.p_hops), n)
            self.dual_incidence = Tensor(graph.incidence.T.astype(float))
            self.edge_mean = edge_endpoint_mean_operator(graph)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return named_parameters(self.params)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing, extra = set(own) - set(state), set(state) - set(own)
            raise KeyError(f"parameter mismatch; missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, p in own.items():
            if p.data.shape != state[k].shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.data.shape}")
            p.data[...] = state[k]

    def hard_incidence(self) -> np.ndarray:
        """Noise-free structure used at evaluation (n x m of 0/1)."""
        emb = self.params.embeddings
        if emb is None:
            raise ValueError("model has no hypergraph branch")
        return threshold_incidence(*hyperedge_probabilities(pairwise_similarity(emb.z_node, emb.z_edge)))

    def forward(self, x, *, train: bool = False, rng: Rng | None = None,
                trace: dict | None = None) -> ForecastOutput:
        """``x``: normalised windows ``(..., n, tau)``.

        ``train`` enables Gumbel sampling and dropout, both drawn from ``rng``;
        with ``rng=None`` the sampling noise is zero and dropout is off.
        """
        p = self.params
        x_bar = glu_project(x, p.projection)
        drop_rng = rng if train else None
        if self.cfg.spatial:
            inc = infer_incidence(p.embeddings, self.gumbel, train=train, rng=rng if train else None)
            h_hgat = hgat_encode(x_bar, inc, p.hgat, drop_rng, trace)
            h_hgt = hgt_encode(x_bar, p.hgt, drop_rng)
            h_imp = fuse_imp(h_hgt, h_hgat, p.fusion)
            h_sub = encode_subgraphs(x_bar, self.patch_plan, p.sgrl)
            edge_feats = ad.matmul(ad.const(self.edge_mean), x_bar)
            h_dht = encode_dual(edge_feats, self.dual_incidence, p.dual, drop_rng)
            if trace is not None:
                trace["incidence"] = inc.data.copy()
        else:
            h_imp = h_sub = h_dht = x_bar
        h = moe_fuse(h_imp, h_sub, h_dht, p.moe)
        if trace is not None:
            trace["gates"] = moe_gate(h_imp, h_sub, h_dht, p.moe).data.copy()
        feats = temporal_conv_stack(h, p.temporal)
        if p.temporal.uncertainty:
            mu, var = uncertainty_forecast(feats, p.temporal)
            return ForecastOutput(mu, var)
        return ForecastOutput(point_forecast(feats, p.temporal))

    def predict(self, x) -> tuple[np.ndarray, np.ndarray | None]:
        out = self.forward(x, train=False)
        return out.mean.data, None if out.var is None else out.var.data


def config_fields() -> list[str]:
    return [f.name for f in fields(ModelConfig)]
