"""Explicit graphs, hypergraphs, the dual-hypergraph transform and subgraph patches."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Rng


class GraphFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ExplicitGraph:
    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[tuple[int, int]]) -> "ExplicitGraph":
        clean = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise GraphFormatError(f"self-loop at node {u}")
            if not (0 <= u < n_nodes and 0 <= v < n_nodes):
                raise GraphFormatError(f"edge ({u},{v}) out of range for {n_nodes} nodes")
            clean.add((min(u, v), max(u, v)))
        return cls(n_nodes, tuple(sorted(clean)))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        for u, v in self.edges:
            a[u, v] = a[v, u] = True
        return a

    @property
    def incidence(self) -> np.ndarray:
        inc = np.zeros((self.n_nodes, self.n_edges), dtype=bool)
        for j, (u, v) in enumerate(self.edges):
            inc[u, j] = inc[v, j] = True
        return inc

    def neighbors(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            nb[u].append(v)
            nb[v].append(u)
        return nb


@dataclass(frozen=True)
class Hypergraph:
    incidence: np.ndarray   # n_hypernodes x m_hyperedges

    @property
    def n_hypernodes(self) -> int:
        return self.incidence.shape[0]

    @property
    def m_hyperedges(self) -> int:
        return self.incidence.shape[1]


@dataclass(frozen=True)
class DualHypergraph:
    """Edges of the source graph as hypernodes, its nodes as hyperedges."""

    hypergraph: Hypergraph
    hypernode_features: np.ndarray | None = None   # |E| x d
    hyperedge_features: np.ndarray | None = None   # |V| x d

    @property
    def incidence(self) -> np.ndarray:
        return self.hypergraph.incidence


@dataclass(frozen=True)
class SubgraphPatch:
    core_nodes: tuple[int, ...]
    expanded_nodes: tuple[int, ...]            # sorted; position = local id
    edge_list: tuple[tuple[int, int], ...]      # original ids

    @property
    def local_index(self) -> dict[int, int]:
        return {u: i for i, u in enumerate(self.expanded_nodes)}

    def local_graph(self) -> ExplicitGraph:
        li = self.local_index
        return ExplicitGraph(len(self.expanded_nodes),
                             tuple((li[u], li[v]) for u, v in self.edge_list))


def load_edge_list(path: str | Path, n_nodes: int) -> ExplicitGraph:
    """Lines ``u,v`` or ``u,v,w`` with 0-based ids; weights only mark presence."""
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3):
            raise GraphFormatError(f"{path}:{lineno}: expected 'u,v' or 'u,v,w', got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {raw!r}") from None
        if u == v:
            raise GraphFormatError(f"{path}:{lineno}: self-loop at node {u}")
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise GraphFormatError(f"{path}:{lineno}: node id out of range [0, {n_nodes})")
        edges.append((u, v))
    return ExplicitGraph.from_edges(n_nodes, edges)


def save_edge_list(g: ExplicitGraph, path: str | Path) -> None:
    Path(path).write_text("".join(f"{u},{v}\n" for u, v in g.edges))


def dht_transform(g: ExplicitGraph, node_features: np.ndarray | None = None) -> DualHypergraph:
    """Transpose the incidence; edge features start as the mean of their endpoints."""
    if g.n_edges == 0:
        raise GraphFormatError("dual hypergraph transform needs at least one edge")
    inc_t = g.incidence.T.copy()
    edge_feats = None
    if node_features is not None:
        x = np.asarray(node_features)
        edge_feats = np.stack([(x[u] + x[v]) / 2.0 for u, v in g.edges])
    return DualHypergraph(Hypergraph(inc_t), edge_feats, node_features)


def edge_endpoint_mean_operator(g: ExplicitGraph) -> np.ndarray:
    """|E| x |V| matrix M with (M X)[e] = mean of e's endpoint rows of X."""
    return g.incidence.T.astype(float) / 2.0


def p_hop_neighborhood(g: ExplicitGraph, nodes: Iterable[int], p: int) -> set[int]:
    nb = g.neighbors()
    dist = {u: 0 for u in nodes}
    queue = deque(dist)
    while queue:
        u = queue.popleft()
        if dist[u] == p:
            continue
        for w in nb[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return set(dist)


def extract_patches(g: ExplicitGraph, k: int, p: int) -> list[SubgraphPatch]:
    """k consecutive id blocks (last absorbs the remainder), each grown by p hops."""
    n = g.n_nodes
    if not 1 <= k <= n:
        raise ValueError(f"patch count k={k} must lie in [1, {n}]")
    if p < 0:
        raise ValueError("p must be >= 0")
    size = n // k
    patches = []
    for i in range(k):
        core = tuple(range(i * size, n if i == k - 1 else (i + 1) * size))
        expanded = sorted(p_hop_neighborhood(g, core, p))
        inside = set(expanded)
        edges = tuple(e for e in g.edges if e[0] in inside and e[1] in inside)
        patches.append(SubgraphPatch(core, tuple(expanded), edges))
    return patches


def normalized_adjacency(g: ExplicitGraph | SubgraphPatch) -> np.ndarray:
    """D^{-1/2} (A + I) D^{-1/2}."""
    if isinstance(g, SubgraphPatch):
        g = g.local_graph()
    a = g.adjacency.astype(float) + np.eye(g.n_nodes)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


def random_sensor_graph(n: int, rng: Rng, extra_edges: int | None = None) -> ExplicitGraph:
    """Connected test graph: a ring plus random chords between nearby ids."""
    edges = [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(0, 1)] if n == 2 else []
    extra = n // 2 if extra_edges is None else extra_edges
    for _ in range(extra):
        u = int(rng.integers(0, n))
        v = (u + int(rng.integers(2, max(3, n // 3 + 1)))) % n
        if u != v:
            edges.append((u, v))
    return ExplicitGraph.from_edges(n, edges)


def subgraph_induced_correct(g: ExplicitGraph, patch: SubgraphPatch) -> bool:
    inside = set(patch.expanded_nodes)
    expected = {e for e in g.edges if e[0] in inside and e[1] in inside}
    return expected == set(patch.edge_list)


def cores_partition(patches: Sequence[SubgraphPatch], n: int) -> bool:
    seen: list[int] = [u for pt in patches for u in pt.core_nodes]
    return sorted(seen) == list(range(n))
