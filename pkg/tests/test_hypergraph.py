import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from mkhnet import autodiff as ad
from mkhnet.autodiff import Rng, Tensor
from mkhnet.graphs import ExplicitGraph, edge_endpoint_mean_operator
from mkhnet.hypergraph_encoder import (DualParams, FusionGateParams, HgatHead, HgatLayer, HgatParams,
                                       HgtLayer, HgtParams, encode_dual, fuse_imp, hgat_encode,
                                       hgat_gate, hgat_inter_edge, hgat_intra_edge, hgat_layer,
                                       hgt_encode, hgt_layer, multi_head_attention)
from mkhnet.hypergraph_inference import (EmbeddingBank, GumbelConfig, gumbel_channels,
                                         gumbel_sample_incidence, hyperedge_probabilities,
                                         infer_incidence, pairwise_similarity, threshold_incidence)

ORACLE_TOL = 1e-10


def random_incidence(rng, n, m, p=0.5):
    inc = (rng.uniform(size=(n, m)) < p).astype(float)
    inc[0, :] = 1.0          # every hyperedge non-empty unless a test wants otherwise
    return inc


def head_arrays(head: HgatHead):
    return head.w0.data, head.w1.data, head.w2.data, head.w3.data


def hgt_arrays(layer: HgtLayer):
    return {k: getattr(layer, k).data for k in
            ("ln1_gain", "ln1_bias", "wq", "wk", "wv", "wo", "ln2_gain", "ln2_bias",
             "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2")}


def randomize(params, rng):
    # move gains/biases away from their init so the oracle sees generic values
    for _, p in ad_named(params):
        p.data[...] = rng.normal(size=p.shape) * 0.5 + (1.0 if p.data.mean() == 1.0 else 0.0)
    return params


def ad_named(obj):
    from mkhnet.params import named_parameters
    return named_parameters(obj)


# ---------------------------------------------------------------------------
# structure inference


def test_similarity_reference_points():
    u = np.array([[0.6, 0.8]])
    assert pairwise_similarity(u, u).data[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert pairwise_similarity(u, np.array([[-0.8, 0.6]])).data[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert pairwise_similarity(u, -u).data[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_probability_channels():
    pc, pn = hyperedge_probabilities(np.array([[0.5, 1.0]]))
    assert pc.data[0, 0] == pn.data[0, 0] == pytest.approx(0.62246, abs=5e-6)
    assert pc.data[0, 1] == pytest.approx(0.73106, abs=5e-6)
    assert pn.data[0, 1] == 0.5


def test_gumbel_zero_noise_cases():
    soft, _ = gumbel_channels(np.array([0.3]), np.array([0.3]), 0.05, None)
    assert soft.data[0] == 0.5
    soft, _ = gumbel_channels(np.array([0.7]), np.array([0.5]), 0.05, None)
    assert soft.data[0] == pytest.approx(1 / (1 + math.exp(-4.0)), abs=1e-12)
    assert soft.data[0] == pytest.approx(0.98201, abs=5e-6)


def test_gumbel_temperature_must_be_positive():
    with pytest.raises(ValueError):
        GumbelConfig(temperature=0.0)


@given(st.integers(0, 10**6), st.floats(0.01, 5.0))
def test_gumbel_channels_sum_to_one(seed, temp):
    rng = np.random.default_rng(seed)
    pc, pn = rng.uniform(0.5, 0.75, (4, 3)), rng.uniform(0.5, 0.75, (4, 3))
    r = Rng(seed)
    a, b = gumbel_channels(pc, pn, temp, (r.gumbel((4, 3)), r.gumbel((4, 3))))
    assert np.max(np.abs(a.data + b.data - 1.0)) < 1e-12
    soft = gumbel_sample_incidence(pc, pn, GumbelConfig(temp, hard=False), Rng(seed)).data
    assert np.all((soft >= 0) & (soft <= 1))
    hard = gumbel_sample_incidence(pc, pn, GumbelConfig(temp, hard=True), Rng(seed)).data
    assert set(np.unique(hard)) <= {0.0, 1.0}
    again = gumbel_sample_incidence(pc, pn, GumbelConfig(temp, hard=True), Rng(seed)).data
    assert np.array_equal(hard, again)


def test_gumbel_argmax_frequency():
    # Gumbel-max: P(channel 0 wins) = sigmoid(P0 - P1), whatever the temperature
    draws = 10_000
    pc, pn = np.full((draws, 1), 0.73106), np.full((draws, 1), 0.5)
    hard = gumbel_sample_incidence(pc, pn, GumbelConfig(0.05, hard=True), Rng(99)).data
    p = 1 / (1 + math.exp(-(0.73106 - 0.5)))
    se = math.sqrt(p * (1 - p) / draws)
    assert abs(hard.mean() - p) <= 3 * se


def test_gradient_reaches_embeddings_through_hard_sampling():
    bank = EmbeddingBank.init(5, 3, 4, Rng(0))
    inc = infer_incidence(bank, GumbelConfig(0.5, hard=True), train=True, rng=Rng(1))
    w = np.random.default_rng(0).normal(size=inc.shape)
    gn, ge = ad.backward(ad.sum_(inc * w), [bank.z_node, bank.z_edge])
    assert np.linalg.norm(gn) > 0 and np.linalg.norm(ge) > 0


def test_eval_incidence_is_threshold():
    bank = EmbeddingBank.init(6, 4, 5, Rng(3))
    inc = infer_incidence(bank, GumbelConfig(), train=False, rng=None).data
    pc, pn = hyperedge_probabilities(pairwise_similarity(bank.z_node, bank.z_edge))
    assert np.array_equal(inc, threshold_incidence(pc, pn))
    assert np.array_equal(inc, (pairwise_similarity(bank.z_node, bank.z_edge).data > 0.5).astype(float))


# ---------------------------------------------------------------------------
# HgAT


def test_intra_edge_symmetric_pair():
    h = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 3.0]])
    inc = np.array([[1.0], [1.0], [0.0]])
    _, alpha = hgat_intra_edge(h, inc, Tensor(np.eye(2)))
    assert np.allclose(alpha.data, [[0.5, 0.5, 0.0]], rtol=0, atol=1e-15)


def test_intra_edge_empty_hyperedge_is_zero():
    h = np.random.default_rng(0).normal(size=(3, 2))
    inc = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    e, alpha = hgat_intra_edge(h, inc, Tensor(np.eye(2)))
    assert np.array_equal(e.data[1], [0.0, 0.0]) and not alpha.data[1].any()


def test_inter_edge_singleton_and_uniform():
    rng = np.random.default_rng(1)
    head = HgatHead.init(3, Rng(0))
    h, he = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    inc = np.array([[1.0, 0.0], [1.0, 1.0]])
    _, beta = hgat_inter_edge(h, he, inc, head)
    assert beta.data[0, 0] == 1.0
    head.w3.data[...] = 0.0
    _, beta = hgat_inter_edge(h, he, inc, head)
    assert np.array_equal(beta.data[1], [0.5, 0.5])


def test_inter_edge_isolated_node():
    head = HgatHead.init(3, Rng(0))
    h = np.random.default_rng(2).normal(size=(2, 3))
    inc = np.array([[1.0], [0.0]])
    out, beta = hgat_inter_edge(h, np.ones((1, 3)), inc, head)
    assert np.allclose(out.data[1], np.maximum(h[1] @ head.w0.data, 0), rtol=0, atol=1e-15)
    assert not beta.data[1].any()


def test_hgat_gate_cases():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    z = Tensor(np.zeros((3, 3)))
    assert np.allclose(hgat_gate(a, b, z, z).data, oracles.sigmoid(0.5 * (a + b)), rtol=0, atol=1e-15)
    f = Tensor(rng.normal(size=(3, 3)))
    assert np.allclose(hgat_gate(a, a, f, f).data, oracles.sigmoid(a), rtol=0, atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_intra_inter_match_oracle(seed):
    rng = np.random.default_rng(seed)
    n, m, d = 5, 3, 4
    h = rng.normal(size=(n, d))
    inc = random_incidence(rng, n, m)
    inc[2] = 0.0                      # an isolated hypernode
    head = HgatHead.init(d, Rng(seed))
    e, alpha = hgat_intra_edge(h, inc, head.w0)
    e_ref, alpha_ref = oracles.hgat_intra(h, inc, head.w0.data)
    assert np.max(np.abs(e.data - e_ref)) < ORACLE_TOL
    assert np.max(np.abs(alpha.data - alpha_ref)) < ORACLE_TOL
    nodes, beta = hgat_inter_edge(h, e_ref, inc, head)
    nodes_ref, beta_ref = oracles.hgat_inter(h, e_ref, inc, *head_arrays(head))
    assert np.max(np.abs(nodes.data - nodes_ref)) < ORACLE_TOL
    assert np.max(np.abs(beta.data - beta_ref)) < ORACLE_TOL


def test_soft_incidence_weights_messages():
    rng = np.random.default_rng(8)
    h = rng.normal(size=(4, 3))
    inc = np.array([[0.9, 0.6], [0.7, 0.2], [0.55, 0.95], [0.1, 0.8]])
    head = HgatHead.init(3, Rng(2))
    e, _ = hgat_intra_edge(h, inc, head.w0)
    e_ref, _ = oracles.hgat_intra(h, inc, head.w0.data)
    assert np.max(np.abs(e.data - e_ref)) < ORACLE_TOL


def test_hgat_layer_matches_oracle_batched():
    rng = np.random.default_rng(4)
    n, m, d = 5, 3, 4
    layer = HgatLayer.init(d, 2, Rng(4))
    x = rng.normal(size=(2, n, d))
    inc = random_incidence(rng, n, m)
    out = hgat_layer(x, x, inc, layer).data
    heads = [head_arrays(hd) for hd in layer.heads]
    for b in range(2):
        ref = oracles.hgat_layer(x[b], x[b], inc, heads, layer.f_s.data, layer.f_g.data)
        assert np.max(np.abs(out[b] - ref)) < ORACLE_TOL


@given(st.integers(0, 10**6))
def test_attention_rows_and_gate_range(seed):
    rng = np.random.default_rng(seed)
    n, m, d = 6, 4, 3
    inc = (rng.uniform(size=(n, m)) < 0.5).astype(float)
    layer = HgatLayer.init(d, 2, Rng(seed))
    x = rng.normal(size=(n, d))
    trace = {}
    out = hgat_layer(x, x, inc, layer, trace=trace).data
    alpha, beta = trace["alpha"][0], trace["beta"][0]
    ne, has = inc.any(axis=0), inc.any(axis=1)
    assert np.max(np.abs(alpha.sum(axis=1)[ne] - 1)) < 1e-9
    assert np.max(np.abs(beta.sum(axis=1)[has] - 1)) < 1e-9
    assert np.all(alpha[~inc.T.astype(bool)] == 0) and np.all(beta[~inc.astype(bool)] == 0)
    assert np.all((out > 0) & (out < 1))
    h2 = rng.normal(size=(n, d))
    fused = fuse_imp(out, h2, FusionGateParams.init(d, Rng(seed))).data
    assert np.all((fused > 0) & (fused < 1))


@given(st.integers(0, 10**6))
def test_hgat_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    n, m, d = 6, 3, 4
    params = HgatParams.init(d, 2, 2, Rng(seed), dropout=0.0)
    x = rng.normal(size=(n, d))
    inc = random_incidence(rng, n, m)
    perm = rng.permutation(n)
    out = hgat_encode(x, inc, params).data
    out_p = hgat_encode(x[perm], inc[perm], params).data
    assert np.max(np.abs(out[perm] - out_p)) < 1e-10


def test_hgat_eval_is_deterministic():
    rng = np.random.default_rng(0)
    params = HgatParams.init(4, 2, 1, Rng(0), dropout=0.5)
    x, inc = rng.normal(size=(5, 4)), random_incidence(rng, 5, 3)
    assert np.array_equal(hgat_encode(x, inc, params, None).data, hgat_encode(x, inc, params, None).data)


# ---------------------------------------------------------------------------
# HgT


@pytest.mark.parametrize("seed", range(3))
def test_hgt_layer_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    d, n_heads = 8, 2
    layer = randomize(HgtLayer.init(d, Rng(seed)), rng)
    h, x_bar = rng.normal(size=(4, d)), rng.normal(size=(4, d))
    out = hgt_layer(h, x_bar, layer, n_heads).data
    assert np.max(np.abs(out - oracles.hgt_layer(h, x_bar, hgt_arrays(layer), n_heads))) < ORACLE_TOL


def test_hgt_attention_rows_sum_to_one():
    rng = np.random.default_rng(1)
    layer = HgtLayer.init(8, Rng(1))
    _, att = multi_head_attention(rng.normal(size=(3, 5, 8)), layer, 4)
    assert att.shape == (3, 4, 5, 5)
    assert np.max(np.abs(att.data.sum(axis=-1) - 1)) < 1e-9


def test_hgt_head_count_must_divide_d():
    with pytest.raises(ValueError):
        HgtParams.init(6, 4, 1, Rng(0))


@given(st.integers(0, 10**6))
def test_hgt_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    params = HgtParams.init(8, 2, 2, Rng(seed), dropout=0.0)
    x = rng.normal(size=(5, 8))
    perm = rng.permutation(5)
    assert np.max(np.abs(hgt_encode(x, params).data[perm] - hgt_encode(x[perm], params).data)) < 1e-10


def test_fusion_cases_and_oracle():
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
    zero = FusionGateParams(Tensor(np.zeros((4, 4))), Tensor(np.zeros((4, 4))))
    assert np.allclose(fuse_imp(a, b, zero).data, oracles.sigmoid(0.5 * (a + b)), rtol=0, atol=1e-15)
    g = FusionGateParams.init(4, Rng(6))
    assert np.allclose(fuse_imp(a, a, g).data, oracles.sigmoid(a), rtol=0, atol=1e-15)
    ref = oracles.gate(a, b, g.f_s.data, g.f_g.data)
    assert np.max(np.abs(fuse_imp(a, b, g).data - ref)) < ORACLE_TOL


# ---------------------------------------------------------------------------
# dual hypergraph branch


def dual_oracle(x_nodes, g, params: DualParams):
    m_op = edge_endpoint_mean_operator(g)
    feats = m_op @ x_nodes
    inc = g.incidence.T.astype(float)
    h = feats
    for layer in params.layers:
        heads = [head_arrays(hd) for hd in layer.heads]
        h = oracles.hgat_layer(h, feats, inc, heads, layer.f_s.data, layer.f_g.data)
    return sum(oracles.hgat_intra(h, inc, w0.data)[0] for w0 in params.readout)


@pytest.mark.parametrize("layers", [1, 2])
def test_dual_branch_triangle_oracle(layers):
    g = ExplicitGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    params = DualParams.init(4, 2, layers, Rng(layers), dropout=0.0)
    x = np.random.default_rng(layers).normal(size=(3, 4))
    feats = edge_endpoint_mean_operator(g) @ x
    out = encode_dual(feats, Tensor(g.incidence.T.astype(float)), params).data
    assert out.shape == (3, 4)
    assert np.max(np.abs(out - dual_oracle(x, g, params))) < ORACLE_TOL


def test_dual_branch_isolated_node_is_zero():
    g = ExplicitGraph.from_edges(4, [(0, 1), (1, 2)])
    params = DualParams.init(3, 1, 2, Rng(0), dropout=0.0)
    feats = edge_endpoint_mean_operator(g) @ np.random.default_rng(0).normal(size=(4, 3))
    out = encode_dual(feats, Tensor(g.incidence.T.astype(float)), params).data
    assert np.array_equal(out[3], np.zeros(3))


# ---------------------------------------------------------------------------
# gradients


def test_hgat_hgt_end_to_end_gradients():
    rng = np.random.default_rng(0)
    n, m, d = 5, 3, 4
    hgat = HgatParams.init(d, 2, 1, Rng(0), dropout=0.0)
    hgt = HgtParams.init(d, 2, 1, Rng(1), dropout=0.0)
    randomize(hgt, rng)
    fuse = FusionGateParams.init(d, Rng(2))
    x = rng.normal(size=(n, d))
    inc = random_incidence(rng, n, m)
    w = rng.normal(size=(n, d))

    def f():
        return ad.sum_(fuse_imp(hgt_encode(x, hgt), hgat_encode(x, inc, hgat), fuse) * w)

    params = [p for _, p in ad_named([hgat, hgt, fuse])]
    assert ad.grad_check(f, params) < 1e-4
