import math
import zlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mkhnet import autodiff as ad
from mkhnet.autodiff import DomainError, NonFiniteError, Rng, Tensor

from conftest import param

PRIMITIVE_TOL = 1e-6


def weighted(out: Tensor, w: np.ndarray) -> Tensor:
    # a generic linear functional keeps every output entry on the path
    return ad.sum_(out * w)


def check(fn, *inputs, seed=0):
    rng = np.random.default_rng(seed)
    out_shape = fn(*inputs).shape
    w = rng.normal(size=out_shape)
    return ad.grad_check(lambda: weighted(fn(*inputs), w), inputs)


# ---------------------------------------------------------------------------
# forward values


def test_matmul_identity_and_hand_values():
    x = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(ad.matmul(np.eye(3), x).data, x)
    assert np.array_equal(ad.matmul([[1.0, 2.0], [3.0, 4.0]], [[1.0], [1.0]]).data, [[3.0], [7.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_scalar_elementwise_values():
    assert ad.sigmoid(Tensor(0.0)).item() == 0.5
    assert ad.relu(Tensor(-2.0)).item() == 0.0
    assert ad.relu(Tensor(3.0)).item() == 3.0
    x = param(0.0)
    ad.backward(ad.sigmoid(x), [x])
    assert x.grad == pytest.approx(0.25, abs=1e-15)


def test_log_domain_error():
    with pytest.raises(DomainError):
        ad.log(Tensor([1.0, 0.0]))
    with pytest.raises(DomainError):
        ad.log(Tensor(-1.0))


def test_non_finite_names_op():
    with pytest.raises(NonFiniteError, match="exp"):
        ad.exp(Tensor(1000.0))


def test_softmax_hand_values():
    assert np.allclose(ad.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5], atol=0, rtol=1e-15)
    assert np.allclose(ad.softmax(Tensor([math.log(2), 0.0])).data, [2 / 3, 1 / 3], rtol=1e-14)


def test_softmax_mask_and_degenerate_row():
    s = ad.softmax(Tensor([[1.0, 2.0, 3.0]]), mask=np.array([[True, False, True]]))
    assert s.data[0, 1] == 0.0
    assert s.data.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError, match="fully-masked"):
        ad.softmax(Tensor([[1.0, 2.0]]), mask=np.array([[False, False]]))


def test_reductions_and_concat():
    assert ad.sum_(Tensor([1.0, 2.0, 3.0])).item() == 6.0
    x = np.array([[1.5], [2.5]])
    assert np.array_equal(ad.mean(Tensor(x), axis=1, keepdims=True).data, x)
    assert np.array_equal(ad.concat([Tensor([1.0]), Tensor([2.0])]).data, [1.0, 2.0])
    assert ad.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((2, 5)))], axis=1).shape == (2, 8)


def test_layer_norm_constant_row_and_oracle(nrng):
    out = ad.layer_norm(Tensor(np.full((1, 4), 3.0)), np.ones(4), np.zeros(4))
    assert np.array_equal(out.data, np.zeros((1, 4)))
    x, g, b = nrng.normal(size=(3, 5)), nrng.normal(size=5), nrng.normal(size=5)
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    expect = (x - mu) / np.sqrt(var + 1e-5) * g + b
    assert np.max(np.abs(ad.layer_norm(Tensor(x), g, b).data - expect)) < 1e-12


# ---------------------------------------------------------------------------
# gradients of every primitive


@pytest.mark.parametrize("name,fn,shapes", [
    ("add", ad.add, [(3, 4), (4,)]),
    ("sub", ad.sub, [(3, 1), (3, 4)]),
    ("mul", ad.mul, [(2, 3, 4), (3, 4)]),
    ("matmul", ad.matmul, [(4, 3), (3, 2)]),
    ("matmul_batched", ad.matmul, [(2, 4, 3), (3, 2)]),
    ("neg", ad.neg, [(3,)]),
    ("exp", ad.exp, [(3, 2)]),
    ("sigmoid", ad.sigmoid, [(5,)]),
    ("softplus", ad.softplus, [(5,)]),
    ("sum_axis", lambda a: ad.sum_(a, axis=1), [(3, 4)]),
    ("mean", ad.mean, [(3, 4)]),
    ("mean_axis", lambda a: ad.mean(a, axis=0, keepdims=True), [(3, 4)]),
    ("reshape", lambda a: ad.reshape(a, (6, 2)), [(3, 4)]),
    ("transpose", lambda a: ad.transpose(a, (1, 2, 0)), [(2, 3, 4)]),
    ("concat", lambda a, b: ad.concat([a, b], axis=1), [(2, 3), (2, 5)]),
    ("getitem", lambda a: a[:, 1:3], [(3, 4)]),
    ("getitem_repeat", lambda a: a[[0, 0, 2]], [(3, 2)]),
    ("softmax", ad.softmax, [(3, 4)]),
    ("softmax_masked", lambda a: ad.softmax(a, np.array([True, False, True, True])), [(3, 4)]),
    ("layer_norm", ad.layer_norm, [(3, 5), (5,), (5,)]),
])
def test_primitive_gradients(name, fn, shapes):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    inputs = [param(rng.normal(size=s)) for s in shapes]
    assert check(fn, *inputs) < PRIMITIVE_TOL, name


@pytest.mark.parametrize("name,fn", [
    ("div", ad.div), ("log", lambda a, b: ad.log(a) * b), ("sqrt", lambda a, b: ad.sqrt(a) + b),
])
def test_positive_domain_gradients(name, fn):
    rng = np.random.default_rng(7)
    a, b = param(rng.uniform(0.5, 2.0, (3, 4))), param(rng.uniform(0.5, 2.0, (3, 4)))
    assert check(fn, a, b) < PRIMITIVE_TOL


def test_kinked_gradients_away_from_kinks():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.2, 1.0, (4, 3)) * rng.choice([-1.0, 1.0], (4, 3))
    assert check(ad.relu, param(x)) < PRIMITIVE_TOL
    assert check(ad.abs_, param(x)) < PRIMITIVE_TOL
    assert check(lambda a: ad.clip(a, -0.5, 0.5), param(x)) < PRIMITIVE_TOL


def test_straight_through_uses_soft_gradient():
    soft_in = param([0.3, -0.2])
    out = ad.straight_through(np.array([1.0, 0.0]), ad.sigmoid(soft_in))
    assert np.array_equal(out.data, [1.0, 0.0])
    (g,) = ad.backward(ad.sum_(out), [soft_in])
    s = 1 / (1 + np.exp(-soft_in.data))
    assert np.allclose(g, s * (1 - s), rtol=1e-15)


def test_dropout_identity_without_rng_and_scaled_with():
    x = Tensor(np.ones((50, 50)))
    assert ad.dropout(x, 0.5, None) is x
    y = ad.dropout(x, 0.5, Rng(0)).data
    assert set(np.unique(y)) <= {0.0, 2.0}


# ---------------------------------------------------------------------------
# engine


def test_power_rule_and_unreached_param():
    x, unused = param(3.0), param(1.0)
    gx, gu = ad.backward(x * x, [x, unused])
    assert gx == 6.0
    assert np.array_equal(gu, np.zeros(()))


def test_non_scalar_loss_rejected():
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(param([1.0, 2.0]) * 2.0)


def test_shared_subexpression_accumulates():
    x = param(2.0)
    y = x * x
    (g,) = ad.backward(y * y + y, [x])      # x^4 + x^2
    assert g == pytest.approx(4 * 8 + 4, abs=0)


def test_topological_order_parents_first():
    a, b = param(1.0), param(2.0)
    c = a * b
    d = c + a
    order = ad.topological_order(d)
    pos = {id(t): i for i, t in enumerate(order)}
    for node in order:
        for p in node.parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(node)]
    assert len(order) == len({id(t) for t in order})


def test_grad_check_identity_and_sigmoid_chain():
    # dyadic values and step make the central difference of the identity exact
    x = param([0.25, -1.5, 2.0])
    assert ad.grad_check(lambda: ad.sum_(x), [x], eps=2.0 ** -16) == 0.0
    x = param([0.3, -1.2, 2.0])
    assert ad.grad_check(lambda: ad.sum_(ad.sigmoid(ad.sigmoid(x) * 3.0)), [x]) < 1e-7


def test_deep_chain_does_not_recurse():
    x = param(1.0)
    y = x
    for _ in range(5000):
        y = y * 1.0
    (g,) = ad.backward(y, [x])
    assert g == 1.0


# ---------------------------------------------------------------------------
# properties

finite = st.floats(-20, 20, allow_nan=False)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite))
def test_softmax_rows_sum_to_one(x):
    s = ad.softmax(Tensor(x)).data
    assert np.all((s >= 0) & (s <= 1))
    assert np.max(np.abs(s.sum(axis=-1) - 1.0)) < 1e-9


@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-700, 700)))
def test_stable_ops_stay_finite(x):
    for op in (ad.sigmoid, ad.softplus, ad.relu, ad.abs_, ad.softmax):
        assert np.all(np.isfinite(op(Tensor(x)).data))


@given(st.integers(0, 2**32 - 1))
def test_backward_deterministic(seed):
    def run():
        rng = Rng(seed)
        w = param(rng.normal((3, 3)))
        x = rng.normal((4, 3))
        loss = ad.sum_(ad.softmax(ad.matmul(x, w)) * rng.normal((4, 3)))
        return ad.backward(loss, [w])[0]
    assert np.array_equal(run(), run())


@given(st.integers(0, 2**32 - 1), st.integers(0, 50))
def test_rng_reproducible(seed, key):
    a, b = Rng(seed), Rng(seed)
    assert np.array_equal(a.normal(5), b.normal(5))
    assert np.array_equal(a.child(key).uniform(3), b.child(key).uniform(3))
    assert np.all(np.isfinite(a.gumbel(100)))
