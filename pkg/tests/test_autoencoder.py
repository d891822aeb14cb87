import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gae.autoencoder import (KL_CLAMP, LayerParams, TrainConfig, decode, encode,
                             gae_gradient, gae_objective, kl_penalty, loss_and_grad,
                             reconstruction_error, sae_gradient, sae_objective, sigmoid,
                             train_layer)
from gae.graph import build_knn_graph, regularizer_matrix
from gae.optim import NumericalError
from oracles import layer_gradient_error, random_instance


def scalar_encode(p, X):
    l, m = p.W_H.shape
    H = np.zeros((l, X.shape[1]))
    for s in range(X.shape[1]):
        for r in range(l):
            z = p.b_H[r] + sum(p.W_H[r, c] * X[c, s] for c in range(m))
            H[r, s] = 1.0 / (1.0 + np.exp(-z))
    return H


def scalar_decode(p, H):
    m, l = p.W_Q.shape
    Q = np.zeros((m, H.shape[1]))
    for s in range(H.shape[1]):
        for r in range(m):
            z = p.b_Q[r] + sum(p.W_Q[r, c] * H[c, s] for c in range(l))
            Q[r, s] = 1.0 / (1.0 + np.exp(-z))
    return Q


def test_encode_decode_match_scalar_loops():
    X, _, p = random_instance(np.random.default_rng(0))
    H = encode(p, X)
    assert np.allclose(H, scalar_encode(p, X), atol=1e-14)
    assert np.allclose(decode(p, H), scalar_decode(p, H), atol=1e-14)


def test_zero_weights_give_one_half():
    p = LayerParams(np.zeros((2, 3)), np.zeros(2), np.zeros((3, 2)), np.zeros(3))
    assert np.all(encode(p, np.ones((3, 4))) == 0.5)


def test_sigmoid_is_stable_at_extremes():
    with np.errstate(all="raise"):
        out = sigmoid(np.array([-1e4, 0.0, 1e4]))
    assert np.array_equal(out, [0.0, 0.5, 1.0])


def test_objective_value_by_hand():
    rng = np.random.default_rng(1)
    X, G, p = random_instance(rng)
    Q = scalar_decode(p, scalar_encode(p, X))
    H = scalar_encode(p, X)
    recon = float(np.sum((X - Q) ** 2))
    n = X.shape[1]
    graph = sum(G[i, j] * float(H[:, i] @ H[:, j]) for i in range(n) for j in range(n))
    assert gae_objective(p, X, G, 0.4) == pytest.approx(recon + 0.4 * graph, rel=1e-12)
    assert reconstruction_error(p, X) == pytest.approx(recon, rel=1e-12)


@pytest.mark.parametrize("kind", ["plain", "gae", "sae", "graph_only"])
def test_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(2)
    for _ in range(5):
        assert layer_gradient_error(kind, rng) < 1e-6


def test_named_wrappers_agree_with_loss_and_grad():
    X, G, p = random_instance(np.random.default_rng(3))
    assert np.array_equal(gae_gradient(p, X, G, 0.2).flatten(),
                          loss_and_grad(p, X, "gae", G, 0.2)[1].flatten())
    assert sae_objective(p, X, 0.5, 0.1) == loss_and_grad(p, X, "sae", eta=0.5, rho=0.1)[0]
    assert np.array_equal(sae_gradient(p, X, 0.5, 0.1).flatten(),
                          loss_and_grad(p, X, "sae", eta=0.5, rho=0.1)[1].flatten())


def test_graph_only_has_zero_decoder_gradient():
    X, G, p = random_instance(np.random.default_rng(4))
    g = loss_and_grad(p, X, "graph_only", G, 1.0)[1]
    assert not np.any(g.W_Q) and not np.any(g.b_Q)


def test_kl_penalty_zero_at_target_and_positive_elsewhere():
    H = np.full((3, 5), 0.2)
    assert kl_penalty(H, 0.2) == 0.0
    assert kl_penalty(H, 0.3) > 0


def test_kl_penalty_finite_for_saturated_units():
    H = np.zeros((2, 4))
    val = kl_penalty(H, 0.05)
    expect = 2 * (0.05 * np.log(0.05 / KL_CLAMP) + 0.95 * np.log(0.95 / (1 - KL_CLAMP)))
    assert np.isfinite(val) and val == pytest.approx(expect)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_collapse_identities(seed):
    X, G, p = random_instance(np.random.default_rng(seed))
    f0, g0 = loss_and_grad(p, X, "plain")
    f1, g1 = loss_and_grad(p, X, "gae", G, 0.0)
    f2, g2 = loss_and_grad(p, X, "sae", eta=0.0, rho=0.3)
    assert f0 == f1 == f2
    assert np.array_equal(g0.flatten(), g1.flatten())
    assert np.array_equal(g0.flatten(), g2.flatten())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_graph_term_is_nonnegative(seed):
    X, G, p = random_instance(np.random.default_rng(seed))
    assert gae_objective(p, X, G, 1.0) >= reconstruction_error(p, X) - 1e-12


def test_flatten_round_trip():
    p = LayerParams.init(5, 3, 0)
    q = LayerParams.unflatten(p.flatten(), 5, 3)
    assert np.array_equal(p.flatten(), q.flatten())


def test_init_bounds_and_determinism():
    p = LayerParams.init(10, 4, 7)
    r = np.sqrt(6 / 14)
    assert np.all(np.abs(p.W_H) <= r) and np.all(np.abs(p.W_Q) <= r)
    assert not np.any(p.b_H) and not np.any(p.b_Q)
    assert np.array_equal(p.flatten(), LayerParams.init(10, 4, 7).flatten())


def test_layer_shape_validation():
    with pytest.raises(ValueError):
        LayerParams(np.zeros((2, 3)), np.zeros(3), np.zeros((3, 2)), np.zeros(3))
    p = LayerParams.init(3, 2, 0)
    with pytest.raises(ValueError):
        encode(p, np.zeros((4, 2)))
    with pytest.raises(ValueError):
        loss_and_grad(p, np.zeros((3, 4)), "gae", np.zeros((3, 3)), 1.0)
    with pytest.raises(ValueError):
        loss_and_grad(p, np.zeros((3, 4)), "deep")


def test_non_finite_parameters_raise():
    p = LayerParams.init(3, 2, 0)
    bad = LayerParams(p.W_H + np.nan, p.b_H, p.W_Q, p.b_Q)
    with pytest.raises(NumericalError):
        loss_and_grad(bad, np.zeros((3, 4)))


@pytest.mark.parametrize("kwargs", [{"lam": -1}, {"eta": -0.1}, {"rho": 0.0}, {"rho": 1.0},
                                    {"max_iter": 0}, {"max_step": 0.0}])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_train_layer_decreases_objective_monotonically():
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(6, 20))
    G = build_knn_graph(X, 3).G
    res = train_layer(X, G, TrainConfig(lam=0.1, max_iter=60, seed=1), 3)
    fs = [f for f, _ in res.history]
    assert all(b <= a for a, b in zip(fs, fs[1:]))
    assert res.objective == fs[-1] < fs[0]
    again = train_layer(X, G, TrainConfig(lam=0.1, max_iter=60, seed=1), 3)
    assert np.array_equal(res.params.flatten(), again.params.flatten())


def test_train_layer_needs_graph_for_gae():
    with pytest.raises(ValueError):
        train_layer(np.ones((3, 4)), None, TrainConfig(lam=0.5), 2, "gae")


def test_identical_samples_give_zero_graph_term():
    X = np.tile(np.array([[0.2], [0.7], [0.4]]), (1, 5))
    V = np.ones((5, 5)) - np.eye(5)
    p = LayerParams.init(3, 2, 0)
    assert gae_objective(p, X, regularizer_matrix(V), 3.0) == pytest.approx(
        reconstruction_error(p, X), abs=1e-12)
