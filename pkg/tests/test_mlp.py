import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from fourier_bounds.exceptions import ModelFormatError, TrainingDivergence
from fourier_bounds.surrogates import MLPSurrogate, MlpModel, fit_mlp, init_mlp, mse_and_gradients

# pinned 6-4-1 network: W1[i, j] = (i - j) / 10
W1 = np.array([[(i - j) / 10 for j in range(4)] for i in range(6)])
B1 = np.array([0.1, -0.2, 0.3, 0.0])
W2 = np.array([[0.5], [-1.0], [0.25], [2.0]])
B2 = np.array([0.1])
X_PIN = np.arange(1, 7) / 10


def finite_difference_check(model, Z, t, h=1e-6):
    _, gw, gb = mse_and_gradients(model, Z, t)
    worst = 0.0
    for params, grads in ((model.weights, gw), (model.biases, gb)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                orig = p[idx]
                p[idx] = orig + h
                up = mse_and_gradients(model, Z, t)[0]
                p[idx] = orig - h
                down = mse_and_gradients(model, Z, t)[0]
                p[idx] = orig
                fd = (up - down) / (2 * h)
                worst = max(worst, abs(fd - g[idx]) / max(abs(fd), 1e-3))
    return worst


def test_golden_forward_pass_sigmoid():
    model = MlpModel([W1, W2], [B1, B2], "sigmoid")
    # 30-digit value of the same arithmetic
    assert model.predict(X_PIN)[0] == pytest.approx(1.06824367454877129606, rel=1e-14)


def test_golden_forward_pass_relu():
    model = MlpModel([W1, W2], [B1, B2], "relu")
    assert model.predict(X_PIN)[0] == pytest.approx(0.495, rel=1e-14)


def test_golden_forward_pass_by_hand():
    model = MlpModel([W1, W2], [B1, B2], "sigmoid")
    hidden = [1 / (1 + math.exp(-(sum(X_PIN[i] * W1[i, j] for i in range(6)) + B1[j]))) for j in range(4)]
    assert model.predict(X_PIN)[0] == pytest.approx(sum(h * w for h, w in zip(hidden, W2[:, 0])) + 0.1,
                                                    rel=1e-14)


def test_zero_network_outputs_zero():
    model = MlpModel([np.zeros((6, 5)), np.zeros((5, 1))], [np.zeros(5), np.zeros(1)], "relu")
    assert np.all(model.predict(np.random.default_rng(0).normal(size=(10, 6))) == 0)


def test_single_linear_layer():
    w = np.arange(6, dtype=float).reshape(6, 1)
    model = MlpModel([w], [np.array([0.5])], "identity")
    X = np.random.default_rng(1).normal(size=(4, 6))
    np.testing.assert_allclose(model.predict(X), X @ w[:, 0] + 0.5, rtol=1e-15)


@pytest.mark.parametrize("activation", ["sigmoid", "relu", "identity"])
def test_backprop_matches_finite_differences(activation):
    rng = np.random.default_rng(2)
    model = init_mlp([6, 5, 3, 1], activation, rng)
    Z = rng.normal(size=(9, 6))
    t = rng.normal(size=9)
    assert finite_difference_check(model, Z, t) <= 1e-5


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.lists(st.integers(1, 6), min_size=1, max_size=3))
def test_backprop_property(seed, hidden):
    rng = np.random.default_rng(seed)
    model = init_mlp([4, *hidden, 1], "sigmoid", rng)
    assert finite_difference_check(model, rng.normal(size=(5, 4)), rng.normal(size=5)) <= 1e-5


def test_he_initialization_scale():
    model = init_mlp([400, 300, 1], rng=0)
    assert model.weights[0].std() == pytest.approx(math.sqrt(2 / 400), rel=0.02)
    assert np.all(model.biases[0] == 0)


def test_learns_a_linear_function():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(512, 6))
    y = 2 * X[:, 0] + 1
    model = fit_mlp(X, y, hidden=(8,), activation="identity", epochs=60, learning_rate=1e-2, seed=0)
    assert np.mean((model.predict(X) - y) ** 2) < 1e-4
    assert len(model.history["loss"]) == 60 and len(model.history["val_loss"]) == 60


def test_seed_determinism():
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(200, 6)), rng.normal(size=200)
    a = fit_mlp(X, y, hidden=(8, 4), epochs=5, seed=7)
    b = fit_mlp(X, y, hidden=(8, 4), epochs=5, seed=7)
    assert a.history == b.history and a == b
    assert fit_mlp(X, y, hidden=(8, 4), epochs=5, seed=8).history != a.history


def test_divergence_reports_epoch():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(64, 6))
    y = rng.normal(size=64) * 1e200  # squared residuals overflow
    with pytest.raises(TrainingDivergence) as info:
        fit_mlp(X, y, hidden=(4,), activation="relu", epochs=5, learning_rate=1e3,
                standardize=False, seed=0)
    assert info.value.epoch == 0


def test_fit_validation():
    X, y = np.zeros((10, 6)), np.zeros(10)
    with pytest.raises(ValueError):
        fit_mlp(X, y, batch_size=32)
    with pytest.raises(ValueError):
        fit_mlp(X, y, validation_split=1.0)


@pytest.mark.parametrize("weights, biases", [
    ([np.zeros((6, 3)), np.zeros((4, 1))], [np.zeros(3), np.zeros(1)]),
    ([np.zeros((6, 3))], [np.zeros(3)]),
    ([np.full((6, 1), np.nan)], [np.zeros(1)]),
    ([np.zeros((6, 1))], [np.zeros(2)]),
])
def test_model_validation(weights, biases):
    with pytest.raises(ModelFormatError):
        MlpModel(weights, biases)


def test_unknown_activation():
    with pytest.raises(ModelFormatError):
        MlpModel([np.zeros((6, 1))], [np.zeros(1)], "tanh")


def test_estimator_interface():
    rng = np.random.default_rng(6)
    X, y = rng.normal(size=(100, 6)), rng.normal(size=100)
    est = MLPSurrogate(hidden_layer_sizes=(5,), epochs=3, random_state=2).fit(X, y)
    assert len(est.loss_curve_) == 3 and len(est.validation_loss_curve_) == 3
    assert np.array_equal(clone(est).fit(X, y).predict(X), est.predict(X))
    assert np.array_equal(MLPSurrogate.from_model(est.model_).predict(X), est.predict(X))
