"""Feedforward regression network trained by mini-batch Adam on the mean squared error."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ..exceptions import ModelFormatError, TrainingDivergence

__all__ = [
    "ACTIVATIONS",
    "MlpModel",
    "init_mlp",
    "mse_and_gradients",
    "fit_mlp",
    "MLPSurrogate",
]


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# name -> (activation, derivative expressed through the activation output a and input z)
ACTIVATIONS = {
    "sigmoid": (_sigmoid, lambda a, z: a * (1.0 - a)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a, z: (z > 0).astype(float)),
    "identity": (lambda z: z, lambda a, z: np.ones_like(z)),
}


@dataclass(eq=False)
class MlpModel:
    """Weights ``W[l]`` of shape (in, out) and biases ``b[l]``; hidden layers use
    ``activation``, the output layer is linear. Inputs and the target are
    standardized with the stored means and scales."""

    weights: list
    biases: list
    activation: str = "sigmoid"
    x_mean: np.ndarray = None
    x_scale: np.ndarray = None
    y_mean: float = 0.0
    y_scale: float = 1.0
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        if self.activation not in ACTIVATIONS:
            raise ModelFormatError(f"unknown activation {self.activation!r}")
        if not self.weights or len(self.weights) != len(self.biases):
            raise ModelFormatError("need one bias vector per weight matrix")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ModelFormatError(f"layer {l}: weight {w.shape} and bias {b.shape} do not match")
            if l and w.shape[0] != self.weights[l - 1].shape[1]:
                raise ModelFormatError(f"layer {l}: input width {w.shape[0]} does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ModelFormatError(f"layer {l}: non-finite parameters")
        if self.weights[-1].shape[1] != 1:
            raise ModelFormatError("the output layer must have one unit")
        n_in = self.weights[0].shape[0]
        self.x_mean = np.zeros(n_in) if self.x_mean is None else np.asarray(self.x_mean, dtype=float)
        self.x_scale = np.ones(n_in) if self.x_scale is None else np.asarray(self.x_scale, dtype=float)
        if self.x_mean.shape != (n_in,) or self.x_scale.shape != (n_in,):
            raise ModelFormatError("input scaler does not match the input width")
        if not (np.all(self.x_scale > 0) and self.y_scale > 0):
            raise ModelFormatError("scales must be positive")

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward_raw(self, Z):
        """Network output on already standardized inputs (standardized target units)."""
        act = ACTIVATIONS[self.activation][0]
        a = Z
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if l == len(self.weights) - 1 else act(z)
        return a[:, 0]

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.weights[0].shape[0]:
            raise ValueError(f"expected {self.weights[0].shape[0]} features, got {X.shape[1]}")
        return self.forward_raw((X - self.x_mean) / self.x_scale) * self.y_scale + self.y_mean

    def __eq__(self, other):
        return (isinstance(other, MlpModel) and self.activation == other.activation
                and len(self.weights) == len(other.weights)
                and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
                and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
                and np.array_equal(self.x_mean, other.x_mean)
                and np.array_equal(self.x_scale, other.x_scale)
                and self.y_mean == other.y_mean and self.y_scale == other.y_scale)


def init_mlp(layer_sizes, activation="sigmoid", rng=None) -> MlpModel:
    """He initialization: ``W ~ N(0, 2 / fan_in)``, zero biases."""
    rng = np.random.default_rng(rng)
    if len(layer_sizes) < 2 or layer_sizes[-1] != 1:
        raise ValueError("layer_sizes must run from the input width to a single output")
    weights = [rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out))
               for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:])]
    biases = [np.zeros(n_out) for n_out in layer_sizes[1:]]
    return MlpModel(weights, biases, activation)


def mse_and_gradients(model: MlpModel, Z, t):
    """Mean squared error of ``forward_raw(Z)`` against ``t`` and its gradients
    by backpropagation. Returns ``(loss, grad_weights, grad_biases)``."""
    act, dact = ACTIVATIONS[model.activation]
    n_layers = len(model.weights)
    a_list, z_list = [Z], []
    a = Z
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = z if l == n_layers - 1 else act(z)
        z_list.append(z)
        a_list.append(a)
    resid = a[:, 0] - t
    # overflow is reported by the caller as TrainingDivergence
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(resid * resid))
    delta = (2.0 / t.shape[0]) * resid[:, None]
    gw, gb = [None] * n_layers, [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        gw[l] = a_list[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ model.weights[l].T) * dact(a_list[l], z_list[l - 1])
    return loss, gw, gb


def fit_mlp(X, y, *, hidden=(64, 32), activation="sigmoid", epochs=100, batch_size=32,
            learning_rate=1e-3, validation_split=0.2, seed=0, standardize=True,
            beta1=0.9, beta2=0.999, adam_eps=1e-8) -> MlpModel:
    """Mini-batch Adam on the MSE; returns the final-epoch model.

    A seeded permutation holds out ``validation_split`` of the rows; the
    per-epoch train and validation losses (standardized units) are stored in
    ``model.history``. Raises TrainingDivergence if a loss turns non-finite.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be 2-d with one row per target")
    if not 0.0 <= validation_split < 1.0:
        raise ValueError("validation_split must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(X.shape[0])
    n_val = int(round(validation_split * X.shape[0]))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    if tr_idx.size < batch_size:
        raise ValueError(f"need at least batch_size={batch_size} training rows, got {tr_idx.size}")

    if standardize:
        x_mean = X[tr_idx].mean(axis=0)
        x_scale = X[tr_idx].std(axis=0)
        x_scale[x_scale == 0] = 1.0
        y_mean = float(y[tr_idx].mean())
        y_scale = float(y[tr_idx].std()) or 1.0
    else:
        x_mean, x_scale, y_mean, y_scale = np.zeros(X.shape[1]), np.ones(X.shape[1]), 0.0, 1.0
    Z = (X - x_mean) / x_scale
    T = (y - y_mean) / y_scale

    model = init_mlp([X.shape[1], *hidden, 1], activation, rng)
    model.x_mean, model.x_scale, model.y_mean, model.y_scale = x_mean, x_scale, y_mean, y_scale
    params = model.weights + model.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    history = {"loss": [], "val_loss": []}
    for epoch in range(epochs):
        order = tr_idx[rng.permutation(tr_idx.size)]
        losses = []
        for start in range(0, order.size, batch_size):
            batch = order[start:start + batch_size]
            loss, gw, gb = mse_and_gradients(model, Z[batch], T[batch])
            if not math.isfinite(loss):
                raise TrainingDivergence(epoch)
            losses.append(loss * batch.size)
            step += 1
            for p, g, mi, vi in zip(params, gw + gb, m, v):
                mi *= beta1
                mi += (1.0 - beta1) * g
                vi *= beta2
                vi += (1.0 - beta2) * g * g
                m_hat = mi / (1.0 - beta1 ** step)
                v_hat = vi / (1.0 - beta2 ** step)
                p -= learning_rate * m_hat / (np.sqrt(v_hat) + adam_eps)
        train_loss = sum(losses) / order.size
        val_loss = (float(np.mean((model.forward_raw(Z[val_idx]) - T[val_idx]) ** 2))
                    if n_val else math.nan)
        if not math.isfinite(train_loss) or (n_val and not math.isfinite(val_loss)):
            raise TrainingDivergence(epoch)
        history["loss"].append(train_loss)
        history["val_loss"].append(val_loss)
    model.history = history
    return model


class MLPSurrogate(RegressorMixin, BaseEstimator):
    """Feedforward network regressor with a scikit-learn estimator interface."""

    def __init__(self, hidden_layer_sizes=(64, 32), activation="sigmoid", epochs=100,
                 batch_size=32, learning_rate=1e-3, validation_split=0.2, standardize=True,
                 random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.validation_split = validation_split
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        self.model_ = fit_mlp(X, y, hidden=tuple(self.hidden_layer_sizes),
                              activation=self.activation, epochs=self.epochs,
                              batch_size=self.batch_size, learning_rate=self.learning_rate,
                              validation_split=self.validation_split,
                              seed=int(self.random_state or 0), standardize=self.standardize)
        self.loss_curve_ = self.model_.history["loss"]
        self.validation_loss_curve_ = self.model_.history["val_loss"]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = validate_data(self, X, reset=False)
        return self.model_.predict(X)

    @classmethod
    def from_model(cls, model: MlpModel):
        est = cls(hidden_layer_sizes=tuple(model.layer_sizes[1:-1]), activation=model.activation)
        est.model_ = model
        est.n_features_in_ = model.layer_sizes[0]
        return est
