"""Softmax regression / one-hidden-layer MLP classifier written with numpy.

Parameters live in one flat float64 vector.  Layer ``l`` maps ``fan_in`` to
``fan_out`` units and occupies ``fan_in * fan_out`` weights (row-major,
``W[i, j]`` connects input ``i`` to output ``j``) followed by ``fan_out``
biases.  Hidden layers use ``tanh``; the output layer is a log-softmax.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._seeding import make_rng
from .errors import ConfigError, DataError, NumericError

INIT_SCALE = 0.05


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    num_classes: int
    hidden_dims: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden_dims must be positive, got {self.hidden_dims}")

    @cached_property
    def layer_sizes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.num_classes]
        return list(zip(dims[:-1], dims[1:]))

    @cached_property
    def param_count(self) -> int:
        return sum(i * o + o for i, o in self.layer_sizes)


@dataclass(frozen=True)
class ParameterVector:
    values: np.ndarray
    version: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.version < 0:
            raise ConfigError("version must be non-negative")
        if not np.all(np.isfinite(values)):
            raise NumericError(f"non-finite parameter values at version {self.version}")

    def __len__(self):
        return self.values.shape[0]

    @classmethod
    def _trusted(cls, values: np.ndarray, version: int) -> "ParameterVector":
        """Wrap an already-validated float64 array without copying or re-checking."""
        obj = object.__new__(cls)
        values.setflags(write=False)
        object.__setattr__(obj, "values", values)
        object.__setattr__(obj, "version", version)
        return obj


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray


@dataclass(frozen=True)
class GradientVector:
    values: np.ndarray
    sample_count: int = 1

    def __len__(self):
        return self.values.shape[0]


def init_params(spec: ModelSpec, seed: int) -> ParameterVector:
    """Weights ~ U(-0.05, 0.05) from ``seed``, biases zero, version 0."""
    rng = make_rng(seed, 0x1A17)
    chunks = []
    for fan_in, fan_out in spec.layer_sizes:
        chunks.append(rng.uniform(-INIT_SCALE, INIT_SCALE, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ParameterVector(np.concatenate(chunks), 0)


def zero_params(spec: ModelSpec) -> ParameterVector:
    return ParameterVector(np.zeros(spec.param_count), 0)


def unpack(spec: ModelSpec, values: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into ``(W, b)`` views, one pair per layer."""
    if values.shape != (spec.param_count,):
        raise ConfigError(
            f"parameter vector has shape {values.shape}, expected ({spec.param_count},)"
        )
    layers = []
    pos = 0
    for fan_in, fan_out in spec.layer_sizes:
        w = values[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = values[pos:pos + fan_out]
        pos += fan_out
        layers.append((w, b))
    return layers


def _check_batch(spec: ModelSpec, batch) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(batch.features, dtype=np.float64)
    y = np.asarray(batch.labels)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ConfigError(f"features have shape {x.shape}, expected (n, {spec.input_dim})")
    if y.shape != (x.shape[0],):
        raise ConfigError(f"{y.shape[0] if y.ndim else 0} labels for {x.shape[0]} rows")
    return x, y


def _check_finite(arr: np.ndarray, where: str):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {where}")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _forward(spec, values, x):
    """Return (log_probs, activations) where activations[l] is the input to layer l."""
    layers = unpack(spec, values)
    acts = [x]
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        _check_finite(z, f"layer {i} pre-activation")
        if i < last:
            h = np.tanh(z)
            acts.append(h)
        else:
            h = z
    return log_softmax(h), acts


def forward(spec: ModelSpec, params: ParameterVector, batch) -> np.ndarray:
    """Log-probabilities, shape ``(batch_size, num_classes)``."""
    x, _ = _check_batch(spec, batch)
    log_probs, _ = _forward(spec, params.values, x)
    return log_probs


def nll_loss(log_probs: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of ``labels`` under ``log_probs``."""
    log_probs = np.asarray(log_probs)
    labels = np.asarray(labels)
    n, m = log_probs.shape
    if labels.shape != (n,):
        raise ConfigError(f"{labels.size} labels for {n} rows")
    if n == 0:
        raise DataError("cannot compute loss of an empty batch")
    if labels.min() < 0 or labels.max() >= m:
        raise DataError(f"labels must lie in [0, {m}), got range [{labels.min()}, {labels.max()}]")
    picked = log_probs[np.arange(n), labels]
    # -0.0 and rounding noise around perfect predictions are clamped away
    return max(float(-picked.mean()), 0.0)


def gradient(spec: ModelSpec, params: ParameterVector, batch) -> GradientVector:
    """Analytic gradient of the mean NLL, by backpropagation."""
    x, y = _check_batch(spec, batch)
    n = x.shape[0]
    if n == 0:
        raise DataError("cannot take the gradient of an empty batch")
    if y.min() < 0 or y.max() >= spec.num_classes:
        raise DataError(f"labels must lie in [0, {spec.num_classes})")
    layers = unpack(spec, params.values)
    log_probs, acts = _forward(spec, params.values, x)

    delta = np.exp(log_probs)
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a = acts[i]
        grads.append(np.concatenate([(a.T @ delta).ravel(), delta.sum(axis=0)]))
        if i > 0:
            delta = (delta @ w.T) * (1.0 - a * a)
    values = np.concatenate(grads[::-1])
    _check_finite(values, "gradient")
    return GradientVector(values, n)


def sgd_apply(params: ParameterVector, grad: GradientVector, lr: float) -> ParameterVector:
    """One plain SGD step; returns a new vector with ``version + 1``."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if len(grad) != len(params):
        raise ConfigError(f"gradient length {len(grad)} != parameter length {len(params)}")
    new_values = params.values - lr * grad.values
    if not np.isfinite(new_values).all():
        raise NumericError(f"SGD update produced non-finite parameters at version {params.version + 1}")
    return ParameterVector._trusted(new_values, params.version + 1)


def loss_at(spec: ModelSpec, values: np.ndarray, batch) -> float:
    x, y = _check_batch(spec, batch)
    log_probs, _ = _forward(spec, values, x)
    return float(-log_probs[np.arange(x.shape[0]), y].mean())


def finite_diff_gradient(spec: ModelSpec, params: ParameterVector, batch,
                         h: float = 1e-5) -> GradientVector:
    """Central-difference gradient estimate, one coordinate at a time."""
    if h <= 0:
        raise ConfigError(f"step h must be positive, got {h}")
    base = np.array(params.values, dtype=np.float64)
    out = np.empty_like(base)
    for i in range(base.shape[0]):
        orig = base[i]
        base[i] = orig + h
        plus = loss_at(spec, base, batch)
        base[i] = orig - h
        minus = loss_at(spec, base, batch)
        base[i] = orig
        out[i] = (plus - minus) / (2.0 * h)
    return GradientVector(out, int(np.asarray(batch.labels).shape[0]))


def predict(spec: ModelSpec, params: ParameterVector, batch) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(forward(spec, params, batch), axis=1)


def evaluate(spec: ModelSpec, params: ParameterVector, dataset) -> tuple[float, float]:
    """Mean NLL and accuracy over every row of ``dataset``."""
    x, y = _check_batch(spec, dataset)
    if x.shape[0] == 0:
        raise DataError("cannot evaluate on an empty dataset")
    log_probs, _ = _forward(spec, params.values, x)
    loss = nll_loss(log_probs, y)
    accuracy = float(np.mean(np.argmax(log_probs, axis=1) == y))
    return loss, accuracy
