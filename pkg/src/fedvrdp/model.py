"""Desk-scale classifiers with analytic gradients over flat parameter vectors.

Two architectures are supported:

* ``logistic``: multinomial logistic regression. Layout ``[W (C x m), b (C)]``.
* ``mlp1``: one hidden tanh layer. Layout ``[W1 (h x m), W2 (C x h), b1 (h), b2 (C)]``.

Weight matrices are stored row-major, all weights first, then all biases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError
from .rng import Purpose, stream

MODEL_KINDS = ("logistic", "mlp1")


class DataPoint(NamedTuple):
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    """A labelled dataset held as a feature matrix and a label vector."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise ConfigurationError(f"features must be 2-D, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ConfigurationError("labels must be 1-D and match the number of feature rows")
        if features.shape[0] == 0:
            raise ConfigurationError("dataset must be nonempty")
        if labels.dtype.kind not in "iu":
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise ConfigurationError("labels must be integers")
        labels = labels.astype(np.int64)
        if self.num_classes < 1:
            raise ConfigurationError("num_classes must be >= 1")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ConfigurationError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        if not np.all(np.isfinite(features)):
            raise ConfigurationError("features must be finite")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_points(cls, points: Sequence[DataPoint], num_classes: int) -> "Dataset":
        if not points:
            raise ConfigurationError("dataset must be nonempty")
        features = np.stack([np.asarray(p.features, dtype=np.float64) for p in points])
        labels = np.array([int(p.label) for p in points], dtype=np.int64)
        return cls(features, labels, num_classes)

    def __len__(self) -> int:
        return self.features.shape[0]

    def __iter__(self) -> Iterator[DataPoint]:
        for row, label in zip(self.features, self.labels):
            yield DataPoint(row, int(label))

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ConfigurationError("input_dim must be >= 1 and num_classes >= 2")
        if self.kind == "mlp1" and self.hidden_dim < 1:
            raise ConfigurationError("mlp1 requires hidden_dim >= 1")

    @property
    def dim(self) -> int:
        """Exact parameter count ``d``."""
        m, c, h = self.input_dim, self.num_classes, self.hidden_dim
        if self.kind == "logistic":
            return c * m + c
        return h * m + c * h + h + c

    def unpack(self, x: np.ndarray):
        """Split a flat parameter vector into views of the weight matrices and biases."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.dim:
            raise ConfigurationError(
                f"parameter vector has shape {x.shape}, expected ({self.dim},)"
            )
        m, c, h = self.input_dim, self.num_classes, self.hidden_dim
        if self.kind == "logistic":
            return x[: c * m].reshape(c, m), x[c * m :]
        o = 0
        w1 = x[o : o + h * m].reshape(h, m); o += h * m
        w2 = x[o : o + c * h].reshape(c, h); o += c * h
        b1 = x[o : o + h]; o += h
        b2 = x[o : o + c]
        return w1, w2, b1, b2


def init_params(spec: ModelSpec, seed: int = 0, scale: float = 0.1) -> np.ndarray:
    """Initial global model: zeros for ``logistic``, scaled Gaussian weights for ``mlp1``.

    Hidden-layer symmetry has to be broken for ``mlp1``; its biases start at zero.
    """
    x = np.zeros(spec.dim)
    if spec.kind == "mlp1":
        rng = stream(seed, Purpose.MODEL_INIT)
        n_weights = spec.hidden_dim * spec.input_dim + spec.num_classes * spec.hidden_dim
        w1 = rng.standard_normal(spec.hidden_dim * spec.input_dim) / np.sqrt(spec.input_dim)
        w2 = rng.standard_normal(spec.num_classes * spec.hidden_dim) / np.sqrt(spec.hidden_dim)
        x[:n_weights] = scale * np.concatenate([w1, w2])
    return x


def _check_batch(spec: ModelSpec, batch: Dataset):
    if len(batch) == 0:
        raise ConfigurationError("batch must be nonempty")
    if batch.input_dim != spec.input_dim:
        raise ConfigurationError(
            f"batch has {batch.input_dim} features, model expects {spec.input_dim}"
        )
    if batch.num_classes > spec.num_classes:
        raise ConfigurationError(
            f"batch has {batch.num_classes} classes, model has {spec.num_classes}"
        )


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _forward(spec, x, features):
    """Return ``(logits, hidden)``; ``hidden`` is None for logistic models."""
    if spec.kind == "logistic":
        w, b = spec.unpack(x)
        return features @ w.T + b, None
    w1, w2, b1, b2 = spec.unpack(x)
    hidden = np.tanh(features @ w1.T + b1)
    return hidden @ w2.T + b2, hidden


def loss(spec: ModelSpec, x: np.ndarray, batch: Dataset) -> float:
    """Mean softmax cross-entropy of the model on ``batch``."""
    _check_batch(spec, batch)
    logits, _ = _forward(spec, x, batch.features)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(len(batch)), batch.labels].mean())


def gradient(spec: ModelSpec, x: np.ndarray, batch: Dataset) -> np.ndarray:
    """Analytic gradient of :func:`loss` with respect to the flat parameters."""
    _check_batch(spec, batch)
    n = len(batch)
    logits, hidden = _forward(spec, x, batch.features)
    probs = np.exp(_log_softmax(logits))
    probs[np.arange(n), batch.labels] -= 1.0
    dlogits = probs / n

    if spec.kind == "logistic":
        dw = dlogits.T @ batch.features
        db = dlogits.sum(axis=0)
        return np.concatenate([dw.ravel(), db])

    _, w2, _, _ = spec.unpack(x)
    dw2 = dlogits.T @ hidden
    db2 = dlogits.sum(axis=0)
    dpre = (dlogits @ w2) * (1.0 - hidden**2)
    dw1 = dpre.T @ batch.features
    db1 = dpre.sum(axis=0)
    return np.concatenate([dw1.ravel(), dw2.ravel(), db1, db2])


def predict(spec: ModelSpec, x: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Predicted class per row; ties go to the lowest class index."""
    logits, _ = _forward(spec, x, np.asarray(features, dtype=np.float64))
    return np.argmax(logits, axis=1)


def evaluate(spec: ModelSpec, x: np.ndarray, test: Dataset) -> tuple[float, float]:
    """Return ``(accuracy, mean cross-entropy)`` on ``test``."""
    _check_batch(spec, test)
    accuracy = float(np.mean(predict(spec, x, test.features) == test.labels))
    return accuracy, loss(spec, x, test)
