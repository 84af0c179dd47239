"""Synthetic two-class data, logistic-regression local models and noisy gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

# Axis along which the two class means are separated.
SEPARATION_AXIS = 0


@dataclass(frozen=True)
class DataSpec:
    """Recipe for a two-blob classification dataset.

    Attributes:
        n_samples: Number of rows.
        dim: Number of features (the model adds a bias term).
        class_separation: Distance between class means in per-class std units.
        label_noise: Fraction of labels flipped, in [0, 0.5].
        seed: Seed for the generator.
    """

    n_samples: int
    dim: int
    class_separation: float
    label_noise: float
    seed: int

    def validate(self) -> None:
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2", key="n_samples")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1", key="dim")
        if not self.class_separation > 0:
            raise ConfigError("class_separation must be > 0", key="class_separation")
        if not 0.0 <= self.label_noise <= 0.5:
            raise ConfigError("label_noise must lie in [0, 0.5]", key="label_noise")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", key="seed")


@dataclass
class Dataset:
    """Feature matrix and binary labels."""

    features: np.ndarray
    labels: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def design(self) -> np.ndarray:
        """Features with a trailing column of ones for the bias."""
        return np.hstack([self.features, np.ones((self.n_samples, 1))])


@dataclass(frozen=True)
class GradientNoiseSpec:
    """Additive gradient noise: fixed-direction bias plus iid Gaussian jitter.

    The bias has norm ``bias_scale * error_rate`` and the jitter has
    per-component variance ``variance_scale * error_rate``.
    """

    bias_scale: float = 0.0
    variance_scale: float = 0.0
    error_rate: float = 0.0

    def __post_init__(self):
        if self.bias_scale < 0 or self.variance_scale < 0:
            raise ConfigError("noise scales must be >= 0")
        if not 0.0 <= self.error_rate <= 1.0:
            raise ConfigError("error_rate must lie in [0, 1]", key="error_rate")


@dataclass
class LocalModel:
    """Logistic-regression weights followed by a bias term."""

    params: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "LocalModel":
        return cls(np.zeros(dim + 1))


def generate_dataset(spec: DataSpec) -> Dataset:
    """Draw a balanced two-blob dataset.

    Class 0 is centred at ``-delta/2`` and class 1 at ``+delta/2`` on the
    separation axis, unit variance everywhere. Exactly
    ``floor(label_noise * n)`` labels, chosen uniformly, are flipped.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    return _draw(rng, spec.n_samples, spec.dim, spec.class_separation, spec.label_noise)


def _draw(rng: np.random.Generator, n: int, dim: int, separation: float, noise: float) -> Dataset:
    labels = np.zeros(n, dtype=np.int64)
    labels[n // 2:] = 1
    features = rng.standard_normal((n, dim))
    features[:, SEPARATION_AXIS] += np.where(labels == 1, separation / 2, -separation / 2)
    n_flip = int(np.floor(noise * n))
    if n_flip:
        idx = rng.choice(n, size=n_flip, replace=False)
        labels[idx] = 1 - labels[idx]
    return Dataset(features, labels)


def _check_dims(params: np.ndarray, data: Dataset) -> None:
    if params.ndim != 1 or params.shape[0] != data.dim + 1:
        raise ShapeError(f"model has {params.shape} params, data needs {data.dim + 1}")


def logistic_gradient(params: np.ndarray, data: Dataset) -> np.ndarray:
    """Exact gradient of the mean logistic loss."""
    params = np.asarray(params, dtype=float)
    _check_dims(params, data)
    x = data.design()
    z = np.clip(x @ params, -500, 500)
    p = 1.0 / (1.0 + np.exp(-z))
    return x.T @ (p - data.labels) / data.n_samples


def logistic_loss(params: np.ndarray, data: Dataset) -> float:
    """Mean logistic loss, used for finite-difference checks."""
    params = np.asarray(params, dtype=float)
    _check_dims(params, data)
    z = data.design() @ params
    return float(np.mean(np.logaddexp(0.0, z) - data.labels * z))


def bias_direction(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit vector used as a node's persistent gradient bias direction."""
    v = rng.standard_normal(dim + 1)
    return v / np.linalg.norm(v)


def local_gradient(
    model: LocalModel,
    data: Dataset,
    noise: GradientNoiseSpec,
    rng: np.random.Generator,
    direction: np.ndarray | None = None,
) -> np.ndarray:
    """Logistic gradient plus bias and Gaussian noise.

    Args:
        model: Current local model.
        data: Local training set.
        noise: Noise magnitudes.
        rng: Stream the Gaussian draw is taken from.
        direction: Unit bias direction. Defaults to no bias.
    """
    grad = logistic_gradient(model.params, data)
    if direction is not None:
        grad = grad + noise.bias_scale * noise.error_rate * direction
    std = np.sqrt(noise.variance_scale * noise.error_rate)
    return grad + std * rng.standard_normal(grad.shape[0])


def predict(params: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Sign predictions; a zero score goes to class 0."""
    return (features @ params[:-1] + params[-1] > 0).astype(np.int64)


def evaluate_accuracy(model: LocalModel, data: Dataset) -> float:
    """Fraction of correctly classified rows."""
    params = np.asarray(model.params, dtype=float)
    _check_dims(params, data)
    return float(np.mean(predict(params, data.features) == data.labels))


def batch_accuracy(params: np.ndarray, data: Dataset) -> np.ndarray:
    """Accuracy of every row of ``params`` (shape ``(k, dim+1)``) on ``data``."""
    params = np.atleast_2d(params)
    if params.shape[1] != data.dim + 1:
        raise ShapeError(f"expected {data.dim + 1} params per model, got {params.shape[1]}")
    pred = (data.features @ params[:, :-1].T + params[:, -1] > 0)
    return np.mean(pred == data.labels[:, None].astype(bool), axis=0)


def batch_logistic_gradient(params: np.ndarray, designs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Row-wise logistic gradients for many nodes at once.

    Args:
        params: ``(k, p)`` stacked parameter vectors.
        designs: ``(k, n, p)`` design matrices including the bias column.
        labels: ``(k, n)`` binary labels.
    """
    z = np.clip(np.einsum("knp,kp->kn", designs, params), -500, 500)
    resid = 1.0 / (1.0 + np.exp(-z)) - labels
    return np.einsum("kn,knp->kp", resid, designs) / designs.shape[1]
