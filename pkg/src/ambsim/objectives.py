"""Stochastic objectives: losses, gradients, samplers, and regularity constants.

Models are immutable after construction. Sample streams are split per
(node, epoch) from the model's own seed, so parallel nodes never share
generator state and the first ``k`` samples of a stream do not depend on
how many are requested.

All batch reductions use elementwise products followed by numpy's
pairwise sums (no BLAS), so results are bit-stable across hosts with
different threading configurations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from . import seeding

__all__ = [
    "ObjectiveConstants",
    "EstimatedConstants",
    "EmptyBatchError",
    "LinearRegressionObjective",
    "MulticlassLogisticObjective",
    "make_linear_regression",
    "make_logistic_regression",
    "load_labeled_csv",
    "minibatch_gradient",
    "gradient_variance_at",
    "estimate_constants",
]


class EmptyBatchError(ValueError):
    """Raised when a minibatch gradient is requested for zero samples."""


@dataclass(frozen=True)
class ObjectiveConstants:
    """Regularity constants attached to a model.

    ``loss_lipschitz`` bounds ``|f(w, x) - f(w', x)|`` by a multiple of
    ``||w - w'||``; ``grad_smoothness`` does the same for gradients;
    ``grad_variance`` bounds the second moment of the gradient noise.
    Entries left as None are unknown and can be filled from
    :func:`estimate_constants`. ``optimum_value`` is the objective value
    at the minimizer when it is known analytically.
    """

    loss_lipschitz: float | None = None
    grad_smoothness: float | None = None
    grad_variance: float | None = None
    optimum_value: float | None = None


@dataclass(frozen=True)
class EstimatedConstants:
    grad_smoothness: float
    loss_lipschitz: float
    grad_variance: float
    probe_count: int
    radius: float


def _pairwise_mean(values: np.ndarray, axis: int = 0) -> np.ndarray:
    # np.mean uses pairwise summation with a fixed order; kept as a single
    # chokepoint so every batch reduction in the package shares it.
    return np.mean(values, axis=axis)


class LinearRegressionObjective:
    """Least-squares streaming regression against a hidden parameter vector.

    The hidden target is drawn from a standard normal; features are
    standard normal and labels are ``x . w_star`` plus centered Gaussian
    noise. The per-sample loss is half the squared residual, so the
    gradient is ``(x . w - y) x`` and the optimum value is half the noise
    variance.
    """

    kind = "linear_regression"

    def __init__(self, dim: int, noise_var: float, seed: int):
        if dim < 1:
            raise ValueError(f"dimension must be positive, got {dim}")
        if noise_var < 0:
            raise ValueError(f"noise variance must be non-negative, got {noise_var}")
        self.dim = int(dim)
        self.noise_var = float(noise_var)
        self.seed = int(seed)
        self.w_star = seeding.substream(seed, seeding.MODEL).standard_normal(dim)
        self.constants = ObjectiveConstants(optimum_value=noise_var / 2.0)

    @property
    def optimum_value(self) -> float:
        return self.noise_var / 2.0

    def draw_with(self, rng_features, rng_noise, count: int):
        x = rng_features.standard_normal((count, self.dim))
        labels = (x * self.w_star).sum(axis=1)
        if self.noise_var > 0:
            if callable(rng_noise):
                rng_noise = rng_noise()
            labels = labels + math.sqrt(self.noise_var) * rng_noise.standard_normal(count)
        return x, labels

    def draw(self, node: int, epoch: int, count: int):
        """First ``count`` samples of the (node, epoch) stream."""
        # The noise stream is materialized lazily; noise-free models skip it.
        return self.draw_with(
            seeding.substream(self.seed, seeding.SAMPLES, node, epoch, 0),
            lambda: seeding.substream(self.seed, seeding.SAMPLES, node, epoch, 1),
            count,
        )

    def holdout(self, count: int):
        return self.draw_with(
            seeding.substream(self.seed, seeding.HOLDOUT, 0),
            seeding.substream(self.seed, seeding.HOLDOUT, 1),
            count,
        )

    def sample_loss(self, w, x, y) -> float:
        r = float(np.dot(x, w)) - float(y)
        return 0.5 * r * r

    def sample_grad(self, w, x, y) -> np.ndarray:
        r = float(np.dot(x, w)) - float(y)
        return r * np.asarray(x, dtype=float)

    def loss_batch(self, w, x, y) -> np.ndarray:
        residual = (x * w).sum(axis=1) - y
        return 0.5 * residual * residual

    def grad_mean(self, w, x, y) -> np.ndarray:
        residual = (x * w).sum(axis=1) - y
        return _pairwise_mean(x * residual[:, None], axis=0)


class MulticlassLogisticObjective:
    """Softmax cross-entropy over flattened class-by-feature weights.

    The primal variable has dimension ``classes * feat_dim``; row ``i`` of
    its reshaped form scores class ``i``. Logits are max-shifted before
    exponentiation so large weights cannot overflow. At ``w = 0`` the
    loss equals ``ln(classes)`` for every sample.

    ``source`` is either a synthetic Gaussian-cluster generator (class
    centers drawn once from the model seed, features are a center plus
    unit noise, last coordinate fixed at one as a bias) or a preloaded
    ``(features, labels)`` pair from :func:`load_labeled_csv`.
    """

    kind = "logistic_regression"

    def __init__(self, classes: int, feat_dim: int, seed: int,
                 data=None, cluster_spread: float = 2.0):
        if classes < 2:
            raise ValueError(f"need at least 2 classes, got {classes}")
        if feat_dim < 1:
            raise ValueError(f"feature dimension must be positive, got {feat_dim}")
        self.classes = int(classes)
        self.feat_dim = int(feat_dim)
        self.dim = self.classes * self.feat_dim
        self.seed = int(seed)
        self.constants = ObjectiveConstants()
        if data is None:
            rng = seeding.substream(seed, seeding.MODEL)
            self.centers = cluster_spread * rng.standard_normal((classes, feat_dim - 1))
            self.data = None
        else:
            features, labels = data
            if features.shape[1] != feat_dim:
                raise ValueError(
                    f"data source has {features.shape[1]} columns per sample, model expects {feat_dim}"
                )
            if labels.min() < 0 or labels.max() >= classes:
                raise ValueError("data source labels outside the configured class range")
            self.centers = None
            self.data = (np.asarray(features, dtype=float), np.asarray(labels, dtype=int))

    optimum_value = None

    def draw_with(self, rng_labels, rng_features, count: int):
        if self.data is not None:
            features, labels = self.data
            idx = rng_labels.integers(0, features.shape[0], size=count)
            return features[idx], labels[idx]
        labels = rng_labels.integers(0, self.classes, size=count)
        noise = rng_features.standard_normal((count, self.feat_dim - 1))
        x = np.ones((count, self.feat_dim))
        x[:, : self.feat_dim - 1] = self.centers[labels] + noise
        return x, labels

    def draw(self, node: int, epoch: int, count: int):
        return self.draw_with(
            seeding.substream(self.seed, seeding.SAMPLES, node, epoch, 0),
            seeding.substream(self.seed, seeding.SAMPLES, node, epoch, 1),
            count,
        )

    def holdout(self, count: int):
        return self.draw_with(
            seeding.substream(self.seed, seeding.HOLDOUT, 0),
            seeding.substream(self.seed, seeding.HOLDOUT, 1),
            count,
        )

    def _logits(self, weights, x) -> np.ndarray:
        k = x.shape[0]
        logits = np.empty((k, self.classes))
        for cls in range(self.classes):
            logits[:, cls] = (x * weights[cls]).sum(axis=1)
        return logits

    def _log_probs(self, weights, x) -> np.ndarray:
        logits = self._logits(weights, x)
        shift = logits.max(axis=1, keepdims=True)
        stable = logits - shift
        log_norm = np.log(np.exp(stable).sum(axis=1, keepdims=True))
        return stable - log_norm

    def sample_loss(self, w, x, y) -> float:
        weights = np.asarray(w, dtype=float).reshape(self.classes, self.feat_dim)
        return float(-self._log_probs(weights, np.asarray(x, float)[None, :])[0, int(y)])

    def sample_grad(self, w, x, y) -> np.ndarray:
        weights = np.asarray(w, dtype=float).reshape(self.classes, self.feat_dim)
        x = np.asarray(x, dtype=float)
        probs = np.exp(self._log_probs(weights, x[None, :])[0])
        probs[int(y)] -= 1.0
        return (probs[:, None] * x[None, :]).reshape(self.dim)

    def loss_batch(self, w, x, y) -> np.ndarray:
        weights = np.asarray(w, dtype=float).reshape(self.classes, self.feat_dim)
        log_probs = self._log_probs(weights, x)
        return -log_probs[np.arange(x.shape[0]), y]

    def grad_mean(self, w, x, y) -> np.ndarray:
        weights = np.asarray(w, dtype=float).reshape(self.classes, self.feat_dim)
        probs = np.exp(self._log_probs(weights, x))
        probs[np.arange(x.shape[0]), y] -= 1.0
        grad = np.empty((self.classes, self.feat_dim))
        for cls in range(self.classes):
            grad[cls] = _pairwise_mean(x * probs[:, cls, None], axis=0)
        return grad.reshape(self.dim)


def make_linear_regression(dim: int, noise_var: float, seed: int) -> LinearRegressionObjective:
    """Streaming least-squares model; see :class:`LinearRegressionObjective`."""
    return LinearRegressionObjective(dim, noise_var, seed)


def make_logistic_regression(classes: int, feat_dim: int, seed: int,
                             csv_path=None, cluster_spread: float = 2.0) -> MulticlassLogisticObjective:
    """Softmax classifier over synthetic clusters or a local labeled CSV file."""
    data = load_labeled_csv(csv_path, feat_dim) if csv_path is not None else None
    return MulticlassLogisticObjective(classes, feat_dim, seed, data=data,
                                       cluster_spread=cluster_spread)


def load_labeled_csv(path, feat_dim: int):
    """Load ``label,f1,...,fk`` rows, scale features into [0, 1], append a bias one.

    Rows must all have ``feat_dim - 1`` feature columns (the bias is
    appended here). Feature values above 1 anywhere trigger a global
    divide by 255, the usual raw-pixel convention; the scaling applied is
    recorded by the caller-visible contract, not guessed per row.
    """
    rows = []
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != feat_dim:
                raise ValueError(
                    f"{path}:{lineno}: expected 1 label + {feat_dim - 1} features, got {len(row)} columns"
                )
            labels.append(int(float(row[0])))
            rows.append([float(v) for v in row[1:]])
    if not rows:
        raise ValueError(f"{path}: no samples found")
    features = np.asarray(rows, dtype=float)
    if features.max(initial=0.0) > 1.0:
        features = features / 255.0
    out = np.ones((features.shape[0], feat_dim))
    out[:, : feat_dim - 1] = features
    return out, np.asarray(labels, dtype=int)


def minibatch_gradient(model, w, batch) -> np.ndarray:
    """Average of per-sample gradients at ``w`` over ``batch = (features, labels)``.

    Raises :class:`EmptyBatchError` for an empty batch; the caller decides
    how an epoch without samples is handled.
    """
    x, y = batch
    if len(x) == 0:
        raise EmptyBatchError("minibatch gradient requested for an empty batch")
    return model.grad_mean(np.asarray(w, dtype=float), np.asarray(x, dtype=float), y)


def gradient_variance_at(model, w, sample_count: int, seed: int) -> float:
    """Monte-Carlo estimate of E||grad f(w, x) - grad F(w)||^2 at a fixed ``w``."""
    if sample_count < 2:
        raise ValueError("need at least 2 samples to estimate a variance")
    rng_a = seeding.substream(seed, seeding.PROBES, 0)
    rng_b = seeding.substream(seed, seeding.PROBES, 1)
    x, y = model.draw_with(rng_a, rng_b, sample_count)
    w = np.asarray(w, dtype=float)
    grads = np.stack([model.sample_grad(w, x[i], y[i]) for i in range(sample_count)])
    center = _pairwise_mean(grads, axis=0)
    return float(_pairwise_mean(((grads - center) ** 2).sum(axis=1)))


def estimate_constants(model, probe_count: int, seed: int, radius: float = 1.0) -> EstimatedConstants:
    """Probe-based estimates of the model's regularity constants.

    Gradient smoothness is the largest observed ratio
    ``||grad f(w, x) - grad f(w', x)|| / ||w - w'||`` over probe pairs;
    pairs are taken both in random directions and along each probe
    sample's own feature direction, which is where curvature peaks for
    linear models. The loss Lipschitz estimate is the largest gradient
    norm seen over the probe ball. The variance estimate is the largest
    per-point gradient variance across probe centers. Estimates are
    returned to the caller and never overwrite constants already set on
    the model.
    """
    if probe_count < 2:
        raise ValueError(f"probe_count must be at least 2, got {probe_count}")
    rng = seeding.substream(seed, seeding.PROBES, 2)
    x, y = model.draw_with(
        seeding.substream(seed, seeding.PROBES, 3),
        seeding.substream(seed, seeding.PROBES, 4),
        probe_count,
    )
    dim = model.dim
    smooth = 0.0
    lipschitz = 0.0
    step = 1e-3 * radius
    for i in range(probe_count):
        w = rng.standard_normal(dim)
        w *= radius * rng.uniform(0.0, 1.0) ** (1.0 / min(dim, 64)) / np.linalg.norm(w)
        g = model.sample_grad(w, x[i], y[i])
        lipschitz = max(lipschitz, float(np.linalg.norm(g)))
        directions = [rng.standard_normal(dim)]
        feature_dir = np.zeros(dim)
        flat = np.asarray(x[i], dtype=float).ravel()
        feature_dir[: flat.size] = flat
        if np.linalg.norm(feature_dir) > 0:
            directions.append(feature_dir)
        for direction in directions:
            direction = direction / np.linalg.norm(direction)
            g2 = model.sample_grad(w + step * direction, x[i], y[i])
            smooth = max(smooth, float(np.linalg.norm(g2 - g)) / step)
    variance = 0.0
    for j in range(max(2, probe_count // 8)):
        w = rng.standard_normal(dim)
        w *= radius / np.linalg.norm(w)
        variance = max(variance, gradient_variance_at(model, w, max(8, probe_count), seed + 7919 * (j + 1)))
    return EstimatedConstants(
        grad_smoothness=smooth,
        loss_lipschitz=lipschitz,
        grad_variance=variance,
        probe_count=probe_count,
        radius=radius,
    )


def with_constants(model, **updates):
    """Return the model with its constants record updated (model itself reused)."""
    model.constants = replace(model.constants, **updates)
    return model
