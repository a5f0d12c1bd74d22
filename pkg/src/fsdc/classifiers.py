"""Classifiers for episodic evaluation.

Two linear models trained by gradient descent from zero initialization
(multinomial logistic regression and a one-vs-rest linear SVM with squared
weight penalty), plus a training-free alternative that scores queries
directly under the calibrated Gaussians.

Losses are means over samples, so gradient magnitudes do not grow with the
number of generated features.  The L2 penalty applies to weights only, never
biases.  Zero initialization plus full-batch descent makes training a pure
function of the data, so episodes reproduce exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DataError, DimensionError, DivergenceError, SpecError
from .rng import PortableRng, derive_key
from .sampling import cholesky_psd

_DOM_SHUFFLE = 0x42


@dataclass(frozen=True)
class OptimizerConfig:
    """Gradient descent settings; ``batch_size`` 0 means full batch."""

    learning_rate: float = 0.1
    epochs: int = 300
    batch_size: int = 0
    l2: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise SpecError("learning_rate must be positive")
        if self.epochs < 1:
            raise SpecError("epochs must be at least 1")
        if self.batch_size < 0:
            raise SpecError("batch_size must be 0 (full batch) or positive")
        if self.l2 < 0:
            raise SpecError("l2 must be non-negative")


class TrainSet:
    """Features with dense task labels 0..N-1 and the map back to class ids."""

    def __init__(self, features, labels, class_map) -> None:
        x = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64)
        self.class_map = tuple(int(c) for c in class_map)
        if x.ndim != 2:
            raise DimensionError("features must be 2-D")
        if y.shape != (x.shape[0],):
            raise DimensionError("labels must match features")
        if len(self.class_map) < 2:
            raise SpecError("training needs at least 2 classes")
        if not np.isfinite(x).all():
            raise DataError("training features must be finite")
        if y.min(initial=0) < 0 or y.max(initial=0) >= len(self.class_map):
            raise SpecError("labels must lie in [0, num_classes)")
        present = np.bincount(y, minlength=len(self.class_map))
        if (present == 0).any():
            missing = int(np.flatnonzero(present == 0)[0])
            raise SpecError(f"no training samples for task label {missing}")
        self.features = x
        self.labels = y

    @property
    def num_classes(self) -> int:
        return len(self.class_map)


@dataclass
class LinearModel:
    """Trained weights, biases, and the per-epoch loss trace."""

    kind: str
    weights: np.ndarray
    bias: np.ndarray
    loss_history: tuple[float, ...]


def softmax_loss_grad(weights, bias, features, labels, l2):
    """Cross-entropy of a linear softmax model, averaged over samples.

    Returns ``(loss, grad_weights, grad_bias)``.  The L2 term is
    ``0.5 * l2 * sum(weights**2)`` and leaves the bias alone.
    """
    m = features.shape[0]
    scores = features @ weights.T + bias
    scores = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(scores)
    probs = exp / exp.sum(axis=1, keepdims=True)
    rows = np.arange(m)
    loss = float(-np.log(probs[rows, labels]).mean()
                 + 0.5 * l2 * (weights * weights).sum())
    grad_scores = probs
    grad_scores[rows, labels] -= 1.0
    grad_scores /= m
    grad_w = grad_scores.T @ features + l2 * weights
    grad_b = grad_scores.sum(axis=0)
    return loss, grad_w, grad_b


def hinge_loss_grad(weights, bias, features, labels, l2):
    """One-vs-rest hinge loss, averaged over samples, same return shape as
    :func:`softmax_loss_grad`."""
    m = features.shape[0]
    num_classes = weights.shape[0]
    target = np.full((m, num_classes), -1.0)
    target[np.arange(m), labels] = 1.0
    margins = target * (features @ weights.T + bias)
    slack = np.maximum(0.0, 1.0 - margins)
    loss = float(slack.sum(axis=1).mean() + 0.5 * l2 * (weights * weights).sum())
    active = np.where(slack > 0, target, 0.0)
    grad_w = -(active.T @ features) / m + l2 * weights
    grad_b = -active.sum(axis=0) / m
    return loss, grad_w, grad_b


def _fit(train: TrainSet, config: OptimizerConfig, loss_grad, kind: str) -> LinearModel:
    x = train.features
    y = train.labels
    n = x.shape[0]
    weights = np.zeros((train.num_classes, x.shape[1]))
    bias = np.zeros(train.num_classes)
    lr = config.learning_rate
    batch = config.batch_size or n
    shuffle_rng = None
    if batch < n:
        shuffle_rng = PortableRng(derive_key(config.seed, _DOM_SHUFFLE))
    history = []
    for epoch in range(config.epochs):
        if batch >= n:
            loss, grad_w, grad_b = loss_grad(weights, bias, x, y, config.l2)
            _check_finite(loss, grad_w, grad_b, epoch)
            weights = weights - lr * grad_w
            bias = bias - lr * grad_b
            history.append(loss)
        else:
            order = np.asarray(shuffle_rng.permutation_prefix(n, n))
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                loss, grad_w, grad_b = loss_grad(weights, bias, x[idx], y[idx],
                                                 config.l2)
                _check_finite(loss, grad_w, grad_b, epoch)
                weights = weights - lr * grad_w
                bias = bias - lr * grad_b
            history.append(loss_grad(weights, bias, x, y, config.l2)[0])
    return LinearModel(kind=kind, weights=weights, bias=bias,
                       loss_history=tuple(history))


def _check_finite(loss, grad_w, grad_b, epoch: int) -> None:
    if not (math.isfinite(loss) and np.isfinite(grad_w).all()
            and np.isfinite(grad_b).all()):
        raise DivergenceError(f"training diverged at epoch {epoch}")


def train_logistic(train: TrainSet, config: OptimizerConfig = OptimizerConfig()) -> LinearModel:
    """Multinomial logistic regression by (mini)batch gradient descent."""
    # a diverging run can overflow exp or hit log(0) in its final epoch; the
    # finite check turns that into DivergenceError, so keep numpy quiet here
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return _fit(train, config, softmax_loss_grad, "logistic")


def train_svm(train: TrainSet, config: OptimizerConfig = OptimizerConfig()) -> LinearModel:
    """One-vs-rest linear SVM by subgradient descent."""
    return _fit(train, config, hinge_loss_grad, "svm")


def predict(model: LinearModel, features):
    """Predicted task labels; ties go to the lowest label.

    A 1-D input yields an int, a 2-D input an int64 array.
    """
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.weights.shape[1]:
        raise DimensionError("query features do not match the trained model")
    scores = x @ model.weights.T + model.bias
    labels = np.argmax(scores, axis=1)
    return int(labels[0]) if single else labels


class MaxLikelihoodScorer:
    """Classify queries by Gaussian log-density under calibrated
    distributions, no training involved.

    A class with several distributions aggregates their log densities with
    ``max`` (default) or ``mean``.  Ties go to the lowest label because
    labels are scored in ascending order.
    """

    def __init__(self, distributions, jitter: float = 1e-6,
                 aggregate: str = "max") -> None:
        if aggregate not in ("max", "mean"):
            raise SpecError(f"unknown aggregate {aggregate!r}")
        if not distributions:
            raise SpecError("no distributions to score against")
        self.aggregate = aggregate
        self.labels = sorted(int(label) for label in distributions)
        self._per_label = []
        for label in self.labels:
            dists = distributions[label]
            if not dists:
                raise SpecError(f"class {label} has no distributions")
            prepared = []
            for dist in dists:
                factor, _ = cholesky_psd(dist.covariance, jitter)
                log_det = 2.0 * float(np.log(np.diag(factor)).sum())
                prepared.append((dist.mean, factor, log_det))
            self._per_label.append(prepared)
        self.dim = self._per_label[0][0][0].shape[0]

    def log_densities(self, features) -> np.ndarray:
        """(n, num_labels) matrix of aggregated log densities."""
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError("query features do not match the distributions")
        const = -0.5 * self.dim * math.log(2.0 * math.pi)
        columns = []
        for prepared in self._per_label:
            scores = np.empty((x.shape[0], len(prepared)))
            for j, (mean, factor, log_det) in enumerate(prepared):
                z = solve_triangular(factor, (x - mean).T, lower=True)
                quad = (z * z).sum(axis=0)
                scores[:, j] = const - 0.5 * log_det - 0.5 * quad
            if self.aggregate == "max":
                columns.append(scores.max(axis=1))
            else:
                columns.append(scores.mean(axis=1))
        return np.stack(columns, axis=1)

    def classify(self, features) -> np.ndarray:
        """Predicted labels (original label values, not column indices)."""
        dens = self.log_densities(features)
        picks = np.argmax(dens, axis=1)
        label_array = np.asarray(self.labels, dtype=np.int64)
        return label_array[picks]


def max_likelihood_classify(x, distributions, jitter: float = 1e-6,
                            aggregate: str = "max"):
    """Label of the distribution family most likely to have produced ``x``.

    A 1-D input yields an int, a 2-D input an int64 array.
    """
    scorer = MaxLikelihoodScorer(distributions, jitter=jitter, aggregate=aggregate)
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return int(scorer.classify(arr[None, :])[0])
    return scorer.classify(arr)
