"""Classifier implementations for the active learning loop.

The loop only consumes posteriors, so any IClassifier works. The built-in
ReferenceClassifier is a small feature-space network (multinomial logistic
regression, optionally with one tanh hidden layer) trained by seeded
mini-batch gradient descent on a weight-normalised cross-entropy.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax as _scipy_softmax

from active_subset.exceptions import ConfigurationError, InvalidInputError, ModelNotFittedError
from active_subset.interfaces import Dataset, IClassifier

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]


class Optimizer(Enum):
    """Parameter update rules."""
    SGD = "sgd"
    ADAM = "adam"


class Augmentation(Enum):
    """Feature-space augmentation applied to oversampled copies."""
    NONE = "none"
    JITTER = "jitter"
    MIX = "mix"


@dataclass(frozen=True)
class TrainSettings:
    """Optimisation settings for one training run.

    Attributes:
        epochs: Passes over the (possibly oversampled) training set.
        learning_rate: Step size.
        batch_size: Mini-batch size; >= the training size means full batch.
        class_weights: Optional per-class loss weights (length C, all > 0).
        rng_seed: Seed of initialisation, shuffling and augmentation.
        oversample_multipliers: Optional per-class appearance counts per epoch (length C, >= 1).
        hidden_width: Width of the tanh hidden layer; 0 gives plain logistic regression.
        optimizer: Update rule.
        augmentation: Augmentation applied to duplicated copies.
        jitter_sigma: Std of the Gaussian feature jitter.
    """
    epochs: int = 30
    learning_rate: float = 0.05
    batch_size: int = 32
    class_weights: Optional[Tuple[float, ...]] = None
    rng_seed: int = 0
    oversample_multipliers: Optional[Tuple[int, ...]] = None
    hidden_width: int = 32
    optimizer: Optimizer = Optimizer.SGD
    augmentation: Augmentation = Augmentation.JITTER
    jitter_sigma: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.hidden_width < 0:
            raise ConfigurationError(f"hidden_width must be >= 0, got {self.hidden_width}")
        if self.jitter_sigma < 0:
            raise ConfigurationError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")
        if self.class_weights is not None:
            object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))
            if any(not w > 0 for w in self.class_weights):
                raise ConfigurationError(f"class weights must be > 0, got {self.class_weights}")
        if self.oversample_multipliers is not None:
            object.__setattr__(self, "oversample_multipliers", tuple(int(m) for m in self.oversample_multipliers))
            if any(m < 1 for m in self.oversample_multipliers):
                raise ConfigurationError(f"oversample multipliers must be >= 1, got {self.oversample_multipliers}")
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        object.__setattr__(self, "augmentation", Augmentation(self.augmentation))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis.

    Args:
        logits: Vector of length C or matrix (n, C).

    Returns:
        Probabilities of the same shape.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise InvalidInputError("logits must be finite")
    return _scipy_softmax(logits, axis=-1)


def init_params(input_dim: int, hidden_width: int, num_classes: int, rng: np.random.Generator) -> Params:
    """Glorot-style initialisation of the reference network."""
    if hidden_width == 0:
        return {
            "W": rng.normal(0.0, np.sqrt(1.0 / input_dim), (input_dim, num_classes)),
            "b": np.zeros(num_classes),
        }
    return {
        "W1": rng.normal(0.0, np.sqrt(2.0 / (input_dim + hidden_width)), (input_dim, hidden_width)),
        "b1": np.zeros(hidden_width),
        "W2": rng.normal(0.0, np.sqrt(2.0 / (hidden_width + num_classes)), (hidden_width, num_classes)),
        "b2": np.zeros(num_classes),
    }


def forward(params: Params, X: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Compute logits (and hidden activations when there is a hidden layer)."""
    if "W" in params:
        return X @ params["W"] + params["b"], None
    hidden = np.tanh(X @ params["W1"] + params["b1"])
    return hidden @ params["W2"] + params["b2"], hidden


def loss_and_gradients(
    params: Params,
    X: np.ndarray,
    y: np.ndarray,
    sample_weights: np.ndarray
) -> Tuple[float, Params]:
    """Weighted cross-entropy and its analytic gradient.

    loss = -sum_i w_i log p_{y_i}(x_i) / sum_i w_i

    Args:
        params: Network parameters.
        X: Inputs (n, d).
        y: Integer labels (n,).
        sample_weights: Per-row weights w_i > 0 (n,).

    Returns:
        (loss, gradients keyed like params)
    """
    logits, hidden = forward(params, X)
    log_probs = log_softmax(logits, axis=1)
    rows = np.arange(len(y))
    normalized = sample_weights / sample_weights.sum()
    loss = float(-np.sum(normalized * log_probs[rows, y]))

    dlogits = np.exp(log_probs)
    dlogits[rows, y] -= 1.0
    dlogits *= normalized[:, None]

    if hidden is None:
        return loss, {"W": X.T @ dlogits, "b": dlogits.sum(axis=0)}

    dhidden = (dlogits @ params["W2"].T) * (1.0 - hidden ** 2)
    return loss, {
        "W1": X.T @ dhidden,
        "b1": dhidden.sum(axis=0),
        "W2": hidden.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }


class _AdamState:
    """First/second moment estimates for Adam."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, params: Params):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: Params, grads: Params, lr: float) -> None:
        self.t += 1
        for key in sorted(params):
            self.m[key] = self.BETA1 * self.m[key] + (1 - self.BETA1) * grads[key]
            self.v[key] = self.BETA2 * self.v[key] + (1 - self.BETA2) * grads[key] ** 2
            m_hat = self.m[key] / (1 - self.BETA1 ** self.t)
            v_hat = self.v[key] / (1 - self.BETA2 ** self.t)
            params[key] -= lr * m_hat / (np.sqrt(v_hat) + self.EPS)


def _augment(
    X: np.ndarray,
    is_copy: np.ndarray,
    settings: TrainSettings,
    rng: np.random.Generator
) -> np.ndarray:
    """Perturb duplicated rows; first appearances stay clean."""
    if settings.augmentation is Augmentation.NONE or not is_copy.any() or settings.jitter_sigma == 0:
        return X

    X = X.copy()
    copies = X[is_copy]
    sigma = settings.jitter_sigma
    if settings.augmentation is Augmentation.JITTER:
        X[is_copy] = copies + rng.normal(0.0, sigma, copies.shape)
    else:
        # Three jittered chains mixed with Dirichlet weights, then blended with the clean row
        chains = copies[None, :, :] + rng.normal(0.0, sigma, (3,) + copies.shape)
        weights = rng.dirichlet(np.ones(3), size=len(copies))
        mixed = np.einsum("kn,knd->nd", weights.T, chains)
        blend = rng.beta(1.0, 1.0, size=(len(copies), 1))
        X[is_copy] = blend * copies + (1.0 - blend) * mixed
    return X


class ReferenceClassifier(IClassifier):
    """Built-in feature-space classifier.

    Trains from scratch on every fit() call; (dataset, indices, settings)
    fully determine the resulting parameters.
    """

    def __init__(self, **config):
        """Initialize the classifier.

        Args:
            **config: Unused; accepted so factories can pass component config.
        """
        self.config = config
        self.params: Optional[Params] = None
        self.mean: Optional[np.ndarray] = None
        self.scale: Optional[np.ndarray] = None
        self.num_classes: Optional[int] = None
        self.loss_history: List[float] = []

    @property
    def is_fitted(self) -> bool:
        return self.params is not None

    def fit(self, dataset: Dataset, train_idx: Sequence[int], settings: TrainSettings) -> "ReferenceClassifier":
        """Train on the rows `train_idx` of `dataset`.

        Args:
            dataset: Dataset holding the rows.
            train_idx: Positional indices of training rows.
            settings: Optimisation settings.

        Returns:
            self
        """
        idx = np.asarray(list(train_idx), dtype=np.int64)
        if len(idx) == 0:
            raise InvalidInputError("cannot fit on an empty training set")
        if idx.min() < 0 or idx.max() >= len(dataset):
            raise InvalidInputError("training indices out of range")

        C = dataset.num_classes
        weights = np.ones(C) if settings.class_weights is None else np.asarray(settings.class_weights)
        if len(weights) != C:
            raise InvalidInputError(f"class_weights has length {len(weights)}, expected {C}")
        multipliers = (
            np.ones(C, dtype=np.int64) if settings.oversample_multipliers is None
            else np.asarray(settings.oversample_multipliers, dtype=np.int64)
        )
        if len(multipliers) != C:
            raise InvalidInputError(f"oversample_multipliers has length {len(multipliers)}, expected {C}")

        rng = np.random.default_rng(settings.rng_seed)
        X_raw = dataset.features[idx]
        y = dataset.labels[idx]

        self.mean = X_raw.mean(axis=0)
        self.scale = np.maximum(X_raw.std(axis=0), 1e-8)
        self.num_classes = C
        params = init_params(dataset.feature_dim, settings.hidden_width, C, rng)

        # Class c rows appear multiplier_c times per epoch, duplicates flagged for augmentation
        repeats = multipliers[y]
        epoch_rows = np.repeat(np.arange(len(idx)), repeats)
        is_copy = np.concatenate([np.arange(r) > 0 for r in repeats]) if len(repeats) else np.zeros(0, bool)

        adam = _AdamState(params) if settings.optimizer is Optimizer.ADAM else None
        self.loss_history = []
        logger.debug(
            f"Fitting reference classifier: {len(idx)} rows, {len(epoch_rows)} per epoch, "
            f"hidden={settings.hidden_width}, optimizer={settings.optimizer.value}"
        )

        for _ in range(settings.epochs):
            X_epoch = _augment(X_raw[epoch_rows], is_copy, settings, rng)
            X_epoch = (X_epoch - self.mean) / self.scale
            y_epoch = y[epoch_rows]
            order = rng.permutation(len(epoch_rows))

            batch_losses = []
            batch_sizes = []
            for start in range(0, len(order), settings.batch_size):
                batch = order[start:start + settings.batch_size]
                loss, grads = loss_and_gradients(params, X_epoch[batch], y_epoch[batch], weights[y_epoch[batch]])
                if adam is not None:
                    adam.step(params, grads, settings.learning_rate)
                else:
                    for key in sorted(params):
                        params[key] -= settings.learning_rate * grads[key]
                batch_losses.append(loss)
                batch_sizes.append(len(batch))
            self.loss_history.append(float(np.average(batch_losses, weights=batch_sizes)))

        self.params = params
        logger.debug(f"Training finished, final epoch loss {self.loss_history[-1]:.4f}")
        return self

    def predict_logits(self, features: np.ndarray) -> np.ndarray:
        if not self.is_fitted:
            raise ModelNotFittedError("ReferenceClassifier.predict_logits called before fit()")
        X = (np.atleast_2d(np.asarray(features, dtype=np.float64)) - self.mean) / self.scale
        logits, _ = forward(self.params, X)
        return logits


class MockClassifier(IClassifier):
    """Deterministic classifier for tests: logits = features @ projection.

    fit() records its arguments and leaves the projection unchanged.
    """

    def __init__(self, projection: Optional[np.ndarray] = None, num_classes: int = 2, **config):
        """Initialize the mock.

        Args:
            projection: Matrix (d, C) mapping features to logits; zeros when omitted.
            num_classes: C, used when no projection is given.
        """
        self.config = config
        self.projection = None if projection is None else np.asarray(projection, dtype=np.float64)
        self.num_classes = num_classes if projection is None else self.projection.shape[1]
        self.fit_calls: List[Tuple[int, ...]] = []
        self._fitted = False
        logger.info("MockClassifier initialized (for tests)")

    @property
    def is_fitted(self) -> bool:
        return self._fitted

    def fit(self, dataset: Dataset, train_idx: Sequence[int], settings: TrainSettings) -> "MockClassifier":
        if len(train_idx) == 0:
            raise InvalidInputError("cannot fit on an empty training set")
        self.fit_calls.append(tuple(int(i) for i in train_idx))
        if self.projection is None:
            self.projection = np.zeros((dataset.feature_dim, dataset.num_classes))
            self.num_classes = dataset.num_classes
        self._fitted = True
        return self

    def predict_logits(self, features: np.ndarray) -> np.ndarray:
        if not self._fitted:
            raise ModelNotFittedError("MockClassifier.predict_logits called before fit()")
        return np.atleast_2d(np.asarray(features, dtype=np.float64)) @ self.projection


class Prediction(NamedTuple):
    """Posterior of one instance."""
    instance_id: int
    probs: np.ndarray
    logits: np.ndarray


def predict_proba(model: IClassifier, dataset: Dataset, idx: Sequence[int]) -> List[Prediction]:
    """Predict posteriors for the rows `idx`, in the given order.

    Args:
        model: Fitted classifier.
        dataset: Dataset holding the rows.
        idx: Positional indices.

    Returns:
        One Prediction per index; logits are kept for calibration.
    """
    if not model.is_fitted:
        raise ModelNotFittedError("predict_proba requires a fitted model")
    idx = np.asarray(list(idx), dtype=np.int64)
    if len(idx) == 0:
        return []
    logits = model.predict_logits(dataset.features[idx])
    probs = softmax(logits)
    return [
        Prediction(int(dataset.instance_ids[i]), probs[row], logits[row])
        for row, i in enumerate(idx)
    ]


def inverse_frequency_weights(dataset: Dataset, train_idx: Sequence[int]) -> np.ndarray:
    """Class weights w_c = N / (C * n_c) over the training rows.

    Args:
        dataset: Dataset holding the rows.
        train_idx: Positional indices of training rows.

    Returns:
        Weight vector of length C.
    """
    counts = dataset.class_counts(train_idx)
    missing = np.flatnonzero(counts == 0)
    if len(missing):
        raise InvalidInputError(f"class {int(missing[0])} has no training rows; inverse-frequency weight undefined")
    return counts.sum() / (dataset.num_classes * counts.astype(np.float64))


def with_seed(settings: TrainSettings, rng_seed: int) -> TrainSettings:
    """Copy of `settings` with a different seed."""
    return replace(settings, rng_seed=int(rng_seed))
