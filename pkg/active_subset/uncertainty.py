"""Per-instance uncertainty scores and pool-wide scoring.

All four methods follow one convention: a higher value means a more
uncertain prediction. Selection of the extremes happens in sampling.py;
the scorers here only score.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import entr

from active_subset.components.classifiers import softmax
from active_subset.exceptions import InvalidInputError, InvalidParameterError
from active_subset.interfaces import Dataset, IClassifier

logger = logging.getLogger(__name__)

RATIO_EPSILON = 1e-12
SUM_TOLERANCE = 1e-6


class UncertaintyMethod(Enum):
    """Available uncertainty scorers."""
    LEAST_CONFIDENT = "least_confident"
    MARGIN = "margin"
    RATIO = "ratio"
    ENTROPY = "entropy"


@dataclass(frozen=True)
class UncertaintyScore:
    """Uncertainty of one prediction (higher = more uncertain)."""
    value: float
    method: UncertaintyMethod


@dataclass(frozen=True)
class ScoredInstance:
    """A pool instance with its score and labels.

    Attributes:
        instance_id: Dataset instance id.
        score: Uncertainty score.
        predicted_label: argmax of the scored probability vector.
        true_label: Ground-truth class.
    """
    instance_id: int
    score: UncertaintyScore
    predicted_label: int
    true_label: int


def validate_probabilities(p) -> np.ndarray:
    """Return `p` as a float vector after checking it is a valid distribution."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or len(p) < 2:
        raise InvalidInputError(f"probability vector must be 1-D with at least 2 entries, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidInputError("probability entries must be finite and non-negative")
    if abs(p.sum() - 1.0) > SUM_TOLERANCE:
        raise InvalidInputError(f"probabilities sum to {p.sum():.8f}, expected 1")
    return p


def top_two(p: np.ndarray) -> tuple:
    """Largest and second-largest entries; ties resolved by lower class index."""
    order = np.argsort(-p, kind="stable")
    return p[order[0]], p[order[1]]


def least_confidence(p) -> UncertaintyScore:
    """1 - max_i p_i."""
    p = validate_probabilities(p)
    return UncertaintyScore(float(1.0 - p.max()), UncertaintyMethod.LEAST_CONFIDENT)


def margin(p) -> UncertaintyScore:
    """1 - (p_(1) - p_(2))."""
    p1, p2 = top_two(validate_probabilities(p))
    return UncertaintyScore(float(1.0 - (p1 - p2)), UncertaintyMethod.MARGIN)


def ratio(p) -> UncertaintyScore:
    """-p_(1) / max(p_(2), eps); always <= -1."""
    p1, p2 = top_two(validate_probabilities(p))
    return UncertaintyScore(float(-p1 / max(p2, RATIO_EPSILON)), UncertaintyMethod.RATIO)


def entropy(p) -> UncertaintyScore:
    """Shannon entropy in nats, with 0 * ln 0 = 0."""
    p = validate_probabilities(p)
    return UncertaintyScore(float(entr(p).sum()), UncertaintyMethod.ENTROPY)


SCORERS: Dict[UncertaintyMethod, Callable[[np.ndarray], UncertaintyScore]] = {
    UncertaintyMethod.LEAST_CONFIDENT: least_confidence,
    UncertaintyMethod.MARGIN: margin,
    UncertaintyMethod.RATIO: ratio,
    UncertaintyMethod.ENTROPY: entropy,
}


def score_probabilities(p, method: UncertaintyMethod) -> UncertaintyScore:
    """Dispatch to the scorer of `method`."""
    return SCORERS[UncertaintyMethod(method)](p)


def score_pool(
    model: IClassifier,
    dataset: Dataset,
    pool_idx: Sequence[int],
    method: UncertaintyMethod,
    temperature: Optional[float] = None
) -> List[ScoredInstance]:
    """Score every pool row, preserving pool order.

    Args:
        model: Fitted classifier.
        dataset: Dataset holding the rows.
        pool_idx: Positional indices of pool rows.
        method: Uncertainty method.
        temperature: Optional temperature applied to logits before softmax.

    Returns:
        One ScoredInstance per pool row.
    """
    if temperature is not None and not temperature > 0:
        raise InvalidParameterError(f"temperature must be > 0, got {temperature}")
    idx = np.asarray(list(pool_idx), dtype=np.int64)
    if len(idx) == 0:
        return []

    logits = model.predict_logits(dataset.features[idx])
    if temperature is not None:
        logits = logits / temperature
    probs = softmax(logits)

    scorer = SCORERS[UncertaintyMethod(method)]
    scored = []
    for row, i in enumerate(idx):
        instance_id = int(dataset.instance_ids[i])
        try:
            score = scorer(probs[row])
        except InvalidInputError as e:
            logger.error(f"Scoring failed for instance {instance_id}: {e}")
            raise InvalidInputError(f"instance {instance_id}: {e}") from e
        scored.append(ScoredInstance(
            instance_id=instance_id,
            score=score,
            predicted_label=int(np.argmax(probs[row])),
            true_label=int(dataset.labels[i]),
        ))

    logger.debug(f"Scored {len(scored)} pool rows with {UncertaintyMethod(method).value}")
    return scored
