"""Evaluation metrics: confusion matrix, accuracy, macro-F1 and NLL."""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import confusion_matrix, f1_score

from active_subset.exceptions import InvalidInputError

logger = logging.getLogger(__name__)

NLL_FLOOR = 1e-15


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """C x C counts; rows are true classes, columns predicted classes."""
    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class EvaluationResult:
    """Metrics of one evaluation pass."""
    accuracy: float
    macro_f1: float
    nll: float
    num_evaluated: int


def confusion(pairs: Iterable[Tuple[int, int]], num_classes: int) -> ConfusionMatrix:
    """Count (true, predicted) label pairs.

    Args:
        pairs: (true, predicted) labels, each in [0, num_classes).
        num_classes: C.

    Returns:
        ConfusionMatrix with counts[t][p] = number of pairs (t, p).
    """
    pairs = list(pairs)
    if not pairs:
        return ConfusionMatrix(np.zeros((num_classes, num_classes), dtype=np.int64))

    y_true, y_pred = (np.asarray(column, dtype=np.int64) for column in zip(*pairs))
    for name, labels in (("true", y_true), ("predicted", y_pred)):
        if labels.min() < 0 or labels.max() >= num_classes:
            raise InvalidInputError(f"{name} label outside [0, {num_classes})")

    counts = confusion_matrix(y_true, y_pred, labels=list(range(num_classes)))
    return ConfusionMatrix(counts.astype(np.int64))


def accuracy(cm: ConfusionMatrix) -> float:
    """trace / total."""
    if cm.total == 0:
        raise InvalidInputError("accuracy of an empty confusion matrix is undefined")
    return float(np.trace(cm.counts) / cm.total)


def per_class_f1(cm: ConfusionMatrix, zero_division: float = 0.0) -> np.ndarray:
    """One-vs-rest F1 of every class; `zero_division` for a class with no true or predicted instances."""
    C = cm.num_classes
    if cm.total == 0:
        return np.full(C, float(zero_division))
    # Back to label pairs, one per counted instance
    true_idx, pred_idx = np.indices((C, C))
    repeats = cm.counts.ravel()
    y_true = np.repeat(true_idx.ravel(), repeats)
    y_pred = np.repeat(pred_idx.ravel(), repeats)
    return f1_score(y_true, y_pred, labels=list(range(C)), average=None, zero_division=zero_division)


def macro_f1(cm: ConfusionMatrix, zero_division: float = 0.0, absent: str = "zero") -> float:
    """Unweighted mean of per-class F1.

    Args:
        cm: Confusion matrix.
        zero_division: F1 of a class with no true or predicted instances.
        absent: 'zero' counts classes absent from truth and prediction with
            F1 = zero_division; 'skip' leaves them out of the mean.

    Returns:
        Macro-F1 in [0, 1].
    """
    if cm.total == 0:
        raise InvalidInputError("macro-F1 of an empty confusion matrix is undefined")
    if absent not in ("zero", "skip"):
        raise InvalidInputError(f"absent must be 'zero' or 'skip', got {absent!r}")

    f1 = per_class_f1(cm, zero_division)
    if absent == "skip":
        present = (cm.counts.sum(axis=0) + cm.counts.sum(axis=1)) > 0
        f1 = f1[present]
    return float(np.mean(f1))


def nll(probs: Sequence, labels: Sequence[int]) -> float:
    """-(1/n) sum log(max(p[y], 1e-15)).

    Args:
        probs: Probability vectors (n, C).
        labels: True classes (n,).
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0 or probs.size == 0:
        raise InvalidInputError("NLL of an empty set is undefined")
    if probs.ndim != 2 or len(probs) != len(labels):
        raise InvalidInputError("probs must be (n, C) with one label per row")
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise InvalidInputError(f"label outside [0, {probs.shape[1]})")
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, NLL_FLOOR))))


def subject_majority_vote(
    subjects: Sequence[str],
    y_true: Sequence[int],
    y_pred: Sequence[int]
) -> List[Tuple[int, int]]:
    """Collapse instance predictions to one (true, predicted) pair per subject.

    The predicted label is the most frequent prediction over the subject's
    instances, ties going to the lower class index. Subjects come out sorted.
    """
    votes: Dict[str, Counter] = defaultdict(Counter)
    truth: Dict[str, int] = {}
    for subject, t, p in zip(subjects, y_true, y_pred):
        votes[str(subject)][int(p)] += 1
        truth[str(subject)] = int(t)

    pairs = []
    for subject in sorted(votes):
        counter = votes[subject]
        winner = min(counter, key=lambda label: (-counter[label], label))
        pairs.append((truth[subject], winner))
    return pairs


def evaluate(
    probs: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    subjects: Optional[Sequence[str]] = None
) -> EvaluationResult:
    """Accuracy, macro-F1 and NLL of a set of posteriors.

    Args:
        probs: Probability vectors (n, C).
        labels: True classes (n,).
        num_classes: C.
        subjects: When given, accuracy and macro-F1 are computed on
            subject-level majority votes; NLL stays per instance.
    """
    predicted = np.argmax(probs, axis=1)
    if subjects is None:
        pairs = list(zip(labels.tolist(), predicted.tolist()))
    else:
        pairs = subject_majority_vote(subjects, labels.tolist(), predicted.tolist())
    cm = confusion(pairs, num_classes)
    return EvaluationResult(
        accuracy=accuracy(cm),
        macro_f1=macro_f1(cm),
        nll=nll(probs, labels),
        num_evaluated=len(pairs),
    )
