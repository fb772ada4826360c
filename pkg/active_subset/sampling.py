"""Pool-to-train transfer strategies and conventional imbalance baselines.

Active learning transfers either the top-k uncertain instances, or whole
subjects chosen in two phases: first the class with the highest mean
uncertainty, then the k subjects of that class with the highest mean
uncertainty. Moving whole subjects keeps a subject's correlated samples
from straddling train and pool.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from active_subset.base import BaseSelector
from active_subset.exceptions import ConfigurationError, InvalidInputError, PoolExhaustedError
from active_subset.interfaces import Dataset, Partition, SubjectId
from active_subset.uncertainty import ScoredInstance

logger = logging.getLogger(__name__)

ALLOWED_OVERSAMPLE_FACTORS = (2, 3)


class SamplingMode(Enum):
    """Unit of transfer."""
    INSTANCE = "instance"
    SUBJECT = "subject"


class PhaseOneGrouping(Enum):
    """Which label groups the pool in phase 1 of subject selection."""
    TRUE_LABEL = "true_label"
    PREDICTED_LABEL = "predicted_label"


@dataclass(frozen=True)
class TransferDecision:
    """Record of one pool-to-train transfer.

    Attributes:
        moved_instance_ids: Instance ids that moved, in selection order.
        moved_subjects: Subjects that moved (empty in instance mode).
        target_class: Phase-1 winning class (subject mode only).
        strategy: Sampling mode that produced the decision.
    """
    moved_instance_ids: Tuple[int, ...]
    moved_subjects: Tuple[SubjectId, ...] = field(default_factory=tuple)
    target_class: Optional[int] = None
    strategy: SamplingMode = SamplingMode.INSTANCE


def _mean(values: List[float]) -> float:
    # fsum keeps the mean independent of accumulation order
    return math.fsum(values) / len(values)


def select_instances_topk(scored: List[ScoredInstance], k: int) -> TransferDecision:
    """Move the min(k, |pool|) most uncertain instances.

    Ties are broken by lower instance id.
    """
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    if not scored:
        raise InvalidInputError("cannot select from an empty scored pool")

    ranked = sorted(scored, key=lambda s: (-s.score.value, s.instance_id))
    chosen = tuple(s.instance_id for s in ranked[:k])
    logger.debug(f"Instance top-{k}: moving {len(chosen)} instance(s)")
    return TransferDecision(moved_instance_ids=chosen, strategy=SamplingMode.INSTANCE)


def select_subjects_two_phase(
    scored: List[ScoredInstance],
    subject_map: Mapping[int, SubjectId],
    k: int,
    grouping: PhaseOneGrouping = PhaseOneGrouping.TRUE_LABEL
) -> TransferDecision:
    """Two-phase subject selection.

    Phase 1 averages scores per class and picks the highest mean (ties go
    to the lower class index). Phase 2 averages scores per subject of that
    class and picks the min(k, available) highest (ties go to the
    lexicographically smaller subject). Every pool instance of a winning
    subject moves.

    Args:
        scored: ScoredInstance list for the current pool.
        subject_map: instance_id -> subject id for every scored instance.
        k: Number of subjects to move.
        grouping: Label used to group the pool in phase 1.

    Returns:
        TransferDecision in subject mode.
    """
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    if not scored:
        raise PoolExhaustedError("no pool instances left to select subjects from")

    grouping = PhaseOneGrouping(grouping)
    class_scores: Dict[int, List[float]] = defaultdict(list)
    class_subjects: Dict[int, Set[SubjectId]] = defaultdict(set)
    subject_scores: Dict[SubjectId, List[float]] = defaultdict(list)
    subject_instances: Dict[SubjectId, List[int]] = defaultdict(list)

    for s in scored:
        if s.instance_id not in subject_map:
            raise InvalidInputError(f"instance {s.instance_id} has no subject")
        subject = subject_map[s.instance_id]
        label = s.true_label if grouping is PhaseOneGrouping.TRUE_LABEL else s.predicted_label
        class_scores[label].append(s.score.value)
        class_subjects[label].add(subject)
        subject_scores[subject].append(s.score.value)
        subject_instances[subject].append(s.instance_id)

    # Every grouped class holds at least the subject of one scored instance
    target = min(class_scores, key=lambda c: (-_mean(class_scores[c]), c))
    ranked = sorted(class_subjects[target], key=lambda subj: (-_mean(subject_scores[subj]), subj))
    winners = tuple(ranked[:k])
    moved = tuple(i for subj in winners for i in subject_instances[subj])
    logger.debug(
        f"Two-phase selection: class {target} (mean {_mean(class_scores[target]):.4f}), "
        f"subjects {list(winners)}, {len(moved)} instance(s)"
    )
    return TransferDecision(
        moved_instance_ids=moved,
        moved_subjects=winners,
        target_class=target,
        strategy=SamplingMode.SUBJECT,
    )


class InstanceTopKSelector(BaseSelector):
    """Transfers the k most uncertain instances."""

    def select(self, scored, k, subject_map=None):
        return select_instances_topk(scored, k)


class TwoPhaseSubjectSelector(BaseSelector):
    """Transfers the k most uncertain subjects of the most uncertain class."""

    def __init__(self, grouping: PhaseOneGrouping = PhaseOneGrouping.TRUE_LABEL, **config):
        super().__init__(grouping=grouping, **config)
        self.grouping = PhaseOneGrouping(grouping)

    def select(self, scored, k, subject_map=None):
        if subject_map is None:
            raise InvalidInputError("subject selection needs a subject_map")
        return select_subjects_two_phase(scored, subject_map, k, self.grouping)


def build_selector(mode: SamplingMode, **config) -> BaseSelector:
    """Selector for a sampling mode."""
    if SamplingMode(mode) is SamplingMode.INSTANCE:
        return InstanceTopKSelector(**config)
    return TwoPhaseSubjectSelector(**config)


def random_undersample(
    dataset: Dataset,
    non_test_subjects: Iterable[SubjectId],
    subjects_per_class: Optional[int],
    rng_seed: int
) -> Partition:
    """Random subject-level undersampling to a balanced training set.

    Args:
        dataset: Dataset to sample from.
        non_test_subjects: Subjects eligible for training.
        subjects_per_class: Subjects drawn per class; None takes every eligible subject.
        rng_seed: Seed of the draw.

    Returns:
        Partition with the drawn subjects in train, the other eligible rows
        in the (unused) pool and every remaining row in test.
    """
    eligible = sorted({str(s) for s in non_test_subjects})
    non_test_idx = dataset.indices_of_subjects(eligible)
    by_class = dataset.subjects_by_class(non_test_idx)
    rng = np.random.default_rng(rng_seed)

    chosen: List[SubjectId] = []
    for label in range(dataset.num_classes):
        available = by_class[label]
        n = len(available) if subjects_per_class is None else subjects_per_class
        if n < 1 or n > len(available):
            raise ConfigurationError(
                f"class {label} has {len(available)} eligible subject(s), cannot undersample to {n}"
            )
        chosen.extend(available[i] for i in sorted(rng.permutation(len(available))[:n]))

    train_idx = dataset.indices_of_subjects(chosen)
    train_set = set(train_idx.tolist())
    non_test_set = set(non_test_idx.tolist())
    partition = Partition.from_indices(
        train=train_idx,
        pool=[i for i in non_test_idx.tolist() if i not in train_set],
        test=[i for i in range(len(dataset)) if i not in non_test_set],
    )
    logger.info(f"Random undersampling: {len(chosen)} subjects, {len(train_idx)} rows in train")
    return partition


def build_oversample_multipliers(
    dataset: Dataset,
    train_idx: Sequence[int],
    factor: int,
    minority_classes: Iterable[int],
    allow_any_factor: bool = False
) -> np.ndarray:
    """Per-class appearance counts per epoch for oversampling.

    Args:
        dataset: Dataset (provides C).
        train_idx: Training rows; every minority class must be present.
        factor: Appearances per epoch for minority classes (2 or 3).
        minority_classes: Classes to oversample.
        allow_any_factor: Accept any factor >= 1.

    Returns:
        Integer vector of length C.
    """
    if allow_any_factor:
        if factor < 1:
            raise ConfigurationError(f"oversample factor must be >= 1, got {factor}")
    elif factor not in ALLOWED_OVERSAMPLE_FACTORS:
        raise ConfigurationError(
            f"oversample factor must be one of {ALLOWED_OVERSAMPLE_FACTORS}, got {factor}"
        )

    counts = dataset.class_counts(train_idx)
    multipliers = np.ones(dataset.num_classes, dtype=np.int64)
    for label in minority_classes:
        if not 0 <= label < dataset.num_classes:
            raise ConfigurationError(f"minority class {label} outside [0, {dataset.num_classes})")
        if counts[label] == 0:
            logger.warning(f"Minority class {label} has no training rows; oversampling has no effect")
        multipliers[label] = factor
    return multipliers
