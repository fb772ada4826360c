"""Subject-respecting partitioning of grouped datasets.

Every split here moves whole subjects, so correlated samples of one
subject never straddle the held-out test set and the rest of the data.
"""

import logging
import math
from typing import Dict, List

import numpy as np

from active_subset.exceptions import ConfigurationError
from active_subset.interfaces import Dataset, Partition, SubjectId

logger = logging.getLogger(__name__)

MIN_SUBJECTS_PER_CLASS = 3
MIN_NON_TEST_SUBJECTS = 2


def round_half_up(value: float) -> int:
    """Round to the nearest integer, halves going up."""
    return int(math.floor(value + 0.5))


def shuffled_subjects(subjects: List[SubjectId], rng: np.random.Generator) -> List[SubjectId]:
    # Start from the sorted list so row order in the file never matters
    ordered = sorted(subjects)
    return [ordered[i] for i in rng.permutation(len(ordered))]


def split_by_subject(dataset: Dataset, test_fraction: float = 0.2, rng_seed: int = 0) -> Partition:
    """Hold out whole subjects per class as the test set.

    Per class, max(1, round(test_fraction * n_subjects)) subjects go to test;
    every other row lands in the pool, pending seed selection.

    Args:
        dataset: Dataset to split.
        test_fraction: Share of each class's subjects held out, in (0, 1).
        rng_seed: Seed of the subject shuffle.

    Returns:
        Partition with an empty train set.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigurationError(f"test_fraction must lie in (0, 1), got {test_fraction}")

    rng = np.random.default_rng(rng_seed)
    by_class = dataset.subjects_by_class()
    test_subjects: List[SubjectId] = []

    for label in range(dataset.num_classes):
        subjects = by_class[label]
        if len(subjects) < MIN_SUBJECTS_PER_CLASS:
            raise ConfigurationError(
                f"class {label} has {len(subjects)} subject(s); at least "
                f"{MIN_SUBJECTS_PER_CLASS} are needed (2 for the seed, 1 for test)"
            )
        n_test = max(1, round_half_up(test_fraction * len(subjects)))
        if len(subjects) - n_test < MIN_NON_TEST_SUBJECTS:
            raise ConfigurationError(
                f"test_fraction={test_fraction} leaves class {label} with fewer than "
                f"{MIN_NON_TEST_SUBJECTS} non-test subjects"
            )
        test_subjects.extend(shuffled_subjects(subjects, rng)[:n_test])

    test_idx = dataset.indices_of_subjects(test_subjects)
    test_set = set(test_idx.tolist())
    rest = [i for i in range(len(dataset)) if i not in test_set]

    partition = Partition.from_indices(train=(), pool=rest, test=test_idx)
    partition.validate(dataset)
    logger.info(
        f"Subject split: {len(test_subjects)} test subjects ({len(test_idx)} rows), "
        f"{len(rest)} rows available for train/pool"
    )
    return partition


def select_balanced_seed(
    partition: Partition,
    dataset: Dataset,
    subjects_per_class: int = 2,
    rng_seed: int = 0,
    allow_empty: bool = False
) -> Partition:
    """Build a perfectly balanced initial training set of whole subjects.

    Args:
        partition: Partition whose non-test rows are redistributed.
        dataset: Dataset the partition refers to.
        subjects_per_class: Subjects drawn per class for the seed.
        rng_seed: Seed of the subject draw.
        allow_empty: Permit subjects_per_class=0 (empty train set).

    Returns:
        Partition with the seed subjects in train and every other non-test row in the pool.
    """
    if subjects_per_class < 0 or (subjects_per_class == 0 and not allow_empty):
        raise ConfigurationError(
            f"subjects_per_class must be >= 1 (0 only with allow_empty), got {subjects_per_class}"
        )

    non_test = sorted(set(partition.train) | set(partition.pool))
    by_class = dataset.subjects_by_class(non_test)
    rng = np.random.default_rng(rng_seed)

    seed_subjects: Dict[int, List[SubjectId]] = {}
    for label in range(dataset.num_classes):
        available = by_class[label]
        if len(available) < subjects_per_class:
            raise ConfigurationError(
                f"class {label} has {len(available)} non-test subject(s), "
                f"{subjects_per_class} needed for the balanced seed"
            )
        seed_subjects[label] = shuffled_subjects(available, rng)[:subjects_per_class]

    chosen = [s for subjects in seed_subjects.values() for s in subjects]
    train_idx = dataset.indices_of_subjects(chosen, within=non_test)
    train_set = set(train_idx.tolist())

    seeded = Partition.from_indices(
        train=train_idx,
        pool=[i for i in non_test if i not in train_set],
        test=partition.test,
    )
    seeded.validate(dataset, subject_closed=True)
    logger.info(f"Balanced seed: {len(chosen)} subjects, {len(train_idx)} rows in train")
    return seeded
