"""Shared fixtures."""

import numpy as np
import pytest

from active_subset.components.classifiers import TrainSettings
from active_subset.components.generators import GeneratorSpec, generate
from active_subset.interfaces import Dataset


def build_dataset(subjects_per_class, instances_per_subject=2, feature_dim=2, seed=0):
    """Small hand-laid dataset: subject ids 'c{label}s{j}', random features."""
    rng = np.random.default_rng(seed)
    ids, subjects, labels = [], [], []
    for label, count in enumerate(subjects_per_class):
        for j in range(count):
            for _ in range(instances_per_subject):
                ids.append(len(ids))
                subjects.append(f"c{label}s{j}")
                labels.append(label)
    return Dataset(
        instance_ids=ids,
        subjects=subjects,
        labels=labels,
        features=rng.normal(size=(len(ids), feature_dim)),
        num_classes=len(subjects_per_class),
    )


@pytest.fixture
def make_dataset():
    """Factory for small hand-laid datasets."""
    return build_dataset


@pytest.fixture
def small_spec():
    """A few subjects per class, fast to train on."""
    return GeneratorSpec(
        subjects_per_class=(8, 4, 4, 5),
        instances_per_subject=4,
        feature_dim=4,
        rng_seed=1,
    )


@pytest.fixture
def small_dataset(small_spec):
    return generate(small_spec)


@pytest.fixture
def fast_train():
    """Training settings that keep loop tests quick."""
    return TrainSettings(epochs=3, learning_rate=0.1, batch_size=64, hidden_width=0)
