"""Synthetic grouped, class-imbalanced datasets.

Each class has a mean on a seeded random orthogonal frame; each subject
adds a persistent offset to its class mean and each instance adds its own
noise on top. A subject offset that is large relative to the instance noise
makes the instances of one subject strongly correlated.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from active_subset.exceptions import ConfigurationError
from active_subset.interfaces import Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of a synthetic grouped dataset.

    The default subject counts give one large majority class, one
    mid-sized class and two minority classes floored at 4 subjects.

    Attributes:
        num_classes: C.
        feature_dim: d.
        subjects_per_class: Subjects of each class (length C).
        instances_per_subject: Instances n generated per subject.
        class_separation: Pairwise distance between class means.
        subject_sigma: Std of the per-subject offset.
        noise_sigma: Std of the per-instance noise.
        rng_seed: Generator seed.
    """
    num_classes: int = 4
    feature_dim: int = 16
    subjects_per_class: Tuple[int, ...] = (40, 4, 4, 10)
    instances_per_subject: int = 20
    class_separation: float = 4.0
    subject_sigma: float = 1.5
    noise_sigma: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "subjects_per_class", tuple(int(n) for n in self.subjects_per_class))
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.feature_dim < 1:
            raise ConfigurationError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if len(self.subjects_per_class) != self.num_classes:
            raise ConfigurationError(
                f"subjects_per_class has {len(self.subjects_per_class)} entries, expected {self.num_classes}"
            )
        if any(n < 1 for n in self.subjects_per_class):
            raise ConfigurationError(f"every class needs >= 1 subject, got {self.subjects_per_class}")
        if self.instances_per_subject < 1:
            raise ConfigurationError(f"instances_per_subject must be >= 1, got {self.instances_per_subject}")
        if not self.class_separation > 0:
            raise ConfigurationError(f"class_separation must be > 0, got {self.class_separation}")
        if self.subject_sigma < 0 or self.noise_sigma < 0:
            raise ConfigurationError("subject_sigma and noise_sigma must be >= 0")

    @property
    def num_subjects(self) -> int:
        return sum(self.subjects_per_class)

    @property
    def num_instances(self) -> int:
        return self.num_subjects * self.instances_per_subject


def class_means(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    """Class means with pairwise distance class_separation.

    Orthonormal directions scaled by separation / sqrt(2) are exactly
    `class_separation` apart. With more classes than dimensions the
    directions are random unit vectors instead and distances are approximate.
    """
    C, d = spec.num_classes, spec.feature_dim
    scale = spec.class_separation / math.sqrt(2.0)
    if C <= d:
        q, _ = np.linalg.qr(rng.standard_normal((d, C)))
        return scale * q.T
    directions = rng.standard_normal((C, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return scale * directions


def subject_id(label: int, index: int) -> str:
    """Stable subject id, e.g. s2_0003."""
    return f"s{label}_{index:04d}"


def generate(spec: GeneratorSpec) -> Dataset:
    """Draw a dataset from `spec`; the same spec always gives the same dataset.

    Args:
        spec: Generator parameters.

    Returns:
        Dataset with spec.num_instances rows, ids 0..n-1 in class/subject order.
    """
    rng = np.random.default_rng(spec.rng_seed)
    means = class_means(spec, rng)
    n = spec.instances_per_subject

    subjects, labels, blocks = [], [], []
    for label, count in enumerate(spec.subjects_per_class):
        for j in range(count):
            offset = rng.normal(0.0, spec.subject_sigma, spec.feature_dim)
            noise = rng.normal(0.0, spec.noise_sigma, (n, spec.feature_dim))
            blocks.append(means[label] + offset + noise)
            subjects.extend([subject_id(label, j)] * n)
            labels.extend([label] * n)

    dataset = Dataset(
        instance_ids=np.arange(spec.num_instances),
        subjects=subjects,
        labels=labels,
        features=np.vstack(blocks),
        num_classes=spec.num_classes,
    )
    logger.info(
        f"Generated {len(dataset)} instances from {spec.num_subjects} subjects "
        f"(per class {list(spec.subjects_per_class)}, seed {spec.rng_seed})"
    )
    return dataset
