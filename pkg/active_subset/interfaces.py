"""Domain types and abstract contracts for Active Subset.

This module defines the grouped dataset model (instances carrying a subject
id and a class label), the train/pool/test partition the active learning
loop mutates, and the abstract interfaces that concrete components
implement, so that an external model or data source can be swapped in.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from active_subset.exceptions import InvalidInputError

SubjectId = str


@dataclass(frozen=True)
class Instance:
    """One sample of a grouped dataset.

    Attributes:
        instance_id: Unique integer id.
        subject: Subject the sample belongs to.
        label: Class label in [0, C).
        features: Feature vector of dimension d.
    """
    instance_id: int
    subject: SubjectId
    label: int
    features: np.ndarray = field(compare=False)


def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable grouped, labeled dataset stored column-wise.

    Rows are addressed by position (0..n-1); instance ids are the external
    identifiers that appear in files and reports.

    Attributes:
        instance_ids: Integer ids, shape (n,).
        subjects: Subject ids, shape (n,).
        labels: Class labels, shape (n,).
        features: Feature matrix, shape (n, d).
        num_classes: Number of classes C (>= 2).
    """
    instance_ids: np.ndarray
    subjects: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    num_classes: int

    def __post_init__(self):
        ids = _frozen_array(self.instance_ids, np.int64).reshape(-1)
        subjects = _frozen_array([str(s) for s in self.subjects], str).reshape(-1)
        labels = _frozen_array(self.labels, np.int64).reshape(-1)
        features = _frozen_array(self.features, np.float64)
        if features.ndim == 1:
            shape = (len(ids), -1) if len(ids) else (0, 0)
            features = _frozen_array(features.reshape(shape), np.float64)

        object.__setattr__(self, "instance_ids", ids)
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", features)
        self._validate()

    def _validate(self) -> None:
        n = len(self.instance_ids)
        if self.num_classes < 2:
            raise InvalidInputError(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.subjects) != n or len(self.labels) != n or self.features.shape[0] != n:
            raise InvalidInputError("instance_ids, subjects, labels and features must have equal length")
        if self.features.ndim != 2:
            raise InvalidInputError("features must be a 2-D matrix")
        if len(np.unique(self.instance_ids)) != n:
            raise InvalidInputError("instance_ids must be unique")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidInputError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.features)):
            raise InvalidInputError("features must be finite")

        seen: Dict[str, int] = {}
        for subject, label in zip(self.subjects.tolist(), self.labels.tolist()):
            if seen.setdefault(subject, label) != label:
                raise InvalidInputError(f"subject {subject!r} carries conflicting labels")

    def __len__(self) -> int:
        return len(self.instance_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.instance_ids, other.instance_ids)
            and np.array_equal(self.subjects, other.subjects)
            and np.array_equal(self.labels, other.labels)
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
        )

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def instance(self, index: int) -> Instance:
        """Return the row at `index` as an Instance."""
        return Instance(
            instance_id=int(self.instance_ids[index]),
            subject=str(self.subjects[index]),
            label=int(self.labels[index]),
            features=self.features[index],
        )

    def subject_labels(self) -> Dict[SubjectId, int]:
        """Map every subject to its (single) class label."""
        return dict(zip(self.subjects.tolist(), self.labels.tolist()))

    def subjects_by_class(self, indices: Optional[Iterable[int]] = None) -> Dict[int, List[SubjectId]]:
        """Sorted subject lists per class, restricted to `indices` if given."""
        idx = np.arange(len(self)) if indices is None else np.asarray(list(indices), dtype=np.int64)
        grouped: Dict[int, set] = {c: set() for c in range(self.num_classes)}
        for subject, label in zip(self.subjects[idx].tolist(), self.labels[idx].tolist()):
            grouped[label].add(subject)
        return {c: sorted(subjects) for c, subjects in grouped.items()}

    def indices_of_subjects(
        self,
        subjects: Iterable[SubjectId],
        within: Optional[Iterable[int]] = None
    ) -> np.ndarray:
        """Positional indices of all rows of `subjects`, optionally restricted to `within`."""
        wanted = np.array(sorted({str(s) for s in subjects}), dtype=str)
        mask = np.isin(self.subjects, wanted)
        if within is not None:
            allowed = np.zeros(len(self), dtype=bool)
            allowed[np.asarray(list(within), dtype=np.int64)] = True
            mask &= allowed
        return np.flatnonzero(mask)

    def class_counts(self, indices: Iterable[int]) -> np.ndarray:
        """Number of rows per class among `indices`."""
        idx = np.asarray(list(indices), dtype=np.int64)
        return np.bincount(self.labels[idx], minlength=self.num_classes).astype(np.int64)

    def subject_counts(self, indices: Iterable[int]) -> np.ndarray:
        """Number of distinct subjects per class among `indices`."""
        by_class = self.subjects_by_class(indices)
        return np.array([len(by_class[c]) for c in range(self.num_classes)], dtype=np.int64)


@dataclass(frozen=True)
class Partition:
    """Disjoint train / pool / test sets of positional dataset indices.

    The pool plays the role of the validation set that active learning
    draws from. Index tuples are kept sorted so equal partitions compare equal.
    """
    train: Tuple[int, ...]
    pool: Tuple[int, ...]
    test: Tuple[int, ...]

    @classmethod
    def from_indices(
        cls,
        train: Iterable[int],
        pool: Iterable[int],
        test: Iterable[int]
    ) -> "Partition":
        return cls(
            train=tuple(sorted(int(i) for i in train)),
            pool=tuple(sorted(int(i) for i in pool)),
            test=tuple(sorted(int(i) for i in test)),
        )

    def transfer(self, indices: Iterable[int]) -> "Partition":
        """Move pool members to train.

        Args:
            indices: Positional indices currently in the pool.

        Returns:
            New partition with the indices moved.
        """
        moving = {int(i) for i in indices}
        missing = moving.difference(self.pool)
        if missing:
            raise InvalidInputError(f"cannot transfer indices not in the pool: {sorted(missing)[:10]}")
        return Partition.from_indices(
            train=set(self.train) | moving,
            pool=[i for i in self.pool if i not in moving],
            test=self.test,
        )

    def subjects(self, dataset: Dataset, part: str) -> List[SubjectId]:
        """Sorted distinct subjects of one part ('train', 'pool' or 'test')."""
        idx = np.asarray(getattr(self, part), dtype=np.int64)
        return sorted(set(dataset.subjects[idx].tolist()))

    def validate(self, dataset: Dataset, subject_closed: bool = False) -> None:
        """Check the partition invariants against `dataset`.

        Args:
            dataset: Dataset the indices refer to.
            subject_closed: Also require train and pool to be subject-closed.
        """
        train, pool, test = set(self.train), set(self.pool), set(self.test)
        if train & pool or train & test or pool & test:
            raise InvalidInputError("partition sets overlap")
        if train | pool | test != set(range(len(dataset))):
            raise InvalidInputError("partition does not cover every dataset index")

        test_subjects = set(self.subjects(dataset, "test"))
        other_subjects = set(self.subjects(dataset, "train")) | set(self.subjects(dataset, "pool"))
        if test_subjects & other_subjects:
            raise InvalidInputError(f"test subjects leak into train/pool: {sorted(test_subjects & other_subjects)[:5]}")

        if subject_closed:
            straddling = set(self.subjects(dataset, "train")) & set(self.subjects(dataset, "pool"))
            if straddling:
                raise InvalidInputError(f"subjects straddle train and pool: {sorted(straddling)[:5]}")


class IClassifier(ABC):
    """Contract for models the active learning loop trains and queries.

    Any model exposing these two methods can replace the built-in
    reference classifier.
    """

    @abstractmethod
    def fit(self, dataset: Dataset, train_idx: Sequence[int], settings) -> "IClassifier":
        """Train from scratch on the given rows.

        Args:
            dataset: Dataset holding the rows.
            train_idx: Positional indices of training rows.
            settings: TrainSettings controlling optimisation.

        Returns:
            The fitted classifier (self).
        """
        pass

    @abstractmethod
    def predict_logits(self, features: np.ndarray) -> np.ndarray:
        """Compute logits for a feature matrix.

        Args:
            features: Matrix of shape (n, d).

        Returns:
            Logits of shape (n, C).
        """
        pass

    @property
    @abstractmethod
    def is_fitted(self) -> bool:
        """Whether fit() has completed."""
        pass


class IDatasetLoader(ABC):
    """Interface for reading a grouped dataset from a source."""

    @abstractmethod
    def load(self, source: str) -> Dataset:
        """Load a dataset.

        Args:
            source: Path or identifier of the data source.

        Returns:
            The loaded dataset.
        """
        pass
