"""CSV reading and writing of grouped datasets.

File layout: header `instance_id,subject_id,label,f0,...,f{d-1}`, one row
per instance, UTF-8, newline-terminated. Floats carry 17 significant
digits so a save/load round trip reproduces every value bit for bit.
"""

import csv
import hashlib
import io
import logging
import math
import re
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from active_subset.exceptions import DatasetFormatError, InvalidInputError
from active_subset.interfaces import Dataset, IDatasetLoader

logger = logging.getLogger(__name__)

ID_PATTERN = re.compile(r"^[A-Za-z0-9_-]+$")
FIXED_COLUMNS = ("instance_id", "subject_id", "label")

PathLike = Union[str, Path]


def header_for(feature_dim: int) -> List[str]:
    """Column names of a file with `feature_dim` features."""
    return list(FIXED_COLUMNS) + [f"f{j}" for j in range(feature_dim)]


def save_csv(dataset: Dataset, path: PathLike) -> Path:
    """Write `dataset` to `path`, creating parent directories.

    Args:
        dataset: Dataset to write.
        path: Target file.

    Returns:
        The written path.

    Raises:
        InvalidInputError: For subject ids outside the id alphabet, and when
            the highest classes have no rows, since the file could not
            carry C.
    """
    path = Path(path)
    bad = [s for s in np.unique(dataset.subjects).tolist() if not ID_PATTERN.match(s)]
    if bad:
        raise InvalidInputError(f"subject ids must match {ID_PATTERN.pattern}, got {bad[:3]}")
    # The layout has no place for C; load_csv infers it as max(label) + 1
    top = max(2, int(dataset.labels.max()) + 1) if len(dataset) else 2
    if top != dataset.num_classes:
        raise InvalidInputError(
            f"class {dataset.num_classes - 1} has no rows; the file would load back with {top} classes"
        )

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header_for(dataset.feature_dim))
        for i in range(len(dataset)):
            writer.writerow(
                [int(dataset.instance_ids[i]), dataset.subjects[i], int(dataset.labels[i])]
                + [format(float(x), ".17g") for x in dataset.features[i]]
            )

    logger.info(f"Wrote {len(dataset)} rows to {path}")
    return path


def _parse_int(value: str, column: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise DatasetFormatError(f"{column} {value!r} is not an integer", line) from None


def load_csv(path: PathLike, num_classes: Optional[int] = None) -> Dataset:
    """Read a dataset written by save_csv (or any file in the same layout).

    Args:
        path: File to read.
        num_classes: C; inferred as max(label) + 1 (at least 2) when omitted.

    Returns:
        The loaded Dataset.

    Raises:
        DatasetFormatError: With the offending line number for malformed
            rows, inconsistent feature counts, duplicate ids and subjects
            with conflicting labels; also for a missing header or no rows.
    """
    path = Path(path)
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        line = raw[: e.start].count(b"\n") + 1
        raise DatasetFormatError(f"invalid UTF-8 byte 0x{raw[e.start]:02x}", line) from None
    if "\x00" in text:
        raise DatasetFormatError("NUL character in file", text[: text.index("\x00")].count("\n") + 1)

    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        rows = list(reader)
    except csv.Error as e:
        raise DatasetFormatError(f"unreadable row ({e})", reader.line_num) from None

    if not rows:
        raise DatasetFormatError("file is empty, expected a header", 1)
    header = [h.strip() for h in rows[0]]
    if tuple(header[:3]) != FIXED_COLUMNS:
        raise DatasetFormatError(f"header must start with {','.join(FIXED_COLUMNS)}", 1)
    feature_dim = len(header) - 3
    if feature_dim < 1:
        raise DatasetFormatError("header declares no feature columns", 1)
    if header[3:] != header_for(feature_dim)[3:]:
        raise DatasetFormatError("feature columns must be named f0..f{d-1} in order", 1)

    ids: List[int] = []
    subjects: List[str] = []
    labels: List[int] = []
    features: List[List[float]] = []
    id_lines: Dict[int, int] = {}
    subject_first: Dict[str, tuple] = {}

    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != feature_dim + 3:
            raise DatasetFormatError(
                f"expected {feature_dim + 3} fields, found {len(row)} (inconsistent feature_dim)", line
            )
        instance_id = _parse_int(row[0], "instance_id", line)
        subject = row[1].strip()
        label = _parse_int(row[2], "label", line)

        if not ID_PATTERN.match(subject):
            raise DatasetFormatError(f"subject_id {subject!r} must match {ID_PATTERN.pattern}", line)
        if label < 0:
            raise DatasetFormatError(f"label {label} is negative", line)
        if instance_id in id_lines:
            raise DatasetFormatError(
                f"duplicate instance_id {instance_id} (first seen on line {id_lines[instance_id]})", line
            )
        first_label, first_line = subject_first.setdefault(subject, (label, line))
        if first_label != label:
            raise DatasetFormatError(
                f"subject {subject} has label {label} but label {first_label} on line {first_line}", line
            )

        try:
            values = [float(x) for x in row[3:]]
        except ValueError:
            raise DatasetFormatError("feature value is not a number", line) from None
        if not all(math.isfinite(v) for v in values):
            raise DatasetFormatError("feature values must be finite", line)

        id_lines[instance_id] = line
        ids.append(instance_id)
        subjects.append(subject)
        labels.append(label)
        features.append(values)

    if not ids:
        raise DatasetFormatError("dataset has no rows")

    inferred = max(2, max(labels) + 1)
    if num_classes is None:
        num_classes = inferred
    elif max(labels) >= num_classes:
        raise DatasetFormatError(f"label {max(labels)} outside [0, {num_classes})")

    dataset = Dataset(
        instance_ids=ids,
        subjects=subjects,
        labels=labels,
        features=np.array(features, dtype=np.float64).reshape(len(ids), feature_dim),
        num_classes=num_classes,
    )
    logger.info(f"Loaded {len(dataset)} rows, {len(subject_first)} subjects, d={feature_dim} from {path}")
    return dataset


def file_sha256(path: PathLike) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class CSVDatasetLoader(IDatasetLoader):
    """IDatasetLoader over the CSV layout."""

    def __init__(self, num_classes: Optional[int] = None):
        self.num_classes = num_classes

    def load(self, source: str) -> Dataset:
        return load_csv(source, num_classes=self.num_classes)
