"""Tests for CSV dataset I/O."""

import numpy as np
import pytest

from active_subset.components.generators import GeneratorSpec, generate
from active_subset.components.loaders import CSVDatasetLoader, file_sha256, load_csv, save_csv
from active_subset.exceptions import DatasetFormatError, InvalidInputError
from active_subset.interfaces import IDatasetLoader

HEADER = "instance_id,subject_id,label,f0,f1\n"


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestRoundTrip:
    """save_csv / load_csv identity."""

    @pytest.mark.parametrize("seed", range(100))
    def test_generated_round_trip(self, tmp_path, seed):
        rng = np.random.default_rng(seed)
        num_classes = int(rng.integers(2, 6))
        dataset = generate(GeneratorSpec(
            num_classes=num_classes,
            feature_dim=int(rng.integers(1, 9)),
            subjects_per_class=tuple(int(n) for n in rng.integers(1, 6, size=num_classes)),
            instances_per_subject=int(rng.integers(1, 5)),
            rng_seed=seed,
        ))
        path = save_csv(dataset, tmp_path / "out" / "ds.csv")
        loaded = load_csv(path)
        assert loaded == dataset
        assert loaded.num_classes == num_classes

    def test_refuses_dataset_with_empty_top_class(self, tmp_path, make_dataset):
        dataset = make_dataset((2, 2, 0, 0))
        with pytest.raises(InvalidInputError, match="load back with 2 classes"):
            save_csv(dataset, tmp_path / "ds.csv")
        assert not (tmp_path / "ds.csv").exists()

    def test_empty_middle_class_round_trips(self, tmp_path, make_dataset):
        dataset = make_dataset((2, 0, 2))
        assert load_csv(save_csv(dataset, tmp_path / "ds.csv")) == dataset


    def test_file_layout(self, tmp_path, small_dataset):
        path = save_csv(small_dataset, tmp_path / "ds.csv")
        lines = path.read_text(encoding="utf-8").split("\n")
        assert lines[0] == "instance_id,subject_id,label,f0,f1,f2,f3"
        assert lines[-1] == ""
        assert len(lines) == len(small_dataset) + 2

    def test_saved_bytes_are_stable(self, tmp_path, small_dataset):
        a = save_csv(small_dataset, tmp_path / "a.csv")
        b = save_csv(small_dataset, tmp_path / "b.csv")
        assert file_sha256(a) == file_sha256(b)

    def test_loader_component(self, tmp_path, small_dataset):
        path = save_csv(small_dataset, tmp_path / "ds.csv")
        loader = CSVDatasetLoader(num_classes=4)
        assert isinstance(loader, IDatasetLoader)
        assert loader.load(str(path)) == small_dataset

    def test_infers_num_classes(self, tmp_path):
        path = _write(tmp_path, HEADER + "0,a,0,1.0,2.0\n1,b,2,0.5,0.5\n")
        assert load_csv(path).num_classes == 3


class TestMalformedInput:
    """Errors carry line numbers."""

    def test_conflicting_labels(self, tmp_path):
        path = _write(tmp_path, HEADER + "0,s1,0,1,2\n1,s1,1,1,2\n")
        with pytest.raises(DatasetFormatError, match="s1") as info:
            load_csv(path)
        assert info.value.line_number == 3

    def test_duplicate_id(self, tmp_path):
        path = _write(tmp_path, HEADER + "4,a,0,1,2\n4,b,1,1,2\n")
        with pytest.raises(DatasetFormatError, match="duplicate instance_id 4"):
            load_csv(path)

    def test_inconsistent_dimension(self, tmp_path):
        path = _write(tmp_path, HEADER + "0,a,0,1,2\n1,b,1,1\n")
        with pytest.raises(DatasetFormatError, match="line 3"):
            load_csv(path)

    def test_non_numeric_feature(self, tmp_path):
        path = _write(tmp_path, HEADER + "0,a,0,1,x\n")
        with pytest.raises(DatasetFormatError, match="line 2"):
            load_csv(path)

    def test_bad_subject_id(self, tmp_path):
        path = _write(tmp_path, HEADER + "0,a b,0,1,2\n")
        with pytest.raises(DatasetFormatError, match="subject_id"):
            load_csv(path)

    def test_non_integer_label(self, tmp_path):
        path = _write(tmp_path, HEADER + "0,a,zero,1,2\n")
        with pytest.raises(DatasetFormatError, match="label"):
            load_csv(path)

    def test_empty_data_section(self, tmp_path):
        path = _write(tmp_path, HEADER)
        with pytest.raises(DatasetFormatError, match="no rows"):
            load_csv(path)

    def test_bad_header(self, tmp_path):
        path = _write(tmp_path, "id,subject,label,f0\n0,a,0,1\n")
        with pytest.raises(DatasetFormatError, match="line 1"):
            load_csv(path)

    def test_label_beyond_declared_classes(self, tmp_path):
        path = _write(tmp_path, HEADER + "0,a,3,1,2\n")
        with pytest.raises(DatasetFormatError):
            load_csv(path, num_classes=2)

    def test_invalid_utf8(self, tmp_path):
        path = tmp_path / "latin1.csv"
        path.write_bytes(HEADER.encode() + b"0,a,0,1,2\n1,b\xe9,1,1,2\n")
        with pytest.raises(DatasetFormatError, match="UTF-8") as info:
            load_csv(path)
        assert info.value.line_number == 3

    def test_nul_byte(self, tmp_path):
        path = tmp_path / "nul.csv"
        path.write_bytes(HEADER.encode() + b"0,a,0,1,\x002\n")
        with pytest.raises(DatasetFormatError, match="NUL") as info:
            load_csv(path)
        assert info.value.line_number == 2
