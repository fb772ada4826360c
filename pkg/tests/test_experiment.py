"""Tests for experiment orchestration."""

import json
from dataclasses import replace
from unittest.mock import Mock

import numpy as np
import pytest

from active_subset.calibration import apply_temperature
from active_subset.components.classifiers import MockClassifier, ReferenceClassifier, TrainSettings
from active_subset.components.generators import GeneratorSpec, generate
from active_subset.exceptions import ConfigurationError, ExperimentError, InvalidInputError
from active_subset.experiment import (
    CalibrationSplit,
    EvaluationLevel,
    ExperimentConfig,
    SelectionSplit,
    Strategy,
    choose_best,
    config_from_dict,
    config_to_dict,
    derive_seed,
    draw_pool_slice,
    record_to_dict,
    replay_transfers,
    run_experiment,
    run_suite,
)
from active_subset.interfaces import Partition
from active_subset.partitioning import split_by_subject
from active_subset.sampling import SamplingMode
from active_subset.uncertainty import UncertaintyMethod


def _failing_factory():
    raise RuntimeError("device out of memory")


@pytest.fixture
def al_config(fast_train):
    """Subject-mode ratio AL, three iterations."""
    return ExperimentConfig(strategy=Strategy.AL, iterations=3, train=fast_train)


class TestExperimentConfig:
    """ExperimentConfig validation and naming."""

    def test_coerces_strings(self):
        config = ExperimentConfig(strategy="al", al_method="entropy", sampling_mode="instance")
        assert config.strategy is Strategy.AL
        assert config.al_method is UncertaintyMethod.ENTROPY
        assert config.sampling_mode is SamplingMode.INSTANCE

    def test_unknown_enum_value(self):
        with pytest.raises(ConfigurationError, match="strategy"):
            ExperimentConfig(strategy="bagging")

    @pytest.mark.parametrize("changes", [
        {"k": 0},
        {"iterations": -1},
        {"seed_subjects_per_class": 0},
        {"test_fraction": 1.0},
        {"calibration_fraction": 0.0},
        {"oversample_factor": 4},
        {"undersample_subjects_per_class": 0},
        {"rng_seed": -1},
    ])
    def test_invalid(self, changes):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**changes)

    def test_any_oversample_factor(self):
        assert ExperimentConfig(oversample_factor=5, allow_any_oversample_factor=True).oversample_factor == 5

    def test_names(self):
        assert ExperimentConfig(al_method="margin").name == "al:margin"
        assert ExperimentConfig(strategy="oversample").name == "oversample:jitter"
        assert ExperimentConfig(strategy="unbalanced").name == "unbalanced"
        assert ExperimentConfig(label="custom").name == "custom"

    def test_check_against_seed_size(self, small_dataset):
        # Smallest class keeps 3 non-test subjects
        ExperimentConfig(seed_subjects_per_class=3).check_against(small_dataset)
        with pytest.raises(ConfigurationError, match="seed_subjects_per_class"):
            ExperimentConfig(seed_subjects_per_class=4).check_against(small_dataset)

    def test_check_against_undersample(self, small_dataset):
        config = ExperimentConfig(strategy="random_undersample", undersample_subjects_per_class=4)
        with pytest.raises(ConfigurationError, match="undersample"):
            config.check_against(small_dataset)

    def test_check_against_oversample_classes(self, small_dataset):
        with pytest.raises(ConfigurationError, match="oversample_classes"):
            ExperimentConfig(strategy="oversample", oversample_classes=(7,)).check_against(small_dataset)

    def test_check_against_too_few_subjects(self, make_dataset):
        with pytest.raises(ConfigurationError, match="class 1"):
            ExperimentConfig().check_against(make_dataset((4, 2)))

    def test_dict_round_trip(self, fast_train):
        config = ExperimentConfig(
            strategy="oversample",
            oversample_classes=(1, 3),
            calibrated=True,
            train=replace(fast_train, class_weights=(1.0, 2.0, 3.0, 4.0), augmentation="mix"),
            label="x",
        )
        data = json.loads(json.dumps(config_to_dict(config)))
        assert data["strategy"] == "oversample"
        assert data["train"]["augmentation"] == "mix"
        assert config_from_dict(data) == config

    def test_from_dict_unknown_field(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            config_from_dict({"strategy": "al", "budget": 3})
        with pytest.raises(ConfigurationError, match="unknown train"):
            config_from_dict({"train": {"momentum": 0.9}})

    def test_from_dict_bad_train_value(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"train": {"optimizer": "lbfgs"}})


class TestSeeds:
    """derive_seed and draw_pool_slice."""

    def test_derive_seed_streams_differ(self):
        seeds = {derive_seed(0, purpose, m) for purpose in range(4) for m in range(3)}
        assert len(seeds) == 12
        assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)

    def test_pool_slice_is_whole_subjects(self, small_dataset):
        partition = split_by_subject(small_dataset, 0.2, 0)
        slice_idx = draw_pool_slice(small_dataset, partition, 0.2, rng_seed=3)
        assert set(slice_idx.tolist()) <= set(partition.pool)
        sliced = set(small_dataset.subjects[slice_idx].tolist())
        assert set(small_dataset.indices_of_subjects(sliced, within=partition.pool).tolist()) == set(slice_idx.tolist())
        # At least one subject of every class present in the pool
        assert small_dataset.subject_counts(slice_idx).min() >= 1

    def test_empty_pool_gives_empty_slice(self, small_dataset):
        partition = Partition.from_indices(train=range(len(small_dataset)), pool=(), test=())
        assert len(draw_pool_slice(small_dataset, partition, 0.2, 0)) == 0


class TestActiveLearningRun:
    """run_experiment with strategy AL."""

    def test_zero_iterations(self, small_dataset, fast_train):
        result = run_experiment(small_dataset, ExperimentConfig(iterations=0, train=fast_train))
        assert len(result.records) == 1
        assert result.best is result.records[0]
        assert result.records[0].transfer is None
        assert result.final_partition == result.initial_partition

    def test_seed_is_balanced(self, small_dataset, al_config):
        result = run_experiment(small_dataset, al_config)
        assert result.records[0].train_subjects_per_class == (2, 2, 2, 2)
        result.initial_partition.validate(small_dataset, subject_closed=True)

    def test_subject_mode_adds_one_subject_per_iteration(self, small_dataset, al_config):
        result = run_experiment(small_dataset, al_config)
        assert [r.m for r in result.records] == [0, 1, 2, 3]
        totals = [sum(r.train_subjects_per_class) for r in result.records]
        assert totals == [8, 9, 10, 11]
        for record in result.records[1:]:
            assert len(record.transfer.moved_subjects) == 1
            assert record.transfer.strategy is SamplingMode.SUBJECT
        result.final_partition.validate(small_dataset, subject_closed=True)

    def test_pool_shrinks_and_train_grows(self, small_dataset, al_config):
        records = run_experiment(small_dataset, al_config).records
        for before, after in zip(records, records[1:]):
            assert after.train_size > before.train_size
            assert after.train_size + after.pool_size == before.train_size + before.pool_size

    def test_exhaustion(self, small_dataset, fast_train):
        # 8 pool subjects remain after the seed; k=1 drains them in 8 iterations
        config = ExperimentConfig(iterations=20, train=fast_train)
        result = run_experiment(small_dataset, config)
        assert result.exhausted
        assert len(result.records) == 9
        assert result.records[-1].pool_size == 0

    def test_replay_reconstructs_final_partition(self, small_dataset, fast_train):
        config = ExperimentConfig(iterations=4, k=2, train=fast_train)
        result = run_experiment(small_dataset, config)
        assert replay_transfers(result.initial_partition, result.records, small_dataset) == result.final_partition

    def test_deterministic(self, small_dataset, al_config):
        first = run_experiment(small_dataset, al_config)
        second = run_experiment(small_dataset, al_config)
        assert first.records == second.records
        assert first.final_partition == second.final_partition

    def test_seed_changes_run(self, small_dataset, al_config):
        a = run_experiment(small_dataset, al_config)
        b = run_experiment(small_dataset, replace(al_config, rng_seed=1))
        assert a.initial_partition != b.initial_partition or a.records != b.records

    def test_instance_mode(self, small_dataset, fast_train):
        config = ExperimentConfig(sampling_mode="instance", k=3, iterations=2, train=fast_train)
        result = run_experiment(small_dataset, config)
        sizes = [r.train_size for r in result.records]
        assert sizes == [sizes[0], sizes[0] + 3, sizes[0] + 6]
        assert result.records[1].transfer.strategy is SamplingMode.INSTANCE

    @pytest.mark.parametrize("split", list(CalibrationSplit))
    def test_calibration_never_hurts_fit_split(self, small_dataset, fast_train, split):
        config = ExperimentConfig(iterations=2, calibrated=True, calibration_split=split, train=fast_train)
        for record in run_experiment(small_dataset, config).records:
            assert record.calibration is not None
            assert record.temperature == record.calibration.temperature
            assert record.calibration.nll_after <= record.calibration.nll_before + 1e-9

    def test_calibration_keeps_predictions(self, small_dataset, fast_train):
        models = []

        def factory():
            models.append(ReferenceClassifier())
            return models[-1]

        config = ExperimentConfig(iterations=3, calibrated=True, train=fast_train)
        result = run_experiment(small_dataset, config, classifier_factory=factory)
        assert len(models) == len(result.records)
        test_features = small_dataset.features[list(result.initial_partition.test)]
        for model, record in zip(models, result.records):
            assert record.temperature is not None
            logits = model.predict_logits(test_features)
            calibrated = apply_temperature(logits, record.temperature)
            np.testing.assert_array_equal(np.argmax(calibrated, axis=1), np.argmax(logits, axis=1))

    def test_uncalibrated_has_no_temperature(self, small_dataset, al_config):
        assert all(r.temperature is None for r in run_experiment(small_dataset, al_config).records)

    def test_pool_slice_selection(self, small_dataset, fast_train):
        config = ExperimentConfig(iterations=2, selection_split=SelectionSplit.POOL_SLICE, train=fast_train)
        result = run_experiment(small_dataset, config)
        assert result.best == choose_best(result.records)
        assert all(0.0 <= r.selection_f1 <= 1.0 for r in result.records)

    def test_subject_level_evaluation(self, small_dataset, fast_train):
        config = ExperimentConfig(iterations=1, evaluation_level=EvaluationLevel.SUBJECT, train=fast_train)
        for record in run_experiment(small_dataset, config).records:
            assert 0.0 <= record.accuracy <= 1.0
            assert record.test_nll >= 0.0

    def test_empty_seed(self, small_dataset, fast_train):
        config = ExperimentConfig(
            seed_subjects_per_class=0, allow_empty_seed=True, iterations=2, calibrated=True, train=fast_train,
        )
        result = run_experiment(small_dataset, config)
        first = result.records[0]
        assert first.train_size == 0
        assert first.temperature is None
        assert first.test_nll == pytest.approx(np.log(4))
        assert sum(result.records[1].train_subjects_per_class) == 1

    def test_mock_classifier_fits_growing_sets(self, small_dataset, fast_train):
        models = []

        def factory():
            models.append(MockClassifier())
            return models[-1]

        config = ExperimentConfig(iterations=2, train=fast_train)
        run_experiment(small_dataset, config, classifier_factory=factory)
        sizes = [len(m.fit_calls[0]) for m in models]
        assert len(models) == 3
        assert sizes == sorted(sizes) and sizes[0] < sizes[-1]


class TestBaselines:
    """Single-fit strategies."""

    @pytest.mark.parametrize("strategy", ["unbalanced", "class_weighting", "random_undersample", "oversample"])
    def test_single_record(self, small_dataset, fast_train, strategy):
        result = run_experiment(small_dataset, ExperimentConfig(strategy=strategy, train=fast_train))
        assert len(result.records) == 1
        record = result.records[0]
        assert record.transfer is None
        assert record.selection_f1 == record.macro_f1

    def test_unbalanced_uses_all_non_test_rows(self, small_dataset, fast_train):
        result = run_experiment(small_dataset, ExperimentConfig(strategy="unbalanced", train=fast_train))
        assert result.records[0].train_subjects_per_class == (6, 3, 3, 4)
        assert result.records[0].pool_size == 0

    def test_undersample_defaults_to_smallest_class(self, small_dataset, fast_train):
        result = run_experiment(small_dataset, ExperimentConfig(strategy="random_undersample", train=fast_train))
        assert result.records[0].train_subjects_per_class == (3, 3, 3, 3)
        result.final_partition.validate(small_dataset, subject_closed=True)

    def test_undersample_explicit_count(self, small_dataset, fast_train):
        config = ExperimentConfig(strategy="random_undersample", undersample_subjects_per_class=2, train=fast_train)
        assert run_experiment(small_dataset, config).records[0].train_subjects_per_class == (2, 2, 2, 2)

    def test_class_weighting_passes_weights(self, small_dataset, fast_train):
        seen = []

        class Recording(MockClassifier):
            def fit(self, dataset, train_idx, settings):
                seen.append(settings)
                return super().fit(dataset, train_idx, settings)

        run_experiment(small_dataset, ExperimentConfig(strategy="class_weighting", train=fast_train), Recording)
        weights = np.array(seen[0].class_weights)
        counts = np.array([24, 12, 12, 16])
        np.testing.assert_allclose(weights, counts.sum() / (4 * counts))

    def test_oversample_passes_multipliers(self, small_dataset, fast_train):
        seen = []

        class Recording(MockClassifier):
            def fit(self, dataset, train_idx, settings):
                seen.append(settings)
                return super().fit(dataset, train_idx, settings)

        config = ExperimentConfig(strategy="oversample", oversample_factor=3, train=fast_train)
        run_experiment(small_dataset, config, Recording)
        assert seen[0].oversample_multipliers == (1, 3, 3, 1)


class TestRunSuite:
    """run_suite aggregation."""

    def test_repeats_use_consecutive_seeds(self, small_dataset, al_config):
        rows = run_suite(small_dataset, [al_config], repeats=3, base_seed=5)
        assert [run.config.rng_seed for run in rows[0].runs] == [5, 6, 7]

    def test_population_std(self, small_dataset, fast_train):
        config = ExperimentConfig(strategy="unbalanced", train=fast_train)
        row = run_suite(small_dataset, [config], repeats=3)[0]
        f1s = [run.best.macro_f1 for run in row.runs]
        assert row.macro_f1_mean == pytest.approx(np.mean(f1s))
        assert row.macro_f1_std == pytest.approx(np.std(f1s, ddof=0))

    def test_identical_configs_give_identical_rows(self, small_dataset, al_config):
        first, second = run_suite(small_dataset, [al_config, al_config], repeats=2)
        assert first.accuracy_mean == second.accuracy_mean
        assert first.macro_f1_std == second.macro_f1_std

    def test_rows_keep_config_order(self, small_dataset, fast_train, al_config):
        unbalanced = ExperimentConfig(strategy="unbalanced", train=fast_train)
        rows = run_suite(small_dataset, [unbalanced, al_config])
        assert [row.name for row in rows] == ["unbalanced", "al:ratio"]

    def test_factory_called_per_fit(self, small_dataset, al_config):
        factory = Mock(side_effect=lambda: MockClassifier())
        run_suite(small_dataset, [al_config], repeats=2, classifier_factory=factory)
        assert factory.call_count == 2 * (al_config.iterations + 1)

    def test_failure_is_wrapped(self, small_dataset, al_config):
        factory = Mock(side_effect=InvalidInputError("boom"))
        with pytest.raises(ExperimentError, match=r"al:ratio \(seed 0\): boom"):
            run_suite(small_dataset, [al_config], classifier_factory=factory)

    def test_foreign_failure_is_wrapped(self, small_dataset, al_config):
        factory = Mock(side_effect=RuntimeError("device out of memory"))
        with pytest.raises(ExperimentError, match=r"al:ratio \(seed 3\): RuntimeError: device out of memory") as info:
            run_suite(small_dataset, [al_config], base_seed=3, classifier_factory=factory)
        assert isinstance(info.value.__cause__, RuntimeError)

    def test_worker_failure_is_wrapped(self, small_dataset, al_config):
        with pytest.raises(ExperimentError, match=r"al:ratio \(seed 0\): RuntimeError: device out of memory"):
            run_suite(small_dataset, [al_config], jobs=2, classifier_factory=_failing_factory)

    @pytest.mark.parametrize("kwargs", [{"repeats": 0}, {"jobs": 0}, {"base_seed": -1}])
    def test_invalid_arguments(self, small_dataset, al_config, kwargs):
        with pytest.raises(ConfigurationError):
            run_suite(small_dataset, [al_config], **kwargs)

    def test_config_errors_surface_before_training(self, small_dataset):
        factory = Mock()
        with pytest.raises(ConfigurationError):
            run_suite(small_dataset, [ExperimentConfig(seed_subjects_per_class=4)], classifier_factory=factory)
        factory.assert_not_called()

    def test_record_to_dict_is_json_ready(self, small_dataset, al_config):
        record = run_suite(small_dataset, [al_config])[0].runs[0].records[1]
        data = json.loads(json.dumps(record_to_dict(record)))
        assert data["m"] == 1
        assert data["transfer"]["strategy"] == "subject"
        assert len(data["train_counts_per_class"]) == 4


@pytest.mark.slow
class TestDirectionalOutcomes:
    """End-to-end orderings on the default synthetic dataset (several minutes)."""

    SEEDS = 5

    @pytest.fixture(scope="class")
    def default_dataset(self):
        return generate(GeneratorSpec())

    def _mean_f1(self, dataset, config):
        return run_suite(dataset, [config], repeats=self.SEEDS)[0].macro_f1_mean

    def test_active_learning_beats_baselines(self, default_dataset):
        train = TrainSettings()
        undersample = self._mean_f1(default_dataset, ExperimentConfig(strategy="random_undersample", train=train))
        unbalanced = self._mean_f1(default_dataset, ExperimentConfig(strategy="unbalanced", train=train))
        al = {
            method: self._mean_f1(default_dataset, ExperimentConfig(al_method=method, train=train))
            for method in UncertaintyMethod
        }
        assert al[UncertaintyMethod.RATIO] >= undersample + 0.05
        assert all(score > unbalanced for score in al.values())

    def test_subject_sampling_beats_instance_sampling(self, default_dataset):
        n = GeneratorSpec().instances_per_subject
        wins = 0
        for method in UncertaintyMethod:
            subject = self._mean_f1(default_dataset, ExperimentConfig(al_method=method, sampling_mode="subject", k=1))
            instance = self._mean_f1(default_dataset, ExperimentConfig(al_method=method, sampling_mode="instance", k=n))
            wins += subject >= instance
        assert wins >= 3
