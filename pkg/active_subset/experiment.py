"""Experiment orchestration: baselines, the active learning loop and suites.

An active learning run splits off a subject-closed test set, seeds the
training set with a balanced handful of subjects, then repeats

    fit -> (calibrate) -> evaluate -> record -> score pool -> select -> transfer

for M iterations. Every record carries the transfer that produced its
training set, so the final partition can be replayed from the records.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from active_subset.calibration import CalibrationResult, apply_temperature, fit_temperature
from active_subset.components.classifiers import (
    ReferenceClassifier,
    TrainSettings,
    inverse_frequency_weights,
    with_seed,
)
from active_subset.exceptions import (
    ActiveSubsetError,
    ConfigurationError,
    ExperimentError,
    PoolExhaustedError,
)
from active_subset.interfaces import Dataset, IClassifier, Partition
from active_subset.metrics import EvaluationResult, evaluate
from active_subset.partitioning import round_half_up, shuffled_subjects, select_balanced_seed, split_by_subject
from active_subset.sampling import (
    ALLOWED_OVERSAMPLE_FACTORS,
    PhaseOneGrouping,
    SamplingMode,
    TransferDecision,
    build_oversample_multipliers,
    build_selector,
    random_undersample,
)
from active_subset.uncertainty import UncertaintyMethod, score_pool

logger = logging.getLogger(__name__)

ClassifierFactory = Callable[[], IClassifier]


class Strategy(Enum):
    """Training-data treatment of a run."""
    UNBALANCED = "unbalanced"
    CLASS_WEIGHTING = "class_weighting"
    RANDOM_UNDERSAMPLE = "random_undersample"
    OVERSAMPLE = "oversample"
    AL = "al"


class CalibrationSplit(Enum):
    """Where the temperature is fitted."""
    POOL_SLICE = "pool_slice"
    TEST = "test"


class SelectionSplit(Enum):
    """Where the best iteration is chosen."""
    TEST = "test"
    POOL_SLICE = "pool_slice"


class EvaluationLevel(Enum):
    """Unit that accuracy and macro-F1 count."""
    INSTANCE = "instance"
    SUBJECT = "subject"


# Purposes mixed into SeedSequence so every random draw has its own stream
SEED_SPLIT = 0
SEED_SELECTION = 1
SEED_SLICE = 2
SEED_TRAIN = 3


def derive_seed(rng_seed: int, purpose: int, m: int = 0) -> int:
    """Sub-seed for one purpose at iteration m."""
    return int(np.random.SeedSequence([rng_seed, purpose, m]).generate_state(1)[0])


_ENUM_FIELDS = {
    "strategy": Strategy,
    "al_method": UncertaintyMethod,
    "sampling_mode": SamplingMode,
    "phase_one_grouping": PhaseOneGrouping,
    "calibration_split": CalibrationSplit,
    "selection_split": SelectionSplit,
    "evaluation_level": EvaluationLevel,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one run.

    AL-only fields (al_method, sampling_mode, k, iterations, seed and
    calibration settings, phase_one_grouping, selection_split) are ignored
    by the baseline strategies.
    """
    strategy: Strategy = Strategy.AL
    al_method: UncertaintyMethod = UncertaintyMethod.RATIO
    sampling_mode: SamplingMode = SamplingMode.SUBJECT
    k: int = 1
    iterations: int = 10
    seed_subjects_per_class: int = 2
    allow_empty_seed: bool = False
    phase_one_grouping: PhaseOneGrouping = PhaseOneGrouping.TRUE_LABEL
    calibrated: bool = False
    calibration_split: CalibrationSplit = CalibrationSplit.POOL_SLICE
    calibration_fraction: float = 0.2
    selection_split: SelectionSplit = SelectionSplit.TEST
    evaluation_level: EvaluationLevel = EvaluationLevel.INSTANCE
    test_fraction: float = 0.2
    undersample_subjects_per_class: Optional[int] = None
    oversample_factor: int = 2
    oversample_classes: Tuple[int, ...] = (1, 2)
    allow_any_oversample_factor: bool = False
    train: TrainSettings = field(default_factory=TrainSettings)
    rng_seed: int = 0
    label: Optional[str] = None

    def __post_init__(self):
        for name, enum_type in _ENUM_FIELDS.items():
            try:
                object.__setattr__(self, name, enum_type(getattr(self, name)))
            except ValueError:
                allowed = ", ".join(e.value for e in enum_type)
                raise ConfigurationError(f"{name}: {getattr(self, name)!r} is not one of {allowed}") from None
        object.__setattr__(self, "oversample_classes", tuple(int(c) for c in self.oversample_classes))

        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        if self.iterations < 0:
            raise ConfigurationError(f"iterations must be >= 0, got {self.iterations}")
        if self.seed_subjects_per_class < 0 or (self.seed_subjects_per_class == 0 and not self.allow_empty_seed):
            raise ConfigurationError(
                f"seed_subjects_per_class must be >= 1 (0 needs allow_empty_seed), got {self.seed_subjects_per_class}"
            )
        for name in ("calibration_fraction", "test_fraction"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1), got {value}")
        if self.undersample_subjects_per_class is not None and self.undersample_subjects_per_class < 1:
            raise ConfigurationError(
                f"undersample_subjects_per_class must be >= 1, got {self.undersample_subjects_per_class}"
            )
        if self.allow_any_oversample_factor:
            if self.oversample_factor < 1:
                raise ConfigurationError(f"oversample_factor must be >= 1, got {self.oversample_factor}")
        elif self.oversample_factor not in ALLOWED_OVERSAMPLE_FACTORS:
            raise ConfigurationError(
                f"oversample_factor must be one of {ALLOWED_OVERSAMPLE_FACTORS}, got {self.oversample_factor}"
            )
        if any(c < 0 for c in self.oversample_classes):
            raise ConfigurationError(f"oversample_classes must be >= 0, got {self.oversample_classes}")
        if not isinstance(self.train, TrainSettings):
            raise ConfigurationError("train must be a TrainSettings")
        if self.rng_seed < 0:
            raise ConfigurationError(f"rng_seed must be >= 0, got {self.rng_seed}")

    @property
    def name(self) -> str:
        """Row name used in tables, e.g. 'al:ratio' or 'oversample:mix'."""
        if self.label:
            return self.label
        if self.strategy is Strategy.AL:
            return f"al:{self.al_method.value}"
        if self.strategy is Strategy.OVERSAMPLE:
            return f"oversample:{self.train.augmentation.value}"
        return self.strategy.value

    def check_against(self, dataset: Dataset) -> None:
        """Dataset-dependent checks, run before any training."""
        bad = [c for c in self.oversample_classes if c >= dataset.num_classes]
        if self.strategy is Strategy.OVERSAMPLE and bad:
            raise ConfigurationError(f"oversample_classes {bad} outside [0, {dataset.num_classes})")
        weights = self.train.class_weights
        if weights is not None and len(weights) != dataset.num_classes:
            raise ConfigurationError(f"class_weights has {len(weights)} entries, expected {dataset.num_classes}")

        # Subject counts per class do not depend on the seed, so one trial split checks them all
        split = split_by_subject(dataset, self.test_fraction, rng_seed=0)
        available = dataset.subject_counts(split.pool)
        if self.strategy is Strategy.AL and available.min() < self.seed_subjects_per_class:
            raise ConfigurationError(
                f"seed_subjects_per_class={self.seed_subjects_per_class} exceeds the "
                f"{int(available.min())} non-test subject(s) of the smallest class"
            )
        per_class = self.undersample_subjects_per_class
        if self.strategy is Strategy.RANDOM_UNDERSAMPLE and per_class is not None and per_class > available.min():
            raise ConfigurationError(
                f"undersample_subjects_per_class={per_class} exceeds the "
                f"{int(available.min())} non-test subject(s) of the smallest class"
            )


@dataclass(frozen=True)
class IterationRecord:
    """Snapshot of one iteration (or of a baseline's single fit).

    Attributes:
        m: Iteration index; 0 is the seed model.
        train_counts_per_class: Training rows per class.
        train_subjects_per_class: Training subjects per class.
        train_size: Training rows.
        pool_size: Pool rows left.
        accuracy: Test accuracy.
        macro_f1: Test macro-F1.
        test_nll: Test NLL (calibrated when a temperature was fitted).
        selection_f1: Macro-F1 on the selection split.
        temperature: Fitted T, if any.
        calibration: Full temperature fit, if any.
        transfer: Transfer that produced this iteration's training set (None at m = 0).
    """
    m: int
    train_counts_per_class: Tuple[int, ...]
    train_subjects_per_class: Tuple[int, ...]
    train_size: int
    pool_size: int
    accuracy: float
    macro_f1: float
    test_nll: float
    selection_f1: float
    temperature: Optional[float] = None
    calibration: Optional[CalibrationResult] = None
    transfer: Optional[TransferDecision] = None


@dataclass(frozen=True)
class ExperimentResult:
    """Records of one run and the iteration chosen as best."""
    config: ExperimentConfig
    records: Tuple[IterationRecord, ...]
    best: IterationRecord
    initial_partition: Partition
    final_partition: Partition
    exhausted: bool = False


class _ColdStartModel(IClassifier):
    """Uniform posterior used while the training set is empty."""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes

    @property
    def is_fitted(self) -> bool:
        return True

    def fit(self, dataset, train_idx, settings):
        return self

    def predict_logits(self, features: np.ndarray) -> np.ndarray:
        return np.zeros((len(np.atleast_2d(features)), self.num_classes))


def choose_best(records: Sequence[IterationRecord]) -> IterationRecord:
    """Record with the highest selection_f1; ties go to the earlier iteration."""
    return max(records, key=lambda r: (r.selection_f1, -r.m))


def _fit(
    dataset: Dataset,
    train_idx: Sequence[int],
    settings: TrainSettings,
    classifier_factory: ClassifierFactory
) -> IClassifier:
    if len(train_idx) == 0:
        return _ColdStartModel(dataset.num_classes)
    return classifier_factory().fit(dataset, train_idx, settings)


def _evaluate(
    model: IClassifier,
    dataset: Dataset,
    idx: Sequence[int],
    level: EvaluationLevel,
    temperature: Optional[float] = None
) -> EvaluationResult:
    idx = np.asarray(idx, dtype=np.int64)
    probs = apply_temperature(model.predict_logits(dataset.features[idx]), temperature or 1.0)
    subjects = dataset.subjects[idx].tolist() if level is EvaluationLevel.SUBJECT else None
    return evaluate(probs, dataset.labels[idx], dataset.num_classes, subjects)


def _record(
    m: int,
    dataset: Dataset,
    partition: Partition,
    evaluation: EvaluationResult,
    selection_f1: float,
    calibration: Optional[CalibrationResult] = None,
    transfer: Optional[TransferDecision] = None
) -> IterationRecord:
    return IterationRecord(
        m=m,
        train_counts_per_class=tuple(int(c) for c in dataset.class_counts(partition.train)),
        train_subjects_per_class=tuple(int(c) for c in dataset.subject_counts(partition.train)),
        train_size=len(partition.train),
        pool_size=len(partition.pool),
        accuracy=evaluation.accuracy,
        macro_f1=evaluation.macro_f1,
        test_nll=evaluation.nll,
        selection_f1=selection_f1,
        temperature=None if calibration is None else calibration.temperature,
        calibration=calibration,
        transfer=transfer,
    )


def draw_pool_slice(dataset: Dataset, partition: Partition, fraction: float, rng_seed: int) -> np.ndarray:
    """Whole pool subjects per class, max(1, round(fraction * n_c)) of them.

    The slice stays in the pool; it is only read for calibration or selection.
    """
    if not partition.pool:
        return np.zeros(0, dtype=np.int64)
    rng = np.random.default_rng(rng_seed)
    by_class = dataset.subjects_by_class(partition.pool)
    chosen = []
    for label in range(dataset.num_classes):
        subjects = by_class[label]
        if subjects:
            n = max(1, round_half_up(fraction * len(subjects)))
            chosen.extend(shuffled_subjects(subjects, rng)[:n])
    return dataset.indices_of_subjects(chosen, within=partition.pool)


def _run_baseline(
    dataset: Dataset,
    config: ExperimentConfig,
    split: Partition,
    classifier_factory: ClassifierFactory
) -> ExperimentResult:
    non_test = sorted(set(split.train) | set(split.pool))
    partition = Partition.from_indices(train=non_test, pool=(), test=split.test)
    settings = with_seed(config.train, derive_seed(config.rng_seed, SEED_TRAIN))

    if config.strategy is Strategy.CLASS_WEIGHTING:
        weights = inverse_frequency_weights(dataset, partition.train)
        settings = replace(settings, class_weights=tuple(weights))
        logger.info(f"Class weights: {np.round(weights, 4).tolist()}")
    elif config.strategy is Strategy.RANDOM_UNDERSAMPLE:
        eligible = split.subjects(dataset, "pool") + split.subjects(dataset, "train")
        per_class = config.undersample_subjects_per_class
        if per_class is None:
            per_class = int(dataset.subject_counts(non_test).min())
        partition = random_undersample(
            dataset, eligible, per_class, derive_seed(config.rng_seed, SEED_SELECTION)
        )
    elif config.strategy is Strategy.OVERSAMPLE:
        multipliers = build_oversample_multipliers(
            dataset,
            partition.train,
            config.oversample_factor,
            config.oversample_classes,
            allow_any_factor=config.allow_any_oversample_factor,
        )
        settings = replace(settings, oversample_multipliers=tuple(multipliers))

    model = _fit(dataset, partition.train, settings, classifier_factory)
    evaluation = _evaluate(model, dataset, partition.test, config.evaluation_level)
    record = _record(0, dataset, partition, evaluation, selection_f1=evaluation.macro_f1)
    logger.info(f"{config.name}: accuracy {record.accuracy:.4f}, macro-F1 {record.macro_f1:.4f}")
    return ExperimentResult(
        config=config,
        records=(record,),
        best=record,
        initial_partition=partition,
        final_partition=partition,
    )


def _run_active_learning(
    dataset: Dataset,
    config: ExperimentConfig,
    split: Partition,
    classifier_factory: ClassifierFactory
) -> ExperimentResult:
    partition = select_balanced_seed(
        split,
        dataset,
        subjects_per_class=config.seed_subjects_per_class,
        rng_seed=derive_seed(config.rng_seed, SEED_SELECTION),
        allow_empty=config.allow_empty_seed,
    )
    initial = partition
    selector = build_selector(config.sampling_mode, grouping=config.phase_one_grouping)
    logger.debug(f"{config.name}: transfers with {selector!r}")
    subject_map = dict(zip(dataset.instance_ids.tolist(), dataset.subjects.tolist()))
    index_of = {instance_id: i for i, instance_id in enumerate(dataset.instance_ids.tolist())}
    needs_slice = (
        (config.calibrated and config.calibration_split is CalibrationSplit.POOL_SLICE)
        or config.selection_split is SelectionSplit.POOL_SLICE
    )

    records: List[IterationRecord] = []
    transfer: Optional[TransferDecision] = None
    exhausted = False

    for m in range(config.iterations + 1):
        settings = with_seed(config.train, derive_seed(config.rng_seed, SEED_TRAIN, m))
        model = _fit(dataset, partition.train, settings, classifier_factory)
        slice_idx = (
            draw_pool_slice(dataset, partition, config.calibration_fraction, derive_seed(config.rng_seed, SEED_SLICE, m))
            if needs_slice else np.zeros(0, dtype=np.int64)
        )

        calibration = None
        if config.calibrated and not isinstance(model, _ColdStartModel):
            fit_idx = slice_idx if config.calibration_split is CalibrationSplit.POOL_SLICE else np.asarray(partition.test)
            if len(fit_idx):
                calibration = fit_temperature(
                    model.predict_logits(dataset.features[fit_idx]), dataset.labels[fit_idx]
                )
            else:
                logger.warning(f"Iteration {m}: empty calibration slice, temperature not fitted")
        temperature = None if calibration is None else calibration.temperature

        evaluation = _evaluate(model, dataset, partition.test, config.evaluation_level, temperature)
        if config.selection_split is SelectionSplit.POOL_SLICE and len(slice_idx):
            selection_f1 = _evaluate(model, dataset, slice_idx, config.evaluation_level).macro_f1
        else:
            selection_f1 = evaluation.macro_f1

        record = _record(m, dataset, partition, evaluation, selection_f1, calibration, transfer)
        records.append(record)
        logger.info(
            f"{config.name} m={m}: train {record.train_size} rows "
            f"{list(record.train_subjects_per_class)} subjects, accuracy {record.accuracy:.4f}, "
            f"macro-F1 {record.macro_f1:.4f}"
            + ("" if temperature is None else f", T={temperature:.4f}")
        )

        if m == config.iterations:
            break
        if not partition.pool:
            logger.warning(f"{config.name}: pool exhausted after iteration {m}")
            exhausted = True
            break

        scored = score_pool(model, dataset, partition.pool, config.al_method, temperature)
        try:
            transfer = selector.run(scored, config.k, subject_map=subject_map)
        except PoolExhaustedError as e:
            logger.warning(f"{config.name}: {e}; stopping after iteration {m}")
            exhausted = True
            break
        partition = partition.transfer(index_of[i] for i in transfer.moved_instance_ids)

    partition.validate(dataset, subject_closed=config.sampling_mode is SamplingMode.SUBJECT)
    best = choose_best(records)
    logger.info(f"{config.name}: best iteration m={best.m}, macro-F1 {best.macro_f1:.4f}")
    return ExperimentResult(
        config=config,
        records=tuple(records),
        best=best,
        initial_partition=initial,
        final_partition=partition,
        exhausted=exhausted,
    )


def run_experiment(
    dataset: Dataset,
    config: ExperimentConfig,
    classifier_factory: ClassifierFactory = ReferenceClassifier
) -> ExperimentResult:
    """Run one configuration.

    Args:
        dataset: Grouped dataset.
        config: Run description.
        classifier_factory: Zero-argument callable returning a fresh IClassifier.

    Returns:
        ExperimentResult; baselines have exactly one record.
    """
    config.check_against(dataset)
    logger.info(f"Starting {config.name} (seed {config.rng_seed})")
    split = split_by_subject(dataset, config.test_fraction, derive_seed(config.rng_seed, SEED_SPLIT))
    if config.strategy is Strategy.AL:
        return _run_active_learning(dataset, config, split, classifier_factory)
    return _run_baseline(dataset, config, split, classifier_factory)


def replay_transfers(initial: Partition, records: Sequence[IterationRecord], dataset: Dataset) -> Partition:
    """Re-apply every recorded transfer to the initial partition."""
    index_of = {instance_id: i for i, instance_id in enumerate(dataset.instance_ids.tolist())}
    partition = initial
    for record in records:
        if record.transfer is not None:
            partition = partition.transfer(index_of[i] for i in record.transfer.moved_instance_ids)
    return partition


@dataclass(frozen=True)
class SuiteRow:
    """Aggregate of one config over its repeats (population std)."""
    name: str
    config: ExperimentConfig
    runs: Tuple[ExperimentResult, ...]
    accuracy_mean: float
    accuracy_std: float
    macro_f1_mean: float
    macro_f1_std: float


def summarize(name: str, config: ExperimentConfig, runs: Sequence[ExperimentResult]) -> SuiteRow:
    """Mean and population std of the best records' accuracy and macro-F1."""
    accuracies = np.array([r.best.accuracy for r in runs])
    f1s = np.array([r.best.macro_f1 for r in runs])
    return SuiteRow(
        name=name,
        config=config,
        runs=tuple(runs),
        accuracy_mean=float(accuracies.mean()),
        accuracy_std=float(accuracies.std()),
        macro_f1_mean=float(f1s.mean()),
        macro_f1_std=float(f1s.std()),
    )


def _run_one(dataset: Dataset, config: ExperimentConfig, classifier_factory: ClassifierFactory) -> ExperimentResult:
    return run_experiment(dataset, config, classifier_factory)


def _run_failed(task: ExperimentConfig, error: Exception) -> ExperimentError:
    """ExperimentError naming the config and seed of a failed run."""
    detail = str(error) if isinstance(error, ActiveSubsetError) else f"{type(error).__name__}: {error}"
    logger.error(f"Run {task.name} (seed {task.rng_seed}) failed: {detail}")
    return ExperimentError(f"{task.name} (seed {task.rng_seed}): {detail}")


def run_suite(
    dataset: Dataset,
    configs: Sequence[ExperimentConfig],
    repeats: int = 1,
    base_seed: int = 0,
    jobs: int = 1,
    classifier_factory: ClassifierFactory = ReferenceClassifier
) -> List[SuiteRow]:
    """Run every config `repeats` times with seeds base_seed..base_seed+repeats-1.

    Args:
        dataset: Grouped dataset.
        configs: Configurations, one table row each.
        repeats: Runs per config.
        base_seed: First seed.
        jobs: Worker processes; results keep submission order for any value.
        classifier_factory: Passed to run_experiment; must be picklable when jobs > 1.

    Returns:
        One SuiteRow per config, in input order.
    """
    if repeats < 1:
        raise ConfigurationError(f"repeats must be >= 1, got {repeats}")
    if jobs < 1:
        raise ConfigurationError(f"jobs must be >= 1, got {jobs}")
    if base_seed < 0:
        raise ConfigurationError(f"seed must be >= 0, got {base_seed}")
    for config in configs:
        config.check_against(dataset)

    tasks = [
        replace(config, rng_seed=base_seed + r)
        for config in configs
        for r in range(repeats)
    ]
    started = time.perf_counter()
    logger.info(f"Running suite: {len(configs)} config(s) x {repeats} repeat(s), jobs={jobs}")

    results: List[ExperimentResult] = []
    if jobs == 1:
        for task in tasks:
            try:
                results.append(_run_one(dataset, task, classifier_factory))
            except Exception as e:
                raise _run_failed(task, e) from e
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            futures = [executor.submit(_run_one, dataset, task, classifier_factory) for task in tasks]
            for task, future in zip(tasks, futures):
                try:
                    results.append(future.result())
                except Exception as e:
                    raise _run_failed(task, e) from e

    rows = [
        summarize(config.name, config, results[i * repeats:(i + 1) * repeats])
        for i, config in enumerate(configs)
    ]
    logger.info(f"Suite finished in {time.perf_counter() - started:.1f}s")
    return rows


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """JSON-ready echo of a config (enums as values, tuples as lists)."""
    def plain(value):
        if isinstance(value, Enum):
            return value.value
        if isinstance(value, tuple):
            return [plain(v) for v in value]
        return value

    data = {f.name: plain(getattr(config, f.name)) for f in fields(config) if f.name != "train"}
    data["train"] = {f.name: plain(getattr(config.train, f.name)) for f in fields(config.train)}
    return data


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """Inverse of config_to_dict; validates every field."""
    data = dict(data)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown config field(s): {unknown}")

    train = dict(data.pop("train", {}) or {})
    train_known = {f.name for f in fields(TrainSettings)}
    unknown = sorted(set(train) - train_known)
    if unknown:
        raise ConfigurationError(f"unknown train field(s): {unknown}")
    try:
        settings = TrainSettings(**train)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"train: {e}") from e

    if "oversample_classes" in data:
        data["oversample_classes"] = tuple(data["oversample_classes"])
    try:
        return ExperimentConfig(train=settings, **data)
    except TypeError as e:
        raise ConfigurationError(str(e)) from e


def record_to_dict(record: IterationRecord) -> Dict[str, Any]:
    """JSON-ready form of a record."""
    data = asdict(record)
    data["train_counts_per_class"] = list(record.train_counts_per_class)
    data["train_subjects_per_class"] = list(record.train_subjects_per_class)
    if record.transfer is not None:
        data["transfer"] = {
            "moved_instance_ids": list(record.transfer.moved_instance_ids),
            "moved_subjects": list(record.transfer.moved_subjects),
            "target_class": record.transfer.target_class,
            "strategy": record.transfer.strategy.value,
        }
    return data

