"""Configuration files, suite construction, JSON reports and result tables.

Experiment files are flat `key = value` text, one key per line, with `#`
comments. Every key can also be given on the command line as
`--key-with-dashes`; a flag wins over the file, and the file wins over the
built-in default.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from active_subset import __version__
from active_subset.config import DEFAULT_JOBS, DEFAULT_SEED
from active_subset.components.classifiers import Augmentation, Optimizer, TrainSettings
from active_subset.components.generators import GeneratorSpec
from active_subset.exceptions import ConfigurationError
from active_subset.experiment import (
    CalibrationSplit,
    EvaluationLevel,
    ExperimentConfig,
    SelectionSplit,
    Strategy,
    SuiteRow,
    config_to_dict,
    record_to_dict,
)
from active_subset.interfaces import Dataset
from active_subset.partitioning import round_half_up
from active_subset.sampling import PhaseOneGrouping, SamplingMode
from active_subset.uncertainty import UncertaintyMethod

logger = logging.getLogger(__name__)

DEFAULT_SUITE = (
    "unbalanced, class_weighting, random_undersample, oversample:jitter, "
    "oversample:mix, al:least_confident, al:entropy, al:margin, al:ratio"
)
ALL_METHODS = ("least_confident", "entropy", "margin", "ratio")


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("true", "yes", "1", "on"):
        return True
    if value in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true or false, got {raw!r}")


def _parse_list(item: Callable[[str], Any]) -> Callable[[str], Tuple]:
    def parse(raw: str) -> Tuple:
        parts = [p.strip() for p in raw.replace(";", ",").split(",") if p.strip()]
        if not parts:
            raise ValueError("expected a comma-separated list")
        return tuple(item(p) for p in parts)
    return parse


def _parse_auto(item: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(raw: str):
        return None if raw.strip().lower() == "auto" else item(raw)
    return parse


def _parse_choice(enum_type) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        return enum_type(raw.strip().lower()).value
    return parse


def _parse_methods(raw: str) -> Tuple[str, ...]:
    if raw.strip().lower() == "all":
        return ALL_METHODS
    return tuple(UncertaintyMethod(m).value for m in _parse_list(str.lower)(raw))


@dataclass(frozen=True)
class ConfigKey:
    """One recognised configuration key."""
    name: str
    parse: Callable[[str], Any]
    default: Any
    help: str

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


CONFIG_KEYS: Tuple[ConfigKey, ...] = (
    ConfigKey("suite", _parse_list(str.lower), _parse_list(str.lower)(DEFAULT_SUITE), "strategies to run, one table row each"),
    ConfigKey("sampling_mode", _parse_choice(SamplingMode), "subject", "instance or subject"),
    ConfigKey("k", int, 1, "instances or subjects transferred per iteration"),
    ConfigKey("iterations", int, 10, "active learning iterations M"),
    ConfigKey("seed_subjects_per_class", int, 2, "subjects per class in the balanced seed"),
    ConfigKey("allow_empty_seed", _parse_bool, False, "permit seed_subjects_per_class = 0"),
    ConfigKey("phase_one_grouping", _parse_choice(PhaseOneGrouping), "true_label", "true_label or predicted_label"),
    ConfigKey("calibrated", _parse_bool, False, "fit a temperature every iteration"),
    ConfigKey("calibration_split", _parse_choice(CalibrationSplit), "pool_slice", "pool_slice or test"),
    ConfigKey("calibration_fraction", float, 0.2, "share of pool subjects per class in the slice"),
    ConfigKey("selection_split", _parse_choice(SelectionSplit), "test", "test or pool_slice"),
    ConfigKey("evaluation_level", _parse_choice(EvaluationLevel), "instance", "instance or subject"),
    ConfigKey("test_fraction", float, 0.2, "share of subjects per class held out for test"),
    ConfigKey("undersample_subjects_per_class", _parse_auto(int), None, "auto = smallest class"),
    ConfigKey("oversample_factor", int, 2, "appearances per epoch of minority rows (2 or 3)"),
    ConfigKey("oversample_classes", _parse_list(int), (1, 2), "classes to oversample"),
    ConfigKey("allow_any_oversample_factor", _parse_bool, False, "accept any factor >= 1"),
    ConfigKey("epochs", int, 30, "training epochs"),
    ConfigKey("learning_rate", float, 0.05, "step size"),
    ConfigKey("batch_size", int, 32, "mini-batch size"),
    ConfigKey("hidden_width", int, 32, "tanh hidden units (0 = logistic regression)"),
    ConfigKey("optimizer", _parse_choice(Optimizer), "sgd", "sgd or adam"),
    ConfigKey("augmentation", _parse_choice(Augmentation), "jitter", "jitter, mix or none"),
    ConfigKey("jitter_sigma", float, 0.1, "std of feature jitter on oversampled copies"),
    ConfigKey("seed", int, DEFAULT_SEED, "base seed"),
    ConfigKey("repeats", int, 1, "runs per strategy"),
    ConfigKey("jobs", int, DEFAULT_JOBS, "worker processes"),
    ConfigKey("methods", _parse_methods, ALL_METHODS, "uncertainty methods in ablation grids"),
    ConfigKey("instance_ks", _parse_auto(_parse_list(int)), None, "auto = 1x and 2x the median instances per subject"),
    ConfigKey("subject_ks", _parse_list(int), (1, 2), "subject ks in the ablation grid"),
)
KEYS_BY_NAME: Dict[str, ConfigKey] = {key.name: key for key in CONFIG_KEYS}

_GENERATOR_DEFAULTS = GeneratorSpec()
GENERATOR_KEYS: Tuple[ConfigKey, ...] = (
    ConfigKey("num_classes", int, _GENERATOR_DEFAULTS.num_classes, "number of classes C"),
    ConfigKey("feature_dim", int, _GENERATOR_DEFAULTS.feature_dim, "feature dimension d"),
    ConfigKey("subjects_per_class", _parse_list(int), _GENERATOR_DEFAULTS.subjects_per_class, "subjects of each class"),
    ConfigKey("instances_per_subject", int, _GENERATOR_DEFAULTS.instances_per_subject, "instances per subject"),
    ConfigKey("class_separation", float, _GENERATOR_DEFAULTS.class_separation, "distance between class means"),
    ConfigKey("subject_sigma", float, _GENERATOR_DEFAULTS.subject_sigma, "std of subject offsets"),
    ConfigKey("noise_sigma", float, _GENERATOR_DEFAULTS.noise_sigma, "std of instance noise"),
    ConfigKey("seed", int, _GENERATOR_DEFAULTS.rng_seed, "generator seed"),
)
GENERATOR_KEYS_BY_NAME: Dict[str, ConfigKey] = {key.name: key for key in GENERATOR_KEYS}


def generator_spec(path=None, overrides: Optional[Dict[str, str]] = None) -> GeneratorSpec:
    """GeneratorSpec from defaults, an optional spec file and raw flag overrides."""
    values = {key.name: key.default for key in GENERATOR_KEYS}
    if path is not None:
        values.update(parse_config_file(path, GENERATOR_KEYS_BY_NAME))
    for name, raw in (overrides or {}).items():
        if raw is not None:
            values[name] = parse_value(name, raw, keys=GENERATOR_KEYS_BY_NAME)
    values["rng_seed"] = values.pop("seed")
    return GeneratorSpec(**values)


def default_settings() -> Dict[str, Any]:
    """Every key at its default."""
    return {key.name: key.default for key in CONFIG_KEYS}


def parse_value(
    name: str,
    raw: str,
    line: Optional[int] = None,
    keys: Dict[str, ConfigKey] = KEYS_BY_NAME
) -> Any:
    """Parse the raw text of key `name`."""
    where = "" if line is None else f" (line {line})"
    if name not in keys:
        raise ConfigurationError(f"unknown key {name!r}{where}")
    try:
        return keys[name].parse(raw)
    except ValueError as e:
        raise ConfigurationError(f"{name}: invalid value {raw.strip()!r}{where}: {e}") from None


def parse_config_file(path, keys: Dict[str, ConfigKey] = KEYS_BY_NAME) -> Dict[str, Any]:
    """Parse a `key = value` file into typed values (only the keys it sets).

    Args:
        path: Config file.
        keys: Recognised keys.

    Returns:
        Mapping of key to parsed value.
    """
    values: Dict[str, Any] = {}
    seen: Dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigurationError(f"line {line_number}: expected 'key = value', got {text!r}")
            name, raw = (part.strip() for part in text.split("=", 1))
            if name in seen:
                raise ConfigurationError(f"duplicate key {name!r} on lines {seen[name]} and {line_number}")
            seen[name] = line_number
            values[name] = parse_value(name, raw, line_number, keys)

    logger.info(f"Read {len(values)} setting(s) from {path}")
    return values


def resolve_settings(path=None, overrides: Optional[Dict[str, str]] = None) -> Dict[str, Any]:
    """Defaults, then the config file, then raw-string flag overrides."""
    settings = default_settings()
    if path is not None:
        settings.update(parse_config_file(path))
    for name, raw in (overrides or {}).items():
        if raw is not None:
            settings[name] = parse_value(name, raw)
    return settings


def train_settings(settings: Dict[str, Any], **changes) -> TrainSettings:
    """TrainSettings from resolved settings."""
    values = {
        "epochs": settings["epochs"],
        "learning_rate": settings["learning_rate"],
        "batch_size": settings["batch_size"],
        "hidden_width": settings["hidden_width"],
        "optimizer": settings["optimizer"],
        "augmentation": settings["augmentation"],
        "jitter_sigma": settings["jitter_sigma"],
    }
    values.update(changes)
    return TrainSettings(**values)


def base_config(settings: Dict[str, Any], **changes) -> ExperimentConfig:
    """ExperimentConfig carrying every shared setting."""
    values = {
        "sampling_mode": settings["sampling_mode"],
        "k": settings["k"],
        "iterations": settings["iterations"],
        "seed_subjects_per_class": settings["seed_subjects_per_class"],
        "allow_empty_seed": settings["allow_empty_seed"],
        "phase_one_grouping": settings["phase_one_grouping"],
        "calibrated": settings["calibrated"],
        "calibration_split": settings["calibration_split"],
        "calibration_fraction": settings["calibration_fraction"],
        "selection_split": settings["selection_split"],
        "evaluation_level": settings["evaluation_level"],
        "test_fraction": settings["test_fraction"],
        "undersample_subjects_per_class": settings["undersample_subjects_per_class"],
        "oversample_factor": settings["oversample_factor"],
        "oversample_classes": settings["oversample_classes"],
        "allow_any_oversample_factor": settings["allow_any_oversample_factor"],
        "train": train_settings(settings),
        "rng_seed": settings["seed"],
    }
    values.update(changes)
    return ExperimentConfig(**values)


def build_suite(settings: Dict[str, Any]) -> List[ExperimentConfig]:
    """One ExperimentConfig per `suite` entry.

    Entries are strategy names, `oversample:<augmentation>` or `al:<method>`.
    """
    configs = []
    for entry in settings["suite"]:
        strategy, _, variant = entry.partition(":")
        try:
            strategy = Strategy(strategy)
            if strategy is Strategy.AL:
                config = base_config(settings, strategy=strategy, al_method=UncertaintyMethod(variant or "ratio"))
            elif strategy is Strategy.OVERSAMPLE:
                augmentation = variant or settings["augmentation"]
                config = base_config(
                    settings,
                    strategy=strategy,
                    train=train_settings(settings, augmentation=augmentation),
                )
            elif variant:
                raise ValueError(f"{strategy.value} takes no variant")
            else:
                config = base_config(settings, strategy=strategy)
        except ValueError as e:
            raise ConfigurationError(f"suite: invalid entry {entry!r}: {e}") from None
        configs.append(config)

    names = [c.name for c in configs]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        logger.warning(f"Suite lists {duplicates} more than once; rows will repeat")
    return configs


def median_instances_per_subject(dataset: Dataset) -> int:
    """Median number of instances per subject, rounded half up."""
    _, counts = np.unique(dataset.subjects, return_counts=True)
    return max(1, round_half_up(float(np.median(counts))))


@dataclass(frozen=True)
class AblationCell:
    """Coordinates of one ablation grid cell."""
    grid: str
    method: str
    column: str


def build_ablation(settings: Dict[str, Any], dataset: Dataset) -> List[Tuple[AblationCell, ExperimentConfig]]:
    """Configs of the sampling-mode x k grid and of the calibration grid."""
    instance_ks = settings["instance_ks"]
    if instance_ks is None:
        n = median_instances_per_subject(dataset)
        instance_ks = (n, 2 * n)

    cells = []
    for method in settings["methods"]:
        al = {"strategy": Strategy.AL, "al_method": UncertaintyMethod(method)}
        for k in instance_ks:
            column = f"instance k={k}"
            cells.append((
                AblationCell("sampling", method, column),
                base_config(settings, sampling_mode=SamplingMode.INSTANCE, k=k, calibrated=False,
                            label=f"{method}|{column}", **al),
            ))
        for k in settings["subject_ks"]:
            column = f"subject k={k}"
            cells.append((
                AblationCell("sampling", method, column),
                base_config(settings, sampling_mode=SamplingMode.SUBJECT, k=k, calibrated=False,
                            label=f"{method}|{column}", **al),
            ))
        for calibrated in (False, True):
            column = "calibrated" if calibrated else "uncalibrated"
            cells.append((
                AblationCell("calibration", method, column),
                base_config(settings, calibrated=calibrated, label=f"{method}|{column}", **al),
            ))
    return cells


def _cell(mean: float, std: float, repeats: int) -> str:
    return f"{mean:.4f}" if repeats == 1 else f"{mean:.4f} ± {std:.4f}"


def format_table(rows: Sequence[SuiteRow], repeats: int, title: str = "Training method") -> str:
    """Fixed-width 'method | Acc | F1' table with 4-decimal metrics."""
    header = (title, "Acc", "F1")
    body = [
        (row.name, _cell(row.accuracy_mean, row.accuracy_std, repeats), _cell(row.macro_f1_mean, row.macro_f1_std, repeats))
        for row in rows
    ]
    return _render(header, body)


def format_grid(
    rows: Sequence[SuiteRow],
    cells: Sequence[AblationCell],
    grid: str,
    repeats: int
) -> str:
    """Methods down, grid columns across; each cell shows 'Acc / F1'."""
    by_cell = {(c.method, c.column): row for c, row in zip(cells, rows) if c.grid == grid}
    methods = list(dict.fromkeys(c.method for c in cells if c.grid == grid))
    columns = list(dict.fromkeys(c.column for c in cells if c.grid == grid))

    header = ("Method",) + tuple(columns)
    body = []
    for method in methods:
        line = [method]
        for column in columns:
            row = by_cell[(method, column)]
            line.append(
                f"{_cell(row.accuracy_mean, row.accuracy_std, repeats)} / "
                f"{_cell(row.macro_f1_mean, row.macro_f1_std, repeats)}"
            )
        body.append(tuple(line))
    return _render(header, body)


def _render(header: Tuple[str, ...], body: Sequence[Tuple[str, ...]]) -> str:
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]

    def line(values):
        first = values[0].ljust(widths[0])
        rest = [v.rjust(w) for v, w in zip(values[1:], widths[1:])]
        return " | ".join([first, *rest])

    rule = "-+-".join("-" * w for w in widths)
    return "\n".join([line(header), rule, *(line(r) for r in body)])


def _json_ready(value):
    if isinstance(value, tuple):
        return [_json_ready(v) for v in value]
    return value


def build_report(
    command: str,
    rows: Sequence[SuiteRow],
    settings: Dict[str, Any],
    dataset_info: Dict[str, Any],
    wall_clock_seconds: Optional[float] = None,
    extra: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """JSON-ready RunReport.

    Each row echoes its config and every run's records, which is enough to
    re-run and replay the experiment.
    """
    report = {
        "tool": "active-subset",
        "version": __version__,
        "command": command,
        "seed": settings["seed"],
        "repeats": settings["repeats"],
        "settings": {name: _json_ready(value) for name, value in settings.items()},
        "dataset": dataset_info,
        "rows": [
            {
                "name": row.name,
                "config": config_to_dict(row.config),
                "accuracy_mean": row.accuracy_mean,
                "accuracy_std": row.accuracy_std,
                "macro_f1_mean": row.macro_f1_mean,
                "macro_f1_std": row.macro_f1_std,
                "runs": [
                    {
                        "seed": run.config.rng_seed,
                        "exhausted": run.exhausted,
                        "best_m": run.best.m,
                        "best": record_to_dict(run.best),
                        "records": [record_to_dict(r) for r in run.records],
                    }
                    for run in row.runs
                ],
            }
            for row in rows
        ],
        "wall_clock_seconds": wall_clock_seconds,
    }
    if extra:
        report.update(extra)
    return report


def write_report(report: Dict[str, Any], path) -> Path:
    """Write a report deterministically (sorted keys, 2-space indent)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    logger.info(f"Report written to {path}")
    return path
