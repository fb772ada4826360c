"""Command-line entry point: `generate`, `run` and `ablate`.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Tables and summaries go to standard output, logs and errors to standard error.
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from active_subset import __version__, config
from active_subset.components.generators import generate
from active_subset.components.loaders import CSVDatasetLoader, file_sha256, save_csv
from active_subset.exceptions import ActiveSubsetError, ConfigurationError, DatasetFormatError
from active_subset.experiment import run_suite
from active_subset.interfaces import Dataset, IDatasetLoader
from active_subset.reporting import (
    CONFIG_KEYS,
    GENERATOR_KEYS,
    build_ablation,
    build_report,
    build_suite,
    format_grid,
    format_table,
    generator_spec,
    resolve_settings,
    write_report,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

# Source of datasets for `run` and `ablate`
DATASET_LOADER: IDatasetLoader = CSVDatasetLoader()


def class_name(label: int, num_classes: int, names=None) -> str:
    """Display name of a class; configured names apply only when they cover every class."""
    names = config.CLASS_NAMES if names is None else tuple(names)
    if len(names) == num_classes:
        return names[label]
    return f"class {label}"


def _add_key_flags(parser: argparse.ArgumentParser, keys) -> None:
    # Raw strings; parsing and validation happen with the config file values
    for key in keys:
        parser.add_argument(key.flag, dest=key.name, default=None, metavar="VALUE", help=key.help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="active-subset",
        description="Uncertainty-driven subject-level subset selection for imbalanced grouped data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("generate", help="write a synthetic grouped dataset as CSV")
    gen.add_argument("--spec", help="generator spec file (key = value)")
    gen.add_argument("--out", help="output CSV (default: <output dir>/dataset.csv)")
    _add_key_flags(gen, GENERATOR_KEYS)

    for name, help_text in (("run", "run the strategy suite"), ("ablate", "run the sampling and calibration grids")):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", help="experiment config file (key = value)")
        sub.add_argument("--data", required=True, help="dataset CSV")
        sub.add_argument("--out", help=f"JSON report (default: <output dir>/{name}_report.json)")
        sub.add_argument("--record-timing", action="store_true", help="store wall-clock seconds in the report")
        _add_key_flags(sub, CONFIG_KEYS)
    return parser


def _overrides(args: argparse.Namespace, keys) -> Dict[str, Optional[str]]:
    return {key.name: getattr(args, key.name) for key in keys}


def _dataset_info(path: Path, dataset: Dataset) -> Dict[str, Any]:
    return {
        "path": str(path),
        "sha256": file_sha256(path),
        "num_instances": len(dataset),
        "num_classes": dataset.num_classes,
        "feature_dim": dataset.feature_dim,
        "subjects_per_class": dataset.subject_counts(range(len(dataset))).tolist(),
    }


def cmd_generate(args: argparse.Namespace) -> int:
    """Write a generated dataset and print its class summary."""
    spec = generator_spec(args.spec, _overrides(args, GENERATOR_KEYS))
    out = Path(args.out) if args.out else config.OUTPUT_DIR / "dataset.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    dataset = generate(spec)
    save_csv(dataset, out)

    subjects = dataset.subject_counts(range(len(dataset)))
    instances = dataset.class_counts(range(len(dataset)))
    print(f"Wrote {len(dataset)} instances to {out}")
    for label in range(dataset.num_classes):
        print(f"  {class_name(label, dataset.num_classes):<10} {int(subjects[label]):>4} subjects {int(instances[label]):>6} instances")
    return EXIT_OK


def _load(args: argparse.Namespace):
    settings = resolve_settings(args.config, _overrides(args, CONFIG_KEYS))
    path = Path(args.data)
    return settings, path, DATASET_LOADER.load(str(path))


def cmd_run(args: argparse.Namespace) -> int:
    """Run the configured suite; print a table and write the JSON report."""
    settings, path, dataset = _load(args)
    configs = build_suite(settings)
    out = Path(args.out) if args.out else config.OUTPUT_DIR / "run_report.json"

    started = time.perf_counter()
    rows = run_suite(dataset, configs, repeats=settings["repeats"], base_seed=settings["seed"], jobs=settings["jobs"])
    elapsed = time.perf_counter() - started
    logger.info(f"run finished in {elapsed:.2f}s")

    report = build_report(
        "run", rows, settings, _dataset_info(path, dataset),
        wall_clock_seconds=elapsed if args.record_timing else None,
    )
    write_report(report, out)
    print(format_table(rows, settings["repeats"]))
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    """Run the sampling-mode x k grid and the calibration grid."""
    settings, path, dataset = _load(args)
    cells = build_ablation(settings, dataset)
    out = Path(args.out) if args.out else config.OUTPUT_DIR / "ablate_report.json"

    started = time.perf_counter()
    rows = run_suite(
        dataset, [c for _, c in cells],
        repeats=settings["repeats"], base_seed=settings["seed"], jobs=settings["jobs"],
    )
    elapsed = time.perf_counter() - started
    logger.info(f"ablate finished in {elapsed:.2f}s")

    grid_cells = [cell for cell, _ in cells]
    report = build_report(
        "ablate", rows, settings, _dataset_info(path, dataset),
        wall_clock_seconds=elapsed if args.record_timing else None,
        extra={"cells": [{"grid": c.grid, "method": c.method, "column": c.column} for c in grid_cells]},
    )
    write_report(report, out)
    print("Instance vs subject sampling")
    print(format_grid(rows, grid_cells, "sampling", settings["repeats"]))
    print()
    print("Calibration")
    print(format_grid(rows, grid_cells, "calibration", settings["repeats"]))
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "ablate": cmd_ablate}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch and map errors to exit codes."""
    args = build_parser().parse_args(argv)
    config.configure_logging(logging.DEBUG if args.verbose else None)

    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, DatasetFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ActiveSubsetError as e:
        logger.debug("Run failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
