#!/usr/bin/env python
"""Quick demonstration of Active Subset on a small synthetic dataset.

Generates a grouped, imbalanced dataset in memory, runs the unbalanced
baseline against subject-level ratio active learning, and prints the
per-iteration trail of the active learning run. Takes a few seconds.
"""

from active_subset.components.classifiers import TrainSettings
from active_subset.components.generators import GeneratorSpec, generate
from active_subset.experiment import ExperimentConfig, run_experiment, run_suite
from active_subset.reporting import format_table


def main():
    """Demonstration run."""
    print("=" * 60)
    print("🔬 Active Subset demo")
    print("=" * 60)
    print()

    print("📦 Generating a grouped dataset...")
    spec = GeneratorSpec(subjects_per_class=(20, 4, 4, 8), instances_per_subject=10, rng_seed=7)
    dataset = generate(spec)
    print(f"✅ {len(dataset)} instances, subjects per class {list(spec.subjects_per_class)}")
    print()

    train = TrainSettings(epochs=15, hidden_width=16)
    configs = [
        ExperimentConfig(strategy="unbalanced", train=train),
        ExperimentConfig(strategy="random_undersample", train=train),
        ExperimentConfig(strategy="al", al_method="ratio", sampling_mode="subject", k=1, iterations=8, train=train),
    ]

    print("🏃 Running the suite (3 seeds)...")
    rows = run_suite(dataset, configs, repeats=3)
    print()
    print(format_table(rows, repeats=3))
    print()

    print("🔁 Active learning trail (seed 0):")
    print("-" * 60)
    result = run_experiment(dataset, configs[-1])
    for record in result.records:
        moved = "" if record.transfer is None else f"  <- {', '.join(record.transfer.moved_subjects)}"
        print(
            f"m={record.m:<2} subjects {list(record.train_subjects_per_class)}  "
            f"F1 {record.macro_f1:.4f}{moved}"
        )
    print("-" * 60)
    print(f"Best iteration: m={result.best.m} (macro-F1 {result.best.macro_f1:.4f})")
    print()
    print("=" * 60)
    print("✅ Demo finished")
    print("=" * 60)


if __name__ == "__main__":
    main()
