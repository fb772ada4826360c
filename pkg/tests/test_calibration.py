"""Tests for temperature scaling."""

import numpy as np
import pytest
from scipy.stats import entropy as scipy_entropy

from active_subset.calibration import (
    T_MAX,
    T_MIN,
    apply_temperature,
    fit_temperature,
    golden_section_search,
    nll_at_temperature,
)
from active_subset.components.classifiers import softmax
from active_subset.exceptions import InvalidInputError, InvalidParameterError


def _sample_at_temperature(temperature, n=10000, num_classes=4, seed=0):
    """Logits and labels drawn from softmax(logits / temperature)."""
    rng = np.random.default_rng(seed)
    logits = rng.normal(0.0, 3.0, size=(n, num_classes))
    probs = softmax(logits / temperature)
    u = rng.uniform(size=(n, 1))
    labels = np.minimum((probs.cumsum(axis=1) < u).sum(axis=1), num_classes - 1)
    return logits, labels


class TestApplyTemperature:
    """apply_temperature behaviour."""

    def test_unit_temperature_is_softmax(self):
        z = np.array([[1.0, 2.0, 0.5]])
        np.testing.assert_allclose(apply_temperature(z, 1.0), softmax(z))

    def test_argmax_unchanged(self):
        z = np.random.default_rng(0).normal(size=(50, 4))
        for t in (0.1, 0.5, 2.0, 10.0):
            np.testing.assert_array_equal(np.argmax(apply_temperature(z, t), axis=1), np.argmax(z, axis=1))

    def test_worked_example(self):
        np.testing.assert_allclose(apply_temperature([2.0, 0.0], 2.0), [0.7311, 0.2689], atol=1e-4)

    def test_huge_temperature_is_uniform(self):
        probs = apply_temperature([5.0, 1.0, -3.0, 0.5], 1e6)
        np.testing.assert_allclose(probs, 0.25, atol=1e-3)

    def test_entropy_grows_with_temperature(self):
        z = np.array([3.0, 1.0, 0.0])
        entropies = [scipy_entropy(apply_temperature(z, t)) for t in (0.5, 1.0, 2.0, 4.0)]
        assert entropies == sorted(entropies)

    def test_entropy_monotone_on_random_logits(self):
        rng = np.random.default_rng(7)
        temperatures = np.sort(rng.uniform(1.0, 50.0, size=20))
        for _ in range(100):
            z = rng.normal(0.0, 4.0, size=int(rng.integers(2, 7)))
            entropies = np.array([scipy_entropy(apply_temperature(z, t)) for t in temperatures])
            assert np.all(np.diff(entropies) >= -1e-12)

    @pytest.mark.parametrize("temperature", [0.0, -2.0])
    def test_rejects_non_positive(self, temperature):
        with pytest.raises(InvalidParameterError):
            apply_temperature(np.zeros(3), temperature)


class TestGoldenSectionSearch:
    """golden_section_search behaviour."""

    def test_brackets_minimum(self):
        c, d = golden_section_search(lambda x: (x - 2.0) ** 2, 0.0, 5.0, tol=1e-6)
        assert c <= 2.0 <= d
        assert d - c <= 1e-6

    def test_swapped_bounds(self):
        c, d = golden_section_search(lambda x: (x + 1.0) ** 2, 3.0, -4.0, tol=1e-5)
        assert c <= -1.0 <= d


class TestFitTemperature:
    """fit_temperature behaviour."""

    def test_recovers_unit_temperature(self):
        logits, labels = _sample_at_temperature(1.0)
        result = fit_temperature(logits, labels)
        assert result.temperature == pytest.approx(1.0, rel=0.1)
        assert result.fit_set_size == 10000

    def test_recovers_temperature_three(self):
        logits, labels = _sample_at_temperature(3.0, seed=1)
        result = fit_temperature(logits, labels)
        assert abs(result.temperature - 3.0) <= 0.3

    def test_never_worse_than_unit(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            logits = rng.normal(0.0, rng.uniform(0.1, 5.0), size=(30, 3))
            labels = rng.integers(0, 3, size=30)
            result = fit_temperature(logits, labels)
            assert result.nll_after <= result.nll_before + 1e-9
            assert T_MIN <= result.temperature <= T_MAX
            assert result.nll_after == pytest.approx(nll_at_temperature(logits, labels, result.temperature))

    def test_separable_data_sharpens(self):
        logits = np.array([[2.0, 0.0], [0.0, 2.0]] * 10)
        labels = np.array([0, 1] * 10)
        assert fit_temperature(logits, labels).temperature < 1.0

    def test_empty_input(self):
        with pytest.raises(InvalidInputError):
            fit_temperature(np.zeros((0, 3)), [])

    def test_label_out_of_range(self):
        with pytest.raises(InvalidInputError):
            fit_temperature(np.zeros((2, 2)), [0, 2])

    def test_non_finite_logits(self):
        with pytest.raises(InvalidInputError):
            fit_temperature(np.array([[np.inf, 0.0]]), [0])
