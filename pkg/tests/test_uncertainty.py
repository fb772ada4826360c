"""Tests for the uncertainty scorers and pool scoring."""

import math

import numpy as np
import pytest

from active_subset.components.classifiers import MockClassifier, TrainSettings
from active_subset.exceptions import InvalidInputError, InvalidParameterError
from active_subset.uncertainty import (
    UncertaintyMethod,
    entropy,
    least_confidence,
    margin,
    ratio,
    score_pool,
    score_probabilities,
)

SCORERS = (least_confidence, margin, ratio, entropy)


def _naive(p):
    top = sorted(p, reverse=True)
    return {
        least_confidence: 1.0 - top[0],
        margin: 1.0 - (top[0] - top[1]),
        ratio: -top[0] / max(top[1], 1e-12),
        entropy: -sum(x * math.log(x) for x in p if x > 0),
    }


class TestScorers:
    """Scorer formulas, ranges and rankings."""

    def test_worked_examples(self):
        p = [0.7, 0.2, 0.1]
        assert least_confidence(p).value == pytest.approx(0.3)
        assert margin(p).value == pytest.approx(0.5)
        assert ratio(p).value == pytest.approx(-3.5)
        assert entropy([0.25] * 4).value == pytest.approx(math.log(4))

    def test_one_hot(self):
        p = [0.0, 1.0, 0.0]
        assert least_confidence(p).value == 0.0
        assert margin(p).value == 0.0
        assert ratio(p).value == pytest.approx(-1e12)
        assert entropy(p).value == 0.0

    @pytest.mark.parametrize("num_classes", [2, 3, 4, 10])
    def test_oracle_and_ranges(self, num_classes):
        rng = np.random.default_rng(num_classes)
        for p in rng.dirichlet(np.ones(num_classes), size=2500):
            expected = _naive(p.tolist())
            for scorer in SCORERS:
                assert abs(scorer(p).value - expected[scorer]) <= 1e-12 * max(1.0, abs(expected[scorer]))

            assert 0.0 <= least_confidence(p).value <= 1.0 - 1.0 / num_classes + 1e-12
            assert 0.0 <= margin(p).value <= 1.0
            assert ratio(p).value <= -1.0
            assert -1e-12 <= entropy(p).value <= math.log(num_classes) + 1e-12

    def test_binary_rankings_agree(self):
        rng = np.random.default_rng(0)
        pairs = rng.dirichlet([1.0, 1.0], size=(1000, 2))
        for p, q in pairs:
            signs = {np.sign(scorer(p).value - scorer(q).value) for scorer in SCORERS}
            assert len(signs) == 1

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        p = rng.dirichlet(np.ones(5))
        shuffled = rng.permutation(p)
        for scorer in SCORERS:
            assert scorer(p).value == pytest.approx(scorer(shuffled).value, abs=1e-15)

    def test_sharper_means_less_uncertain(self):
        flat, sharp = [0.4, 0.35, 0.25], [0.8, 0.15, 0.05]
        for scorer in SCORERS:
            assert scorer(flat).value > scorer(sharp).value

    @pytest.mark.parametrize("bad", [[0.5, 0.4], [1.2, -0.2], [1.0], [np.nan, 1.0]])
    def test_invalid_vectors(self, bad):
        for scorer in SCORERS:
            with pytest.raises(InvalidInputError):
                scorer(bad)

    def test_dispatch_by_name(self):
        assert score_probabilities([0.6, 0.4], "margin").method is UncertaintyMethod.MARGIN


class TestScorePool:
    """score_pool behaviour."""

    @pytest.fixture
    def model(self, make_dataset):
        dataset = make_dataset((2, 2))
        projection = np.array([[2.0, 0.0], [0.0, 1.0]])
        return MockClassifier(projection=projection).fit(dataset, [0], TrainSettings())

    def test_preserves_pool_order(self, make_dataset, model):
        dataset = make_dataset((2, 2))
        scored = score_pool(model, dataset, [6, 2, 4], UncertaintyMethod.ENTROPY)
        assert [s.instance_id for s in scored] == [6, 2, 4]
        assert [s.true_label for s in scored] == [1, 0, 1]

    def test_predicted_label_is_argmax(self, make_dataset, model):
        dataset = make_dataset((2, 2))
        scored = score_pool(model, dataset, range(len(dataset)), "least_confident")
        logits = model.predict_logits(dataset.features)
        assert [s.predicted_label for s in scored] == np.argmax(logits, axis=1).tolist()

    def test_temperature_flattens(self, make_dataset, model):
        dataset = make_dataset((2, 2))
        cold = score_pool(model, dataset, [0, 1], "entropy", temperature=0.5)
        hot = score_pool(model, dataset, [0, 1], "entropy", temperature=5.0)
        for c, h in zip(cold, hot):
            assert h.score.value >= c.score.value
            assert h.predicted_label == c.predicted_label

    @pytest.mark.parametrize("temperature", [0.0, -1.0])
    def test_bad_temperature(self, make_dataset, model, temperature):
        with pytest.raises(InvalidParameterError):
            score_pool(model, make_dataset((2, 2)), [0], "ratio", temperature=temperature)

    def test_empty_pool(self, make_dataset, model):
        assert score_pool(model, make_dataset((2, 2)), [], "ratio") == []
