"""Тесты метрик качества и калибровки"""

import numpy as np
import pytest
from scipy.special import softmax

from core.ensemble import OracleScorer, oracle_expert_logits
from core.errors import InvalidArgumentError
from core.metrics import (balanced_error, ece, expected_marginal, group_accuracy, kl_divergence, mce,
                          reliability)
from core.priors import LabelDistribution, LambdaVector, lambda_prior
from services.data_service import bayes_posterior, circle_mixture, sample_balanced, sample_dataset


def test_balanced_error_examples():
    labels = np.array([0, 0, 1, 1])
    assert balanced_error(labels, labels, 2) == 0.0
    assert balanced_error(np.array([0, 0, 0, 0]), labels, 2) == 0.5


def test_balanced_error_differs_from_plain_error():
    labels = np.array([0] * 90 + [1] * 10)
    predictions = labels.copy()
    predictions[:9] = 1
    predictions[90:95] = 0
    assert balanced_error(predictions, labels, 2) == pytest.approx(0.3, abs=1e-12)
    assert np.mean(predictions != labels) == pytest.approx(0.14, abs=1e-12)


def test_balanced_error_ignores_absent_classes_and_duplicates():
    labels = np.array([0, 0, 2, 2])
    predictions = np.array([0, 1, 2, 2])
    assert balanced_error(predictions, labels, 3) == pytest.approx(0.25)
    assert balanced_error(np.repeat(predictions, 3), np.repeat(labels, 3), 3) == pytest.approx(0.25)


def test_balanced_error_rejects_empty():
    with pytest.raises(InvalidArgumentError):
        balanced_error(np.array([]), np.array([]), 2)


def test_group_accuracy_handles_empty_group():
    groups = {"many": (0,), "medium": (1,), "few": ()}
    result = group_accuracy(np.array([0, 1, 0]), np.array([0, 1, 1]), groups)
    assert result == {"many": 1.0, "medium": 0.5, "few": None}


def test_single_bin_calibration_gap():
    confidences = np.full(10, 0.8)
    correct = np.array([1] * 6 + [0] * 4)
    assert ece(confidences, correct, 1) == pytest.approx(0.2, abs=1e-12)
    assert mce(confidences, correct, 1) == pytest.approx(0.2, abs=1e-12)


def test_confident_and_correct_has_zero_ece():
    assert ece(np.ones(50), np.ones(50), 15) == 0.0


def test_reliability_bin_assignment():
    bins = reliability(np.array([0.1, 0.5, 0.9]), np.array([1, 0, 1]), 2)
    assert bins.counts.tolist() == [2, 1]
    assert bins.edges.tolist() == [0.0, 0.5, 1.0]


def test_reliability_empty_input():
    bins = reliability(np.array([]), np.array([]), 15)
    assert bins.total == 0
    assert bins.ece() == 0.0
    assert bins.mce() == 0.0


def test_reliability_consistency_and_ece_below_mce(rng):
    for _ in range(20):
        confidences = rng.uniform(size=200)
        correct = rng.uniform(size=200) < confidences ** 2
        bins = reliability(confidences, correct, 15)
        assert bins.total == 200
        assert bins.ece() == pytest.approx(ece(confidences, correct, 15), abs=1e-12)
        assert bins.ece() <= bins.mce() + 1e-12


def test_reliability_rejects_out_of_range_confidence():
    with pytest.raises(InvalidArgumentError):
        reliability(np.array([1.5]), np.array([1]), 15)


def test_oracle_posteriors_are_calibrated(lt_mixture):
    dataset = sample_dataset(lt_mixture, 10000, seed=12)
    posteriors = bayes_posterior(lt_mixture, dataset.features)
    confidences = posteriors.max(axis=1)
    correct = np.argmax(posteriors, axis=1) == dataset.labels
    assert ece(confidences, correct, 15) < 0.02
    bins = reliability(confidences, correct, 15)
    populated = bins.counts >= 1000
    assert np.max(bins.gaps()[populated]) < 0.05


def test_expected_marginal_examples(rng):
    p = rng.dirichlet(np.ones(4))
    np.testing.assert_allclose(expected_marginal(np.tile(p, (10, 1))).probs, p, atol=1e-12)
    labels = np.array([0, 0, 0, 1])
    np.testing.assert_allclose(expected_marginal(np.eye(2)[labels]).probs, [0.75, 0.25], atol=1e-11)
    marginal = expected_marginal(softmax(rng.normal(size=(30, 5)), axis=1))
    assert marginal.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_oracle_expert_marginal_is_close_to_its_target(lt_mixture):
    # сильно перекрывающиеся классы: апостериорные близки к априорным
    mixture = circle_mixture(lt_mixture.prior, radius=0.2, sigma=1.0)
    test = sample_balanced(mixture.with_prior(LabelDistribution.uniform(3)), 3334, seed=13)
    for value in (1.0, 0.0, -1.0):
        lam = LambdaVector(value)
        posteriors = softmax(oracle_expert_logits(OracleScorer(mixture, lam), test.features), axis=1)
        target = lambda_prior(mixture.prior, lam)
        assert kl_divergence(target, expected_marginal(posteriors)) < 0.05


def test_kl_divergence_examples(rng):
    p = LabelDistribution.from_weights(rng.dirichlet(np.ones(3)))
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-15)
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2.0), abs=1e-15)
    for _ in range(100):
        assert kl_divergence(rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))) >= 0.0


def test_kl_divergence_support_violation():
    with pytest.raises(InvalidArgumentError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])
