"""Тесты произведения экспертов и оракульных проверок"""

import numpy as np
import pytest
from scipy.special import softmax

from core.ensemble import (OracleEnsemble, OracleScorer, combine, combined_logits, fisher_consistency_disagreements,
                           oracle_expert_logits, posthoc_adjust, predict, verify_theorem1)
from core.errors import InvalidArgumentError
from core.priors import LabelDistribution, LambdaVector, lambda_prior
from services.data_service import bayes_balanced_classifier, bayes_posterior, log_likelihoods, sample_dataset


class FixedLogits:
    """Источник с заранее заданными логитами"""

    def __init__(self, *logits):
        self.logits = [np.atleast_2d(np.asarray(item, dtype=np.float64)) for item in logits]

    def expert_logits(self, features):
        return self.logits


def test_combine_examples(rng):
    f = rng.normal(size=4)
    np.testing.assert_array_equal(combine([f]), f)
    np.testing.assert_array_equal(combine([f, -f]), np.zeros(4))
    vectors = [rng.normal(size=4) for _ in range(3)]
    np.testing.assert_allclose(combine(vectors), (vectors[0] + vectors[1] + vectors[2]) / 3, atol=1e-15)


def test_combine_errors():
    with pytest.raises(InvalidArgumentError):
        combine([])
    with pytest.raises(InvalidArgumentError):
        combine([np.zeros(2), np.zeros(3)])


def test_combine_is_linear_and_permutation_invariant(rng):
    first = [rng.normal(size=(4, 3)) for _ in range(3)]
    second = [rng.normal(size=(4, 3)) for _ in range(3)]
    mixed = [2.0 * a - 0.5 * b for a, b in zip(first, second)]
    np.testing.assert_allclose(combine(mixed), 2.0 * combine(first) - 0.5 * combine(second), atol=1e-12)
    np.testing.assert_allclose(combine(first[::-1]), combine(first), atol=1e-15)


def test_posthoc_adjust_examples(rng, two_class_prior):
    logits = rng.normal(size=2)
    np.testing.assert_array_equal(posthoc_adjust(logits, two_class_prior, two_class_prior), logits)
    uniform = LabelDistribution.uniform(2)
    there_and_back = posthoc_adjust(posthoc_adjust(logits, two_class_prior, uniform), uniform, two_class_prior)
    np.testing.assert_allclose(there_and_back, logits, atol=1e-12)


def test_posthoc_adjust_composes(rng):
    p, q, r = (LabelDistribution.from_weights(rng.dirichlet(np.ones(4))) for _ in range(3))
    logits = rng.normal(size=4)
    np.testing.assert_allclose(posthoc_adjust(posthoc_adjust(logits, p, q), q, r), posthoc_adjust(logits, p, r),
                               atol=1e-12)


def test_oracle_posterior_adjusted_to_new_prior(lt_mixture, rng):
    points = rng.normal(scale=2.0, size=(50, 2))
    q = LabelDistribution.from_weights(rng.dirichlet(np.ones(3)))
    scorer = OracleScorer(lt_mixture, LambdaVector(1.0))
    adjusted = posthoc_adjust(oracle_expert_logits(scorer, points), lt_mixture.prior, q)
    np.testing.assert_allclose(softmax(adjusted, axis=1), bayes_posterior(lt_mixture, points, q), atol=1e-10)


def test_oracle_expert_logits_by_lambda(lt_mixture, rng):
    points = rng.normal(scale=2.0, size=(50, 2))
    one = OracleScorer(lt_mixture, LambdaVector(1.0))
    np.testing.assert_allclose(softmax(oracle_expert_logits(one, points), axis=1),
                               bayes_posterior(lt_mixture, points), atol=1e-12)
    zero = OracleScorer(lt_mixture, LambdaVector(0.0))
    np.testing.assert_allclose(softmax(oracle_expert_logits(zero, points), axis=1),
                               softmax(log_likelihoods(lt_mixture, points), axis=1), atol=1e-12)
    lam = LambdaVector(np.array([0.3, -1.2, 2.0]))
    shifted = OracleScorer(lt_mixture, lam)
    np.testing.assert_allclose(softmax(oracle_expert_logits(shifted, points), axis=1),
                               bayes_posterior(lt_mixture, points, lambda_prior(lt_mixture.prior, lam)), atol=1e-10)
    assert oracle_expert_logits(one, points[0]).shape == (3,)


@pytest.mark.parametrize("lambdas", [[1.0, 0.0, -1.0], [1.0, -0.25, -1.5], [0.0], [0.7]])
def test_verify_theorem1_fixed_sets(lt_mixture, lambdas):
    points = sample_dataset(lt_mixture, 100, seed=3).features
    assert verify_theorem1(lt_mixture, lambdas, points) < 1e-9


def test_verify_theorem1_random_multisets(five_class_mixture):
    points = sample_dataset(five_class_mixture, 1000, seed=4).features
    rng = np.random.default_rng(8)
    sets = [[1.0, 0.0, -1.0], [1.0, -0.25, -1.5], [0.0]]
    sets += [rng.uniform(-2.0, 2.0, size=rng.integers(1, 8)).tolist() for _ in range(10)]
    for lambdas in sets:
        assert verify_theorem1(five_class_mixture, lambdas, points) < 1e-9


def test_verify_theorem1_with_class_dependent_lambdas(lt_mixture, rng):
    points = rng.normal(scale=2.0, size=(100, 2))
    lambdas = [LambdaVector(rng.normal(size=3)) for _ in range(4)]
    assert verify_theorem1(lt_mixture, lambdas, points) < 1e-9


def test_verify_theorem1_requires_inputs(lt_mixture):
    with pytest.raises(InvalidArgumentError):
        verify_theorem1(lt_mixture, [], np.zeros((1, 2)))


def test_predict_tie_breaks_to_lowest_class():
    assert predict(FixedLogits([0.0, 0.0]), np.zeros((1, 2))).tolist() == [0]


def test_predict_is_shift_invariant(rng):
    logits = rng.normal(size=(10, 4))
    assert predict(FixedLogits(logits), logits).tolist() == predict(FixedLogits(logits + 7.5), logits).tolist()


def test_predict_adjustment_needs_source_prior(two_class_prior):
    with pytest.raises(InvalidArgumentError):
        combined_logits(FixedLogits([0.0, 0.0]), np.zeros((1, 2)), p_to=two_class_prior)


def test_balanced_oracle_matches_bayes_balanced_classifier(lt_mixture):
    points = sample_dataset(lt_mixture.with_prior(LabelDistribution.uniform(3)), 2000, seed=6).features
    ensemble = OracleEnsemble(lt_mixture, [1.0, 0.0, -1.0])
    np.testing.assert_array_equal(predict(ensemble, points), bayes_balanced_classifier(lt_mixture, points))


def test_fisher_consistency_has_no_disagreements(five_class_mixture):
    points = sample_dataset(five_class_mixture.with_prior(LabelDistribution.uniform(5)), 10000, seed=7).features
    disagreements, checked = fisher_consistency_disagreements(five_class_mixture, [1.0, 0.0, -1.0], points)
    assert disagreements == 0
    assert checked > 9900
