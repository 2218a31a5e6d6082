"""Тесты протокола оценки на оракульных ансамблях"""

import json

import numpy as np
import pytest

from core.config import EvalConfig
from core.ensemble import OracleEnsemble
from core.priors import LabelDistribution, LambdaVector, lambda_prior, lt_exponential_prior, make_ensemble_spec
from services.data_service import circle_mixture, sample_balanced
from services.evaluation_service import evaluate, required_lambda, shifted_summary

IRS = [2.0, 5.0, 10.0, 25.0, 50.0]


@pytest.fixture(scope="module")
def overlapping_setup():
    mixture = circle_mixture(lt_exponential_prior(3, 100.0), radius=1.0, sigma=1.0)
    test = sample_balanced(mixture.with_prior(LabelDistribution.uniform(3)), 30000, seed=31)
    spec = make_ensemble_spec([1.0, 0.0, -1.0], 3)
    return mixture, test, spec


@pytest.fixture(scope="module")
def oracle_report(overlapping_setup):
    mixture, test, spec = overlapping_setup
    source = OracleEnsemble(mixture, spec.experts)
    return evaluate(source, test, mixture.prior, spec, EvalConfig(shifted_irs=IRS), seed=5)


def test_report_lists_every_shifted_distribution(oracle_report):
    names = [result.name for result in oracle_report.shifted]
    assert names == ["forward50", "forward25", "forward10", "forward5", "forward2", "uniform",
                     "backward2", "backward5", "backward10", "backward25", "backward50"]
    assert all(result.adjusted_accuracy is not None for result in oracle_report.shifted)
    assert len(shifted_summary(oracle_report)) == len(names)


def test_balanced_oracle_reaches_bayes_balanced_error(oracle_report):
    assert oracle_report.balanced_error == pytest.approx(oracle_report.bayes_balanced_error, abs=0.01)
    assert 0.0 <= oracle_report.balanced_error <= 1.0


def test_known_prior_adjustment_reaches_shifted_bayes_accuracy(oracle_report):
    for result in oracle_report.shifted:
        assert result.adjusted_accuracy == pytest.approx(result.bayes_accuracy, abs=0.01), result.name
        assert result.adjusted_accuracy >= result.accuracy, result.name


def test_report_diagnostics(oracle_report):
    assert oracle_report.ece <= oracle_report.mce
    assert len(oracle_report.expert_ece) == 3
    assert set(oracle_report.kl) == {"ensemble", "expert0", "expert1", "expert2"}
    assert sum(oracle_report.expected_marginal) == pytest.approx(1.0, abs=1e-12)
    assert set(oracle_report.group_accuracy) == {"many", "medium", "few"}


def test_report_is_json_serializable(oracle_report):
    payload = json.loads(json.dumps(oracle_report.to_dict(), allow_nan=False))
    assert len(payload["shifted"]) == 11
    assert sum(payload["reliability"]["counts"]) == 90000


def test_unknown_prior_skips_adjustment(overlapping_setup):
    mixture, test, spec = overlapping_setup
    small = test.subset(np.arange(0, test.size, 30))
    report = evaluate(OracleEnsemble(mixture, spec.experts), small, mixture.prior, spec,
                      EvalConfig(shifted_irs=[10.0], known_prior=False), seed=5)
    assert [result.adjusted_accuracy for result in report.shifted] == [None, None, None]


def test_evaluation_is_deterministic(overlapping_setup):
    mixture, test, spec = overlapping_setup
    small = test.subset(np.arange(0, test.size, 30))
    config = EvalConfig(shifted_irs=[5.0])
    first = evaluate(OracleEnsemble(mixture, spec.experts), small, mixture.prior, spec, config, seed=9)
    second = evaluate(OracleEnsemble(mixture, spec.experts), small, mixture.prior, spec, config, seed=9)
    assert json.dumps(first.to_dict(), sort_keys=True) == json.dumps(second.to_dict(), sort_keys=True)


def test_shifted_results_carry_required_lambda(oracle_report, overlapping_setup):
    mixture = overlapping_setup[0]
    for result in oracle_report.shifted:
        reached = lambda_prior(mixture.prior, LambdaVector(np.array(result.required_lambda)))
        np.testing.assert_allclose(reached.probs, result.target, atol=1e-12, err_msg=result.name)
    uniform = next(result for result in oracle_report.shifted if result.name == "uniform")
    np.testing.assert_allclose(uniform.required_lambda, np.zeros(3), atol=1e-12)


def test_required_lambda_is_absent_when_out_of_range():
    # log p_train = 0 по первому классу: показатель не существует
    degenerate = LabelDistribution(np.array([1.0, 1e-300, 1e-300]))
    assert required_lambda(degenerate, LabelDistribution.uniform(3)) is None
