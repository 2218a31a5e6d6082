"""Тесты mixup"""

import numpy as np
import pytest
from scipy.stats import kstest

from core.config import MixupConfig
from core.errors import InvalidArgumentError
from core.rng import make_rng, rng_state
from services.mixup_service import beta_sample, beta_samples, mix_batch


def test_beta_one_is_uniform():
    draws = beta_samples(1.0, 10000, make_rng(0))
    assert kstest(draws, "uniform").statistic < 0.02


@pytest.mark.parametrize("alpha", [0.2, 0.4, 1.0, 3.0])
def test_beta_mean_is_one_half(alpha):
    n = 10000
    draws = beta_samples(alpha, n, make_rng(1))
    sd = np.sqrt(1.0 / (4.0 * (2.0 * alpha + 1.0)))
    assert abs(draws.mean() - 0.5) < 3 * sd / np.sqrt(n)


def test_beta_variance_for_cifar_alpha():
    draws = beta_samples(0.4, 100000, make_rng(2))
    assert draws.var() == pytest.approx(1.0 / (4.0 * 1.8), rel=0.05)


def test_beta_sample_scalar_and_errors():
    value = beta_sample(0.4, make_rng(3))
    assert 0.0 <= value <= 1.0
    with pytest.raises(InvalidArgumentError):
        beta_sample(0.0, make_rng(3))


def test_beta_tiny_alpha_stays_in_unit_interval():
    draws = beta_samples(1e-3, 1000, make_rng(4))
    assert np.all(np.isfinite(draws))
    assert np.all((draws >= 0.0) & (draws <= 1.0))


def test_forced_xi_one_is_identity(rng):
    features = rng.normal(size=(8, 3))
    labels = rng.integers(0, 4, size=8)
    batch = mix_batch(features, labels, MixupConfig(), make_rng(0), 4, xi=1.0)
    np.testing.assert_array_equal(batch.features, features)
    np.testing.assert_array_equal(batch.soft_labels, np.eye(4)[labels])


def test_forced_xi_half_gives_midpoints(rng):
    features = rng.normal(size=(6, 2))
    labels = np.array([0, 1, 0, 1, 0, 1])
    batch = mix_batch(features, labels, MixupConfig(), make_rng(0), 2, xi=0.5)
    np.testing.assert_allclose(batch.features, 0.5 * (features + features[batch.partners]), atol=1e-15)
    mixed_pairs = labels != labels[batch.partners]
    np.testing.assert_array_equal(batch.soft_labels[mixed_pairs], np.full((mixed_pairs.sum(), 2), 0.5))


def test_soft_labels_are_row_stochastic_pairs(rng):
    features = rng.normal(size=(64, 2))
    labels = rng.integers(0, 5, size=64)
    batch = mix_batch(features, labels, MixupConfig(alpha=0.4), make_rng(5), 5)
    np.testing.assert_allclose(batch.soft_labels.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((batch.soft_labels > 0).sum(axis=1) <= 2)
    expected = (batch.xi[:, None] * np.eye(5)[batch.labels_a] + (1 - batch.xi[:, None]) * np.eye(5)[batch.labels_b])
    np.testing.assert_allclose(batch.soft_labels, expected, atol=1e-15)
    # каждая строка лежит на отрезке между исходными точками
    low = np.minimum(features, features[batch.partners]) - 1e-12
    high = np.maximum(features, features[batch.partners]) + 1e-12
    assert np.all((batch.features >= low) & (batch.features <= high))


def test_mixup_preserves_label_marginal():
    rng = make_rng(6)
    prior = np.array([0.8, 0.2])
    total = np.zeros(2)
    batches = 1000
    for _ in range(batches):
        labels = rng.choice(2, size=100, p=prior)
        batch = mix_batch(np.zeros((100, 1)), labels, MixupConfig(alpha=0.4), rng, 2)
        total += batch.soft_labels.sum(axis=0)
    marginal = total / (batches * 100)
    assert 0.5 * np.abs(marginal - prior).sum() < 0.01


def test_disabled_mixup_is_identity_and_consumes_no_randomness(rng):
    features = rng.normal(size=(5, 2))
    labels = np.array([0, 1, 2, 1, 0])
    generator = make_rng(7)
    before = rng_state(generator)
    batch = mix_batch(features, labels, MixupConfig(enabled=False), generator, 3)
    assert rng_state(generator) == before
    np.testing.assert_array_equal(batch.features, features)
    np.testing.assert_array_equal(batch.xi, np.ones(5))
