"""Тесты сервиса обучения"""

import json

import numpy as np
import pytest

from core.config import MixupConfig, ModelConfig, TrainConfig
from core.ensemble import predict
from core.errors import NumericRangeError
from core.expert_manager import ExpertManager
from core.priors import LabelDistribution, lt_exponential_prior, make_ensemble_spec
from services.data_service import GaussianMixture, circle_mixture, sample_dataset
from services.training_service import TrainingService, learning_rate, train


@pytest.fixture
def separable():
    mixture = GaussianMixture(np.array([[-3.0, 0.0], [3.0, 0.0]]), 0.5, LabelDistribution.uniform(2))
    return sample_dataset(mixture, 200, seed=1)


@pytest.fixture
def small_lt():
    return sample_dataset(circle_mixture(lt_exponential_prior(3, 10.0)), 300, seed=2)


def _model(spec, dim=2, seed=0, **overrides):
    return ExpertManager.build(ModelConfig(**overrides), dim, spec, seed=seed)


def _config(**overrides):
    values = {"epochs": 3, "batch_size": 32, "lr": 0.05, "schedule": "constant", "seed": 4}
    values.update(overrides)
    return TrainConfig(**values)


def test_separable_data_is_learned(separable):
    spec = make_ensemble_spec([0.0], 2)
    model = _model(spec, depth=0)
    config = _config(epochs=50, lr=0.1, mixup=MixupConfig(enabled=False))
    model, trace = train(model, separable, spec, config)
    assert len(trace) == 50
    assert trace[-1].accuracy >= 0.99
    assert np.mean(predict(model, separable.features) == separable.labels) >= 0.99


def test_zero_learning_rate_keeps_parameters(small_lt):
    spec = make_ensemble_spec([1.0, 0.0, -1.0], 3)
    model = _model(spec)
    before = {name: value.copy() for name, value in model.parameters().items()}
    TrainingService(model, spec, _config(lr=0.0)).fit(small_lt)
    for name, value in model.parameters().items():
        np.testing.assert_array_equal(value, before[name])


def test_same_seed_gives_identical_parameters(small_lt):
    spec = make_ensemble_spec([1.0, 0.0, -1.0], 3)
    first, second = _model(spec), _model(spec)
    TrainingService(first, spec, _config()).fit(small_lt)
    TrainingService(second, spec, _config()).fit(small_lt)
    for name, value in first.parameters().items():
        np.testing.assert_array_equal(value, second.parameters()[name])


def test_mixup_changes_the_trajectory(small_lt):
    spec = make_ensemble_spec([1.0, 0.0, -1.0], 3)
    plain, mixed = _model(spec), _model(spec)
    TrainingService(plain, spec, _config(mixup=MixupConfig(enabled=False))).fit(small_lt)
    TrainingService(mixed, spec, _config(mixup=MixupConfig(enabled=True, alpha=0.4))).fit(small_lt)
    assert not np.array_equal(plain.parameters()["head0.weight"], mixed.parameters()["head0.weight"])


def test_resume_reproduces_uninterrupted_run(small_lt):
    spec = make_ensemble_spec([1.0, 0.0, -1.0], 3)
    config = _config(epochs=4, schedule="multistep", milestones=[0.5])
    full = TrainingService(_model(spec), spec, config)
    full.fit(small_lt)

    interrupted = TrainingService(_model(spec), spec, config)
    interrupted.fit(small_lt, stop_epoch=2)
    state = json.loads(json.dumps(interrupted.state_dict()))
    resumed = TrainingService(_model(spec, seed=99), spec, config)
    resumed.load_state_dict(state)
    resumed.fit(small_lt)

    assert [record.to_dict() for record in resumed.trace] == [record.to_dict() for record in full.trace]
    for name, value in full.model.parameters().items():
        np.testing.assert_array_equal(value, resumed.model.parameters()[name])


def test_divergence_is_reported(small_lt):
    spec = make_ensemble_spec([0.0], 3)
    service = TrainingService(_model(spec), spec, _config(epochs=20, lr=1e10, batch_size=4))
    with pytest.raises(NumericRangeError):
        service.fit(small_lt)


def test_trace_records_losses(small_lt):
    spec = make_ensemble_spec([1.0, 0.0, -1.0], 3)
    service = TrainingService(_model(spec), spec, _config())
    trace = service.fit(small_lt)
    assert [record.epoch for record in trace] == [0, 1, 2]
    assert all(np.isfinite(record.loss) and record.loss >= 0 for record in trace)
    assert all(len(record.expert_accuracy) == 3 for record in trace)


def test_learning_rate_schedules():
    multistep = TrainConfig(epochs=10, lr=0.1, schedule="multistep", milestones=[0.8, 0.9], gamma=0.1)
    assert learning_rate(multistep, 0) == pytest.approx(0.1)
    assert learning_rate(multistep, 8) == pytest.approx(0.01)
    assert learning_rate(multistep, 9) == pytest.approx(0.001)
    warm = TrainConfig(epochs=10, lr=0.1, schedule="constant", warmup_epochs=5)
    assert learning_rate(warm, 0) == pytest.approx(0.02)
    assert learning_rate(warm, 6) == pytest.approx(0.1)
    cosine = TrainConfig(epochs=10, lr=0.1, schedule="cosine")
    assert learning_rate(cosine, 0) == pytest.approx(0.1)
    assert learning_rate(cosine, 5) == pytest.approx(0.05)


def test_loss_moving_average_does_not_increase(small_lt):
    spec = make_ensemble_spec([1.0, 0.0, -1.0], 3)
    config = _config(epochs=40, lr=0.01, mixup=MixupConfig(enabled=False))
    trace = TrainingService(_model(spec, depth=0), spec, config).fit(small_lt)
    losses = np.array([record.loss for record in trace])
    window = 5
    smoothed = np.convolve(losses, np.ones(window) / window, mode="valid")
    assert np.all(np.diff(smoothed) <= 5e-3), smoothed
    assert smoothed[-1] < smoothed[0]


def test_mixup_accuracy_is_measured_on_clean_inputs(small_lt):
    spec = make_ensemble_spec([1.0, 0.0, -1.0], 3)
    model = _model(spec)
    # при lr = 0 параметры постоянны, и точность эпохи совпадает с точностью на всей выборке
    config = _config(epochs=2, lr=0.0, mixup=MixupConfig(enabled=True, alpha=0.4))
    trace = TrainingService(model, spec, config).fit(small_lt)
    clean = float(np.mean(predict(model, small_lt.features) == small_lt.labels))
    expert_clean = [float(np.mean(np.argmax(logits, axis=1) == small_lt.labels))
                    for logits in model.expert_logits(small_lt.features)]
    for record in trace:
        assert record.accuracy == pytest.approx(clean, abs=1e-9)
        assert record.expert_accuracy == pytest.approx(expert_clean, abs=1e-9)
