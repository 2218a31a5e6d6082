"""Тесты слоёв модели и менеджера экспертов"""

import numpy as np
import pytest

from core.config import ModelConfig
from core.errors import InvalidArgumentError, NumericRangeError
from core.expert_manager import ExpertManager
from core.gradcheck import check_layer, numeric_gradient, relative_error
from core.losses import mixed_gla_batch
from core.priors import make_ensemble_spec
from core.rng import make_rng
from experts.cosine_head import CosineHead
from experts.linear_head import LinearHead
from experts.trunk import Trunk

GRAD_TOLERANCE = 1e-5


def _initialized(layer, seed=0):
    layer.initialize(make_rng(seed))
    for key, value in layer.params.items():
        if key == "bias":
            value[...] = make_rng(seed + 1).normal(scale=0.3, size=value.shape)
    return layer


def test_linear_head_gradients(rng):
    errors = check_layer(_initialized(LinearHead("head", 4, 3)), rng.normal(size=(20, 4)), rng)
    assert max(errors.values()) < GRAD_TOLERANCE


def test_cosine_head_gradients(rng):
    errors = check_layer(_initialized(CosineHead("head", 4, 3, kappa=32.0)), rng.normal(size=(20, 4)), rng)
    assert max(errors.values()) < GRAD_TOLERANCE


def test_tanh_trunk_gradients(rng):
    errors = check_layer(_initialized(Trunk(3, hidden=6, activation="tanh")), rng.normal(size=(20, 3)), rng)
    assert max(errors.values()) < GRAD_TOLERANCE


def test_relu_trunk_gradients_away_from_kinks(rng):
    trunk = _initialized(Trunk(3, hidden=6, activation="relu"))
    inputs = rng.normal(size=(60, 3))
    pre_activation = inputs @ trunk.params["weight"].T + trunk.params["bias"]
    inputs = inputs[np.all(np.abs(pre_activation) > 1e-2, axis=1)][:20]
    assert inputs.shape[0] == 20
    errors = check_layer(trunk, inputs, rng)
    assert max(errors.values()) < GRAD_TOLERANCE


def test_identity_trunk_gradients(rng):
    errors = check_layer(Trunk(3, depth=0), rng.normal(size=(20, 3)), rng)
    assert errors == {"inputs": pytest.approx(0.0, abs=GRAD_TOLERANCE)}


def test_cosine_scores_bounded_by_kappa(rng):
    head = _initialized(CosineHead("head", 5, 4, kappa=16.0))
    scores = head.forward(rng.normal(scale=10.0, size=(100, 5)))
    assert np.all(np.abs(scores) <= 16.0 + 1e-12)


def test_zero_initialized_model_gives_zero_logits(rng):
    spec = make_ensemble_spec([1.0, 0.0, -1.0], 3)
    model = ExpertManager.build(ModelConfig(init="zeros"), 2, spec, seed=0)
    for logits in model.forward(rng.normal(size=(5, 2))):
        np.testing.assert_array_equal(logits, np.zeros((5, 3)))


def test_identity_model_returns_features(rng):
    spec = make_ensemble_spec([0.0], 3)
    model = ExpertManager(Trunk(3, depth=0), 3, spec)
    head = LinearHead("head0", 3, 3)
    head.params["weight"][...] = np.eye(3)
    model.register_head(head)
    features = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(model.forward(features)[0], features)


def test_forward_is_deterministic(rng):
    spec = make_ensemble_spec([1.0, -1.0], 3)
    model = ExpertManager.build(ModelConfig(head="cosine"), 2, spec, seed=5)
    features = rng.normal(size=(10, 2))
    for first, second in zip(model.forward(features), model.forward(features)):
        np.testing.assert_array_equal(first, second)


def test_model_gradients_through_shared_trunk(rng):
    spec = make_ensemble_spec([1.0, 0.0, -1.0], 3)
    model = ExpertManager.build(ModelConfig(activation="tanh", hidden=5), 2, spec, seed=2)
    features = rng.normal(size=(20, 2))
    labels_a = rng.integers(0, 3, size=20)
    labels_b = rng.integers(0, 3, size=20)
    xi = rng.uniform(size=20)
    log_prior = np.log([0.7, 0.2, 0.1])

    def objective() -> float:
        losses = [mixed_gla_batch(logits, labels_a, labels_b, xi, expert.tau, log_prior)[0]
                  for logits, expert in zip(model.forward(features), spec.experts)]
        return float(np.mean(losses))

    model.zero_grad()
    grads = [mixed_gla_batch(logits, labels_a, labels_b, xi, expert.tau, log_prior)[1] / spec.num_experts
             for logits, expert in zip(model.forward(features), spec.experts)]
    model.backward(grads)
    analytic = {name: value.copy() for name, value in model.gradients().items()}
    for name, value in model.parameters().items():
        assert relative_error(analytic[name], numeric_gradient(objective, value)) < GRAD_TOLERANCE, name


def test_non_finite_parameters_raise():
    spec = make_ensemble_spec([0.0], 2)
    model = ExpertManager.build(ModelConfig(), 2, spec, seed=0)
    model.parameters()["head0.weight"][0, 0] = np.nan
    with pytest.raises(NumericRangeError):
        model.forward(np.zeros((1, 2)))


def test_register_head_checks_shapes():
    spec = make_ensemble_spec([0.0], 3)
    model = ExpertManager(Trunk(2, hidden=4), 3, spec)
    with pytest.raises(InvalidArgumentError):
        model.register_head(LinearHead("head0", 5, 3))
    model.register_head(LinearHead("head0", 4, 3))
    with pytest.raises(InvalidArgumentError):
        model.register_head(LinearHead("head0", 4, 3))


def test_head_count_must_match_ensemble():
    model = ExpertManager.build(ModelConfig(), 2, make_ensemble_spec([1.0, 0.0], 2), seed=0)
    model.ensemble = make_ensemble_spec([0.0], 2)
    with pytest.raises(InvalidArgumentError):
        model.forward(np.zeros((1, 2)))


def test_state_dict_round_trip(rng):
    spec = make_ensemble_spec([1.0, 0.0], 3)
    source = ExpertManager.build(ModelConfig(), 2, spec, seed=1)
    target = ExpertManager.build(ModelConfig(), 2, spec, seed=2)
    target.load_state_dict(source.state_dict())
    features = rng.normal(size=(3, 2))
    for first, second in zip(source.forward(features), target.forward(features)):
        np.testing.assert_array_equal(first, second)
    with pytest.raises(InvalidArgumentError):
        target.load_state_dict({"trunk.weight": [[0.0]]})
