import numpy as np
import pytest

from fewslot.errors import ContractError, DimensionError
from fewslot.optim import OptimizerState, optimizer_step


def test_sgd_definition():
    state = OptimizerState.sgd(learning_rate=0.1)
    updated = optimizer_step(state, {"w": np.array([1.0])}, {"w": np.array([1.0])})
    assert updated["w"][0] == pytest.approx(0.9)
    assert state.step == 1


def test_adam_zero_gradient_fixed_point():
    state = OptimizerState.adam(learning_rate=0.5)
    params = {"w": np.array([1.0, -2.0])}
    updated = optimizer_step(state, params, {"w": np.zeros(2)})
    assert np.array_equal(updated["w"], params["w"])
    assert state.step == 1
    updated = optimizer_step(state, updated, {"w": np.zeros(2)})
    assert np.array_equal(updated["w"], params["w"])
    assert state.step == 2


def test_adam_first_step_magnitude_is_learning_rate():
    # t=1: m_hat = g, v_hat = g^2, so step = lr * g / (|g| + eps) ~ lr * sign(g)
    lr = 1e-3
    state = OptimizerState.adam(learning_rate=lr)
    grads = {"w": np.array([0.5, -3.0, 1e-4])}
    updated = optimizer_step(state, {"w": np.zeros(3)}, grads)
    delta = updated["w"]
    np.testing.assert_allclose(np.abs(delta), lr, rtol=1e-3)
    assert np.all(np.sign(delta) == -np.sign(grads["w"]))


def test_adam_recurrence_hand_evaluated_two_steps():
    # g=1 both steps, lr=0.1, betas (0.9, 0.999), eps=0
    state = OptimizerState.adam(learning_rate=0.1, epsilon=0.0)
    params = {"w": np.array([0.0])}
    params = optimizer_step(state, params, {"w": np.array([1.0])})
    assert params["w"][0] == pytest.approx(-0.1)
    params = optimizer_step(state, params, {"w": np.array([1.0])})
    # m = 0.19, m_hat = 0.19/0.19 = 1; v = 0.001999, v_hat = v/0.001999 = 1
    assert params["w"][0] == pytest.approx(-0.2)


def test_shape_mismatch_rejected():
    state = OptimizerState.sgd(learning_rate=0.1)
    with pytest.raises(DimensionError):
        optimizer_step(state, {"w": np.zeros(2)}, {"w": np.zeros(3)})


def test_missing_gradient_rejected():
    state = OptimizerState.sgd(learning_rate=0.1)
    with pytest.raises(ContractError):
        optimizer_step(state, {"w": np.zeros(2)}, {})


def test_unknown_kind_rejected():
    with pytest.raises(ContractError):
        OptimizerState(kind="momentum", learning_rate=0.1)


def test_moments_shape_match_parameters():
    state = OptimizerState.adam()
    params = {"a": np.zeros((2, 3)), "b": np.zeros(4)}
    grads = {"a": np.ones((2, 3)), "b": np.ones(4)}
    optimizer_step(state, params, grads)
    assert state.first_moment["a"].shape == (2, 3)
    assert state.second_moment["b"].shape == (4,)
