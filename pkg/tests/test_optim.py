import numpy as np
import pytest

from tandem.autodiff import Tensor
from tandem.optim import AdamState, OptimError, adam_step


def _params(values):
    return {k: Tensor(np.array(v, dtype=np.float32), requires_grad=True, name=k)
            for k, v in values.items()}


def test_first_step_moves_by_learning_rate():
    # With bias correction, a unit gradient moves the parameter by
    # almost exactly lr on the first step: lr * 1 / (1 + eps).
    params = _params({"w": 1.0})
    state = AdamState(lr=1e-3)
    adam_step(params, {"w": np.array(1.0)}, state)
    assert params["w"].data == pytest.approx(1.0 - 1e-3, abs=1e-6)
    assert state.step == 1


def test_zero_gradient_from_fresh_state_is_a_no_op():
    params = _params({"w": [1.0, -2.0]})
    state = AdamState()
    adam_step(params, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(params["w"].data, [1.0, -2.0])


def test_zero_gradient_decays_momentum():
    params = _params({"w": [1.0, -2.0]})
    state = AdamState()
    adam_step(params, {"w": np.ones(2)}, state)
    m_before = state.m["w"].copy()
    adam_step(params, {"w": np.zeros(2)}, state)
    np.testing.assert_allclose(state.m["w"], m_before * state.beta1)


def test_identical_inputs_identical_updates():
    params = _params({"a": [0.5, 0.5], "b": [0.5, 0.5]})
    state = AdamState()
    g = np.array([0.3, -0.7])
    adam_step(params, {"a": g, "b": g}, state)
    np.testing.assert_array_equal(params["a"].data, params["b"].data)


def test_non_finite_gradient_names_parameter():
    params = _params({"layer/w": 1.0})
    with pytest.raises(OptimError, match="layer/w"):
        adam_step(params, {"layer/w": np.array(np.nan)}, AdamState())


def test_shape_mismatch_rejected():
    params = _params({"w": [1.0, 2.0]})
    with pytest.raises(OptimError, match="shape"):
        adam_step(params, {"w": np.zeros(3)}, AdamState())


def test_step_count_strictly_increasing():
    params = _params({"w": 0.0})
    state = AdamState()
    for i in range(1, 5):
        adam_step(params, {"w": np.array(0.1)}, state)
        assert state.step == i
