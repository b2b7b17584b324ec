import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tandem import autodiff as ad
from tandem.autodiff import AutodiffError, ShapeError, Tape, Tensor, backward

from conftest import max_relative_error

TOL = 1e-4


def _t(rng, *shape, grad=True):
    return Tensor(rng.normal(size=shape).astype(np.float64), requires_grad=grad)


class TestForwardDefinitions:
    def test_relu(self):
        out = ad.relu(Tensor([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_softmax_uniform(self):
        out = ad.softmax(Tensor([0.0, 0.0, 0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [0.2] * 5, atol=1e-7)

    def test_softmax_sums_to_one_and_shift_invariant(self, rng):
        x = rng.normal(size=(4, 5))
        s = ad.softmax(Tensor(x)).data
        np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-6)
        s_shifted = ad.softmax(Tensor(x + 123.0)).data
        np.testing.assert_allclose(s, s_shifted, atol=1e-6)

    def test_conv2d_all_ones(self):
        img = Tensor(np.ones((1, 3, 3, 1)))
        filt = Tensor(np.ones((3, 3, 1, 1)))
        out = ad.conv2d(img, filt, 1)
        assert out.data.shape == (1, 1, 1, 1)
        assert out.data.reshape(()) == pytest.approx(9.0)

    def test_conv2d_shape_mismatch(self):
        img = Tensor(np.ones((1, 2, 2, 1)))
        filt = Tensor(np.ones((3, 3, 1, 1)))
        with pytest.raises(ShapeError, match="conv2d"):
            ad.conv2d(img, filt, 1)

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ShapeError, match="matmul"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_ops_deterministic(self, rng):
        x = Tensor(rng.normal(size=(3, 4)))
        a = ad.softmax(ad.relu(x)).data
        b = ad.softmax(ad.relu(x)).data
        np.testing.assert_array_equal(a, b)


class TestBackward:
    def test_square_gradient(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        with Tape() as tape:
            loss = ad.mul(x, x)
        grads = backward(tape, loss)
        assert grads[x] == pytest.approx(6.0)

    def test_stop_gradient(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        y = Tensor(np.array(5.0), requires_grad=True)
        with Tape() as tape:
            loss = ad.mul(ad.stop_gradient(x), y)
        grads = backward(tape, loss)
        assert x not in grads  # blocked entirely
        assert grads[y] == pytest.approx(2.0)

    def test_non_scalar_loss_rejected(self, rng):
        x = _t(rng, 3)
        with Tape() as tape:
            out = ad.relu(x)
        with pytest.raises(ShapeError, match="scalar"):
            backward(tape, out)

    def test_double_backward_rejected(self, rng):
        x = _t(rng, 3)
        with Tape() as tape:
            loss = ad.reduce_sum(ad.mul(x, x))
        backward(tape, loss)
        with pytest.raises(AutodiffError, match="already"):
            backward(tape, loss)

    def test_reused_input_accumulates(self, rng):
        x = Tensor(np.array(4.0), requires_grad=True)
        with Tape() as tape:
            loss = ad.add(ad.mul(x, x), x)  # x^2 + x -> 2x + 1
        grads = backward(tape, loss)
        assert grads[x] == pytest.approx(9.0)


PRIMITIVE_CASES = [
    ("add", lambda ops, a, b: ops.add(a, b), 2),
    ("sub", lambda ops, a, b: ops.sub(a, b), 2),
    ("mul", lambda ops, a, b: ops.mul(a, b), 2),
    ("matmul", lambda ops, a, b: ops.matmul(a, b), "matmul"),
    ("relu", lambda ops, a: ops.relu(a), 1),
    ("sigmoid", lambda ops, a: ops.sigmoid(a), 1),
    ("tanh", lambda ops, a: ops.tanh(a), 1),
    ("softmax", lambda ops, a: ops.softmax(a), 1),
    ("squared_error", lambda ops, a, b: ops.squared_error(a, b), 2),
    ("reduce_max", lambda ops, a: ops.reduce_max(a, axis=1), 1),
    ("reduce_sum_axis", lambda ops, a: ops.reduce_sum(a, axis=0), 1),
    ("reshape", lambda ops, a: ops.reshape(a, (8, 2)), 1),
    ("concat", lambda ops, a, b: ops.concat([a, b], axis=1), 2),
    ("slice", lambda ops, a: ops.slice_axis(a, 1, 1, 3), 1),
]


@pytest.mark.parametrize("name,fn,arity", PRIMITIVE_CASES, ids=[c[0] for c in PRIMITIVE_CASES])
def test_primitive_gradients_match_finite_differences(name, fn, arity, rng):
    if arity == "matmul":
        args = [_t(rng, 4, 3), _t(rng, 3, 5)]
    else:
        args = [_t(rng, 4, 4) for _ in range(arity)]

    def loss():
        out = fn(ad, *args)
        return ad.reduce_sum(ad.mul(out, out))

    assert max_relative_error(loss, args) < TOL


def test_conv2d_gradients_match_finite_differences(rng):
    x = _t(rng, 2, 6, 6, 3)
    w = _t(rng, 3, 3, 3, 4)

    def loss():
        out = ad.conv2d(x, w, 1)
        return ad.reduce_sum(ad.mul(out, out))

    assert max_relative_error(loss, [x, w]) < TOL


def test_conv2d_padded_gradients(rng):
    x = _t(rng, 2, 5, 5, 3)
    w = _t(rng, 3, 3, 3, 4)

    def loss():
        out = ad.conv2d(x, w, 1, padding=1)
        return ad.reduce_sum(ad.mul(out, out))

    assert max_relative_error(loss, [x, w]) < TOL


def test_conv2d_padding_preserves_spatial_size():
    x = Tensor(np.ones((1, 5, 5, 2), dtype=np.float32))
    w = Tensor(np.ones((3, 3, 2, 4), dtype=np.float32))
    assert ad.conv2d(x, w, 1, padding=1).shape == (1, 5, 5, 4)
    # interior output = full 3x3 window over all-ones input
    assert ad.conv2d(x, w, 1, padding=1).data[0, 2, 2, 0] == 18.0
    # corner output only overlaps 2x2 of the input
    assert ad.conv2d(x, w, 1, padding=1).data[0, 0, 0, 0] == 8.0


def test_conv2d_strided_padded_gradients(rng):
    x = _t(rng, 1, 8, 8, 2)
    w = _t(rng, 4, 4, 2, 3)

    def loss():
        return ad.reduce_sum(ad.relu(ad.conv2d(x, w, 2, padding=2)))

    assert max_relative_error(loss, [x, w]) < TOL


def test_conv2d_strided_gradients(rng):
    x = _t(rng, 1, 8, 8, 2)
    w = _t(rng, 4, 4, 2, 3)

    def loss():
        return ad.reduce_sum(ad.relu(ad.conv2d(x, w, 2)))

    assert max_relative_error(loss, [x, w]) < TOL


def test_select_actions_gradients(rng):
    q = _t(rng, 6, 5)
    idx = np.array([0, 4, 2, 2, 1, 3])

    def loss():
        sel = ad.select_actions(q, idx)
        return ad.reduce_sum(ad.mul(sel, sel))

    assert max_relative_error(loss, [q]) < TOL


def test_lstm_cell_gradients_match_finite_differences(rng):
    """Random 4-unit LSTM cell vs central differences at 64-bit."""
    x = _t(rng, 2, 3)
    h = _t(rng, 2, 4)
    c = _t(rng, 2, 4)
    w = _t(rng, 7, 16)
    b = _t(rng, 16)

    def loss():
        hn, cn = ad.lstm_cell(x, h, c, w, b)
        return ad.reduce_sum(ad.add(ad.mul(hn, hn), ad.mul(cn, cn)))

    assert max_relative_error(loss, [x, h, c, w, b]) < TOL


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
def test_softmax_properties(logits):
    s = ad.softmax(Tensor(np.array(logits, dtype=np.float64))).data
    assert abs(s.sum() - 1.0) < 1e-6
    shifted = ad.softmax(Tensor(np.array(logits, dtype=np.float64) + 7.5)).data
    assert np.max(np.abs(s - shifted)) < 1e-6
