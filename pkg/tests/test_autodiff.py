import numpy as np
import pytest

from backend import autodiff as ad
from backend.autodiff import ShapeError, Tape, TapeError, Tensor


@pytest.fixture
def normal(rng):
    return lambda *shape: rng.standard_normal(shape)


def test_arithmetic_with_broadcasting(gradcheck, normal):
    gradcheck(lambda a, b: (a + b) * (a - b) / (b * b + 1.0), normal(3, 4), normal(4))
    gradcheck(lambda a: -a * 3.0 + 1.0, normal(2, 2))


def test_matmul(gradcheck, normal):
    gradcheck(lambda a, b: a @ b, normal(2, 3, 4), normal(4, 5))


def test_structural_ops(gradcheck, normal):
    gradcheck(lambda a, b: ad.concat([a, b], axis=-1), normal(2, 3), normal(2, 2))
    gradcheck(lambda a, b: ad.stack([a, b], axis=1), normal(2, 3), normal(2, 3))
    gradcheck(lambda a: a[:, 1:3], normal(3, 4))
    gradcheck(lambda a: a.reshape(6, 2).transpose(1, 0), normal(3, 4))


def test_reductions(gradcheck, normal):
    gradcheck(lambda a: a.sum(axis=0), normal(3, 4))
    gradcheck(lambda a: a.mean(axis=-1, keepdims=True), normal(3, 4))


@pytest.mark.parametrize("op", [ad.tanh, ad.sigmoid, ad.square, ad.tabs, ad.relu,
                                lambda a: ad.leaky_relu(a, 0.2), lambda a: ad.clip(a, -0.5, 0.5)])
def test_pointwise(gradcheck, normal, op):
    gradcheck(op, normal(4, 5))


def test_sqrt_and_log(gradcheck, rng):
    positive = rng.uniform(0.5, 2.0, (3, 3))
    gradcheck(ad.sqrt, positive)
    gradcheck(ad.log, positive)


@pytest.mark.parametrize("stride,padding", [(1, "same"), (2, "same"), (1, "valid"), (2, "valid")])
def test_conv1d(gradcheck, normal, stride, padding):
    gradcheck(lambda x, w, b: ad.conv1d(x, w, b, stride=stride, padding=padding),
              normal(2, 3, 9), normal(4, 3, 4), normal(4))


def test_conv1d_output_lengths():
    assert ad.conv_output_length(9, 4, 2, "same") == 5
    assert ad.conv_output_length(9, 4, 2, "valid") == 3
    with pytest.raises(ValueError):
        ad.conv_output_length(9, 4, 2, "full")
    out = ad.conv1d(Tensor(np.ones((1, 2, 9))), Tensor(np.ones((3, 2, 4))), stride=2)
    assert out.shape == (1, 3, 5)


def test_conv1d_rejects_short_input():
    with pytest.raises(ShapeError):
        ad.conv1d(Tensor(np.ones((1, 2, 3))), Tensor(np.ones((3, 2, 4))), padding="valid")


def test_instance_norm(gradcheck, normal):
    gradcheck(lambda x, g, b: ad.instance_norm_1d(x, g, b), normal(2, 3, 6), normal(3), normal(3))
    out = ad.instance_norm_1d(Tensor(normal(2, 3, 6))).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, rtol=1e-3)


def test_custom_op(gradcheck, normal):
    def cube(x):
        return ad.custom_op(lambda v: v ** 3, lambda grad, v: [3.0 * v * v * grad], x)

    gradcheck(cube, normal(5))


def test_gradients_accumulate_over_reuse():
    x = Tensor([2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = (x * x + x).sum()
        tape.backward(loss)
    np.testing.assert_allclose(x.grad, [5.0, 7.0])


def test_second_backward_requires_reset():
    x = Tensor([1.0], requires_grad=True)
    with Tape() as tape:
        loss = (x * 2.0).sum()
        tape.backward(loss)
        with pytest.raises(TapeError):
            tape.backward(loss)
    tape.reset()
    x.zero_grad()
    with tape:
        loss = (x * 3.0).sum()
        tape.backward(loss)
    np.testing.assert_allclose(x.grad, [3.0])


def test_no_recording_without_tape():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = x * 2.0
    assert not y.requires_grad


def test_dropout_inference_is_identity(rng):
    x = Tensor(np.ones((4, 4)))
    assert ad.dropout(x, 0.7, rng, training=False) is x
    kept = ad.dropout(x, 0.5, rng).data
    assert set(np.unique(kept)) <= {0.0, 2.0}


def test_dropout_preserves_expectation():
    x = Tensor(np.full(100_000, 3.0))
    out = ad.dropout(x, 0.7, np.random.default_rng(0)).data
    assert np.mean(out != 0.0) == pytest.approx(0.7, abs=0.01)
    assert out.mean() == pytest.approx(3.0, abs=0.03)
    np.testing.assert_allclose(out[out != 0.0], 3.0 / 0.7)


def test_shape_errors():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        ad.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=-1)
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))).reshape(4, 2)


def test_float32_stays_float32():
    x = Tensor(np.ones(3), requires_grad=True, dtype=np.float32)
    with Tape() as tape:
        loss = ad.tanh(x * 2.0 + 1.0).sum()
        tape.backward(loss)
    assert loss.dtype == np.float32
    assert x.grad.dtype == np.float32
