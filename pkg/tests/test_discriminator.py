import numpy as np
import pytest

from backend.autodiff import ShapeError, Tape, Tensor
from backend.kinematics import SequenceLengthError
from backend.networks.discriminator import (MIN_FRAMES, Discriminator, discriminate, discriminator_channels,
                                            discriminator_inputs)
from backend.networks.retarget_model import ConditionBatch


@pytest.fixture
def condition(template):
    return ConditionBatch([template, template], np.float64)


@pytest.fixture
def motion(rng, template):
    local = rng.standard_normal((2, 60, template.n_joints, 3))
    velocity = rng.standard_normal((2, 60, 4))
    return local, velocity


def test_inputs_layout(motion, condition, template):
    local, velocity = motion
    inputs = discriminator_inputs(local, velocity, condition)
    n = template.n_joints
    assert inputs.shape == (2, discriminator_channels(n), 59)
    np.testing.assert_allclose(inputs.data[:, :3 * n, 0], (local[:, 1] - local[:, 0]).reshape(2, -1))
    np.testing.assert_allclose(inputs.data[:, 3 * n:3 * n + 4, :], velocity[:, 1:].transpose(0, 2, 1))
    np.testing.assert_allclose(inputs.data[0, 3 * n + 4:, 10], template.features())


def test_probabilities(motion, condition, template):
    disc = Discriminator(template.n_joints, seed=1, dtype=np.float64)
    probs = discriminate(disc, *motion, condition).data
    assert probs.shape == (2,)
    assert np.all((probs > 0.0) & (probs < 1.0))
    np.testing.assert_array_equal(discriminate(disc, *motion, condition).data, probs)


def test_dropout_only_in_training(motion, condition, template):
    disc = Discriminator(template.n_joints, seed=1, dtype=np.float64)
    a = discriminate(disc, *motion, condition, rng=np.random.default_rng(0), training=True).data
    b = discriminate(disc, *motion, condition, rng=np.random.default_rng(1), training=True).data
    assert not np.allclose(a, b)


def test_short_sequences(template, condition, rng):
    disc = Discriminator(template.n_joints, seed=1, dtype=np.float64)
    with pytest.raises(SequenceLengthError):
        discriminator_inputs(np.zeros((2, 1, template.n_joints, 3)), np.zeros((2, 1, 4)), condition)
    with pytest.raises(ShapeError):
        discriminate(disc, rng.standard_normal((2, 20, template.n_joints, 3)), np.zeros((2, 20, 4)), condition)


def test_minimum_length(template, condition, rng):
    assert MIN_FRAMES == 50
    disc = Discriminator(template.n_joints, seed=1, dtype=np.float64)
    short = MIN_FRAMES
    probs = discriminate(disc, rng.standard_normal((2, short, template.n_joints, 3)), np.zeros((2, short, 4)),
                         condition).data
    assert probs.shape == (2,)
    with pytest.raises(ShapeError):
        discriminate(disc, rng.standard_normal((2, short - 1, template.n_joints, 3)), np.zeros((2, short - 1, 4)),
                     condition)


def test_deltas_pair_with_arriving_velocity(template, condition):
    frames = 6
    local = np.zeros((2, frames, template.n_joints, 3))
    local[:, :, :, 0] = np.arange(frames)[None, :, None] ** 2
    velocity = np.zeros((2, frames, 4))
    velocity[:, :, 0] = np.arange(frames)
    inputs = discriminator_inputs(local, velocity, condition).data
    n = template.n_joints
    # delta t -> t+1 is 2t+1; the velocity arriving at t+1 is t+1
    np.testing.assert_allclose(inputs[0, 0], 2 * np.arange(frames - 1) + 1)
    np.testing.assert_allclose(inputs[0, 3 * n], np.arange(1, frames))


def test_gradient_reaches_generator_output(motion, condition, template):
    disc = Discriminator(template.n_joints, seed=1, dtype=np.float64)
    local = Tensor(motion[0], requires_grad=True)
    with Tape() as tape:
        loss = discriminate(disc, local, motion[1], condition).sum()
        tape.backward(loss)
    assert local.grad is not None
    assert np.abs(local.grad).sum() > 0.0
    assert all(p.grad is not None for p in disc.parameters().values())


def test_layer_structure(template):
    disc = Discriminator(template.n_joints, seed=1)
    names = set(disc.parameters())
    assert {f"conv{k}.weight" for k in range(1, 6)} <= names
    assert {"norm2.gamma", "norm3.gamma", "norm4.gamma"} <= names
    assert "norm1.gamma" not in names and "norm5.gamma" not in names
    assert disc.parameters()["conv5.weight"].shape == (1, 256, 4)
