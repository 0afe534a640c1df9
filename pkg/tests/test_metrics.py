import numpy as np
import pytest

from backend.kinematics import ArityMismatchError, SequenceLengthError, fk_forward
from backend.motion_clip import MotionClip
from evaluation.metrics import (VARIANCE_BINS, assign_bins, bone_length_error, bone_lengths, end_effector_heights,
                                movement_variance, mse, total_variation)


def _still(skeleton, frames=4, origin=None):
    local = np.broadcast_to(skeleton.tpose, (frames, skeleton.n_joints, 3)).copy()
    return MotionClip(skeleton, 30.0, local, np.zeros((frames, 4)),
                      origin=np.zeros(4) if origin is None else origin, name="still")


def test_uniform_offset_of_one_height(chain_skeleton):
    truth = _still(chain_skeleton)
    shifted = truth.replace(local=truth.local + [chain_skeleton.height, 0.0, 0.0])
    assert mse(truth, truth) == 0.0
    assert mse(shifted, truth) == pytest.approx(1.0)
    assert mse(shifted, truth, height=2 * chain_skeleton.height) == pytest.approx(0.25)


def test_origin_mismatch_is_not_error(chain_skeleton):
    truth = _still(chain_skeleton, origin=np.array([10.0, 0.0, -3.0, 45.0]))
    prediction = truth.replace(origin=np.zeros(4))
    assert mse(prediction, truth) == pytest.approx(0.0, abs=1e-20)


def test_oscillating_joint_variance(chain_skeleton):
    clip = _still(chain_skeleton)
    assert movement_variance(clip) == pytest.approx(0.0)
    local = clip.local.copy()
    local[:, 3, 0] += chain_skeleton.height * np.array([1.0, -1.0, 1.0, -1.0])
    assert movement_variance(clip.replace(local=local)) == pytest.approx(1.0 / chain_skeleton.n_joints)


def test_comparability(chain_skeleton, two_joint_skeleton):
    truth = _still(chain_skeleton)
    with pytest.raises(SequenceLengthError):
        mse(_still(chain_skeleton, frames=5), truth)
    with pytest.raises(ArityMismatchError):
        mse(_still(two_joint_skeleton), truth)


def test_assign_bins():
    np.testing.assert_array_equal(assign_bins([0.0, 2.4, 2.5, 7.0, 19.99, 20.0, 1e6]), [0, 0, 1, 2, 3, 4, 4])
    assert len(VARIANCE_BINS) == 6
    with pytest.raises(ValueError):
        assign_bins([-0.1])
    with pytest.raises(ValueError):
        assign_bins([1.0], edges=(0.0, 1.0))
    with pytest.raises(ValueError):
        assign_bins([1.0], edges=(0.0, 5.0, 5.0))


def test_fk_output_keeps_bone_lengths(chain_skeleton, random_quats):
    local = fk_forward(random_quats((6, chain_skeleton.n_joints)), chain_skeleton)
    assert bone_length_error(local, chain_skeleton) < 1e-9
    np.testing.assert_allclose(bone_lengths(local, chain_skeleton),
                               np.broadcast_to(chain_skeleton.bone_lengths, (6, 4)), atol=1e-9)


def test_bone_length_error_is_relative(chain_skeleton):
    local = _still(chain_skeleton).local.copy()
    local[:, 3] = local[:, 2] + 1.5 * (local[:, 3] - local[:, 2])
    assert bone_length_error(local, chain_skeleton) == pytest.approx(0.5)


def test_total_variation():
    assert total_variation([1.0, 1.0, 1.0]) == 0.0
    assert total_variation([[0.0, 1.0], [2.0, 0.0], [1.0, 0.0]]) == pytest.approx(4.0)


def test_end_effector_heights(chain_skeleton):
    heights = end_effector_heights(_still(chain_skeleton), ["c", "d"])
    np.testing.assert_allclose(heights, np.tile([9.0, 5.0], (4, 1)))
    with pytest.raises(KeyError):
        end_effector_heights(_still(chain_skeleton), ["missing"])
