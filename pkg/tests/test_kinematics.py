import numpy as np
import pytest

from backend.kinematics import (ArityMismatchError, SequenceLengthError, Skeleton, apply_global, fk_backward,
                                fk_forward, fk_gradient, fk_positions, integrate_root)
from backend.quat_math import axis_angle_quat, quat_to_rotmat


IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def test_skeleton_derived_quantities(chain_skeleton):
    assert chain_skeleton.n_joints == 5
    assert list(chain_skeleton.parent_array) == [-1, 0, 1, 2, 1]
    np.testing.assert_allclose(chain_skeleton.offsets[0], 0.0)
    np.testing.assert_allclose(chain_skeleton.offsets[2], [3.0, 4.0, 0.0])
    np.testing.assert_allclose(chain_skeleton.bone_lengths, [5.0, 5.0, 4.0, np.sqrt(4 + 1)])
    assert chain_skeleton.height == pytest.approx(9.0)
    assert chain_skeleton.features().shape == (12,)
    assert chain_skeleton.children(1) == [2, 4]
    assert chain_skeleton.index("c") == 3


def test_skeleton_unknown_joint(chain_skeleton):
    with pytest.raises(KeyError):
        chain_skeleton.index("tail")


@pytest.mark.parametrize("parents", [(None, None), (0, 0), (None, 1)])
def test_skeleton_rejects_bad_parents(parents):
    with pytest.raises(ValueError):
        Skeleton(("a", "b"), parents, np.zeros((2, 3)))


def test_identity_quaternions_give_tpose(chain_skeleton):
    quats = np.tile(IDENTITY, (chain_skeleton.n_joints, 1))
    np.testing.assert_allclose(fk_forward(quats, chain_skeleton), chain_skeleton.local_tpose, atol=1e-12)


def test_single_bone_rotation(two_joint_skeleton):
    # quat_to_rotmat is the transposed (frame) matrix: a quarter turn about z carries +y onto +x
    quats = np.stack([IDENTITY, axis_angle_quat([0.0, 0.0, 1.0], 90.0)])
    positions = fk_forward(quats, two_joint_skeleton)
    np.testing.assert_allclose(positions[1], [10.0, 0.0, 0.0], atol=1e-9)


def test_root_rotation_moves_whole_skeleton(chain_skeleton):
    quats = np.tile(IDENTITY, (chain_skeleton.n_joints, 1))
    quats[0] = axis_angle_quat([0.0, 1.0, 0.0], 90.0)
    positions = fk_forward(quats, chain_skeleton)
    expected = chain_skeleton.local_tpose @ quat_to_rotmat(quats[0]).T
    np.testing.assert_allclose(positions, expected, atol=1e-9)


@pytest.mark.parametrize("mode", ["hierarchical", "world"])
def test_bone_lengths_preserved(chain_skeleton, random_quats, mode):
    positions = fk_forward(random_quats((20, chain_skeleton.n_joints)), chain_skeleton, mode=mode)
    bones = positions[:, 1:] - positions[:, chain_skeleton.parent_array[1:]]
    np.testing.assert_allclose(np.linalg.norm(bones, axis=-1), np.tile(chain_skeleton.bone_lengths, (20, 1)),
                               rtol=1e-10)


def test_world_mode_does_not_accumulate(chain_skeleton):
    quats = np.tile(IDENTITY, (chain_skeleton.n_joints, 1))
    quats[1] = axis_angle_quat([0.0, 0.0, 1.0], 90.0)
    hierarchical = fk_forward(quats, chain_skeleton, mode="hierarchical")
    world = fk_forward(quats, chain_skeleton, mode="world")
    # joint "b" hangs off the rotated bone only in hierarchical mode
    np.testing.assert_allclose(world[2] - world[1], chain_skeleton.offsets[2], atol=1e-12)
    assert not np.allclose(hierarchical[2] - hierarchical[1], chain_skeleton.offsets[2])


def test_arity_mismatch(chain_skeleton, random_quats):
    with pytest.raises(ArityMismatchError):
        fk_forward(random_quats((4,)), chain_skeleton)


def test_unknown_mode(chain_skeleton, random_quats):
    with pytest.raises(ValueError):
        fk_forward(random_quats((chain_skeleton.n_joints,)), chain_skeleton, mode="sideways")


@pytest.mark.parametrize("mode", ["hierarchical", "world"])
def test_fk_gradient_matches_finite_differences(chain_skeleton, random_quats, rng, mode):
    quats = random_quats((2, chain_skeleton.n_joints))
    upstream = rng.standard_normal((2, chain_skeleton.n_joints, 3))
    offsets, parents = chain_skeleton.offsets, chain_skeleton.parent_array

    analytic = fk_gradient(quats, offsets, parents, upstream, mode)
    numeric = np.zeros_like(quats)
    eps = 1e-6
    for index in np.ndindex(quats.shape):
        plus, minus = quats.copy(), quats.copy()
        plus[index] += eps
        minus[index] -= eps
        numeric[index] = (np.sum(fk_positions(plus, offsets, parents, mode) * upstream)
                          - np.sum(fk_positions(minus, offsets, parents, mode) * upstream)) / (2 * eps)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)
    np.testing.assert_allclose(fk_backward(quats, chain_skeleton, upstream, mode), analytic)


def test_integrate_root_straight_line():
    global_motion = np.tile([0.0, 0.0, 2.0, 0.0], (5, 1))
    roots, headings = integrate_root(global_motion)
    np.testing.assert_allclose(roots[:, 2], [2.0, 4.0, 6.0, 8.0, 10.0])
    np.testing.assert_allclose(headings, 0.0)


def test_integrate_root_uses_previous_heading():
    # turn 90 degrees on the first frame, the velocity of the second frame follows the new heading
    global_motion = np.array([[0.0, 0.0, 1.0, 90.0], [0.0, 0.0, 1.0, 0.0]])
    roots, headings = integrate_root(global_motion, origin=np.array([1.0, 0.0, 0.0, 0.0]))
    np.testing.assert_allclose(headings, [90.0, 90.0])
    np.testing.assert_allclose(roots[0], [1.0, 0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(roots[1], [2.0, 0.0, 1.0], atol=1e-12)


def test_apply_global_length_mismatch():
    with pytest.raises(SequenceLengthError):
        apply_global(np.zeros((4, 3, 3)), np.zeros((5, 4)))


def test_apply_global_rotates_local_pose():
    local = np.tile([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]], (1, 1, 1))
    positions = apply_global(local, np.array([[0.0, 0.0, 0.0, 90.0]]))
    np.testing.assert_allclose(positions[0, 1], [1.0, 0.0, 0.0], atol=1e-12)
