import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from backend.quat_math import (QuaternionError, axis_angle_quat, axis_rotation, euler_matrix, euler_xyz_matrix,
                               quat_from_euler_xyz, quat_from_rotmat, quat_normalize, quat_normalize_grad,
                               quat_to_rotmat, quat_to_rotmat_grad, quat_twist_angle_y, quat_twist_angle_y_grad)


def _unit(rng, n):
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def test_rotmat_is_orthonormal_with_unit_determinant(rng):
    m = quat_to_rotmat(_unit(rng, 1000))
    eye = np.broadcast_to(np.eye(3), m.shape)
    np.testing.assert_allclose(m @ np.swapaxes(m, -1, -2), eye, atol=1e-8)
    np.testing.assert_allclose(np.linalg.det(m), 1.0, atol=1e-8)


def test_rotmat_matches_axis_angle_oracle(rng):
    axes = rng.standard_normal((1000, 3))
    axes /= np.linalg.norm(axes, axis=-1, keepdims=True)
    degrees = rng.uniform(-360, 360, size=1000)
    ours = quat_to_rotmat(axis_angle_quat(axes, degrees))
    active = Rotation.from_rotvec(axes * np.deg2rad(degrees)[:, None]).as_matrix()
    # printed matrix = transpose of the active rotation
    np.testing.assert_allclose(ours, np.swapaxes(active, -1, -2), atol=1e-8)


def test_rotmat_matches_scipy_quaternion(rng):
    q = _unit(rng, 200)
    active = Rotation.from_quat(q[:, [1, 2, 3, 0]]).as_matrix()
    np.testing.assert_allclose(quat_to_rotmat(q), np.swapaxes(active, -1, -2), atol=1e-10)


def test_identity_and_half_turns():
    np.testing.assert_allclose(quat_to_rotmat([1.0, 0.0, 0.0, 0.0]), np.eye(3))
    np.testing.assert_allclose(quat_to_rotmat([0.0, 1.0, 0.0, 0.0]), np.diag([1.0, -1.0, -1.0]), atol=1e-12)


def test_from_rotmat_inverts_to_rotmat(rng):
    q = _unit(rng, 500)
    q = np.where(q[:, :1] < 0, -q, q)
    np.testing.assert_allclose(quat_from_rotmat(quat_to_rotmat(q)), q, atol=1e-9)


def test_from_rotmat_handles_half_turns():
    for axis in np.eye(3):
        q = axis_angle_quat(axis, 180.0)
        back = quat_from_rotmat(quat_to_rotmat(q))
        np.testing.assert_allclose(quat_to_rotmat(back), quat_to_rotmat(q), atol=1e-12)


def test_non_finite_quaternion_rejected():
    with pytest.raises(QuaternionError, match="non-finite quaternion"):
        quat_to_rotmat([np.nan, 0.0, 0.0, 1.0])
    with pytest.raises(QuaternionError):
        quat_to_rotmat([1.0, 0.0, 0.0])


def test_normalize_rejects_degenerate_vectors():
    np.testing.assert_allclose(quat_normalize([2.0, 0.0, 0.0, 0.0]), [1.0, 0.0, 0.0, 0.0])
    with pytest.raises(QuaternionError, match="degenerate quaternion output"):
        quat_normalize([1e-10, 0.0, 0.0, 0.0])


def test_axis_rotation_is_active_right_handed():
    quarter = np.pi / 2
    np.testing.assert_allclose(axis_rotation("x", quarter) @ [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(axis_rotation("y", quarter) @ [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(axis_rotation("z", quarter) @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)
    assert axis_rotation("y", np.zeros((2, 3))).shape == (2, 3, 3)
    assert axis_rotation("y", 0.0).shape == (3, 3)


def test_euler_matrix_composes_in_channel_order(rng):
    angles = rng.uniform(-170, 170, size=(50, 3))
    r = np.deg2rad(angles)
    expected = axis_rotation("z", r[:, 0]) @ axis_rotation("x", r[:, 1]) @ axis_rotation("y", r[:, 2])
    np.testing.assert_allclose(euler_matrix("ZXY", angles), expected, atol=1e-10)
    np.testing.assert_allclose(euler_xyz_matrix(angles[:, 0], angles[:, 1], angles[:, 2]),
                               euler_matrix("XYZ", angles), atol=1e-12)
    with pytest.raises(ValueError):
        euler_matrix("ZXY", np.zeros((4, 2)))


def test_axis_rotation_rejects_unknown_axis():
    with pytest.raises(ValueError):
        axis_rotation("w", 0.0)


def test_twist_of_pure_y_rotation():
    for degrees in (-170.0, -45.0, 0.0, 30.0, 130.0, 179.0):
        assert quat_twist_angle_y(axis_angle_quat([0.0, 1.0, 0.0], degrees)) == pytest.approx(degrees, abs=1e-9)
    assert quat_twist_angle_y(axis_angle_quat([0.0, 1.0, 0.0], 180.0)) == pytest.approx(180.0, abs=1e-9)


def test_twist_recovers_euler_y_angle(rng):
    x = rng.uniform(-85, 85, size=300)
    y = rng.uniform(-179, 179, size=300)
    z = rng.uniform(-179, 179, size=300)
    np.testing.assert_allclose(quat_twist_angle_y(quat_from_euler_xyz(x, y, z)), y, atol=1e-7)


def _numeric(fn, q, eps=1e-6):
    grad = np.zeros_like(q)
    for index in range(q.size):
        step = np.zeros_like(q)
        step.flat[index] = eps
        grad.flat[index] = (np.sum(fn(q + step)) - np.sum(fn(q - step))) / (2 * eps)
    return grad


def test_rotmat_gradient_matches_finite_differences(rng):
    for _ in range(100):
        q = _unit(rng, 1)[0]
        upstream = rng.standard_normal((3, 3))
        analytic = quat_to_rotmat_grad(q, upstream)
        numeric = _numeric(lambda v: quat_to_rotmat(v) * upstream, q)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)


def test_normalize_gradient_matches_finite_differences(rng):
    for _ in range(100):
        v = rng.standard_normal(4) * rng.uniform(0.5, 3.0)
        upstream = rng.standard_normal(4)
        analytic = quat_normalize_grad(v, upstream)
        numeric = _numeric(lambda x: quat_normalize(x) * upstream, v)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)


def test_twist_gradient_matches_finite_differences(rng):
    checked = 0
    while checked < 100:
        x, y, z = rng.uniform(-80, 80), rng.uniform(-170, 170), rng.uniform(-170, 170)
        q = quat_from_euler_xyz(x, y, z)
        analytic = quat_twist_angle_y_grad(q, 1.0)
        numeric = _numeric(quat_twist_angle_y, q)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)
        checked += 1
