"""
Quaternion and rotation algebra with analytic derivatives.

Quaternions are stored as (..., 4) arrays in (r, i, j, k) order and follow the
Hamilton convention: axis_angle_quat(u, theta) = (cos theta/2, sin theta/2 * u).

quat_to_rotmat evaluates the printed conversion

    | 1-2(j²+k²)   2(ij+kr)    2(ik-jr)  |
    | 2(ij-kr)     1-2(i²+k²)  2(jk+ir)  |
    | 2(ik+jr)     2(jk-ir)    1-2(i²+j²)|

which is the transpose of the Hamilton active matrix: applied to a column
vector it rotates by -theta about u. Every module (FK, BVH import, synthetic
data) goes through this function and its inverse quat_from_rotmat, so the
convention is consistent end to end. Euler angles and matrix to quaternion
conversion go through scipy's Rotation. The twist angle is read from the
Hamilton active matrix, so axis_angle_quat(y, theta) has twist +theta.

All functions broadcast over leading dimensions and compute in float64.
"""
import numpy as np
from scipy.spatial.transform import Rotation

EPS_NORM = 1e-8
GIMBAL_LIMIT_DEG = 89.99
_HYPOT_FLOOR = float(np.cos(np.deg2rad(GIMBAL_LIMIT_DEG)))


class QuaternionError(ValueError):
    pass


def _as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1:] != (4,):
        raise QuaternionError(f"expected (..., 4) quaternion array, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise QuaternionError("non-finite quaternion")
    return q


def quat_to_rotmat(q) -> np.ndarray:
    """
    Rotation matrix of unit quaternions

    Args:
        q: (..., 4) quaternions, unit norm expected (caller normalizes)

    Returns:
        (..., 3, 3) rotation matrices
    """
    q = _as_quat(q)
    r, i, j, k = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1.0 - 2.0 * (j * j + k * k)
    m[..., 0, 1] = 2.0 * (i * j + k * r)
    m[..., 0, 2] = 2.0 * (i * k - j * r)
    m[..., 1, 0] = 2.0 * (i * j - k * r)
    m[..., 1, 1] = 1.0 - 2.0 * (i * i + k * k)
    m[..., 1, 2] = 2.0 * (j * k + i * r)
    m[..., 2, 0] = 2.0 * (i * k + j * r)
    m[..., 2, 1] = 2.0 * (j * k - i * r)
    m[..., 2, 2] = 1.0 - 2.0 * (i * i + j * j)
    return m


def quat_to_rotmat_grad(q, upstream) -> np.ndarray:
    """
    Vector-Jacobian product of quat_to_rotmat

    Args:
        q: (..., 4) quaternions
        upstream: (..., 3, 3) cotangent dL/dR

    Returns:
        (..., 4) cotangent dL/dq
    """
    q = _as_quat(q)
    u = np.asarray(upstream, dtype=np.float64)
    r, i, j, k = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    u00, u01, u02 = u[..., 0, 0], u[..., 0, 1], u[..., 0, 2]
    u10, u11, u12 = u[..., 1, 0], u[..., 1, 1], u[..., 1, 2]
    u20, u21, u22 = u[..., 2, 0], u[..., 2, 1], u[..., 2, 2]

    g = np.empty(np.broadcast_shapes(q.shape, u.shape[:-2] + (4,)), dtype=np.float64)
    g[..., 0] = 2.0 * (k * (u01 - u10) + j * (u20 - u02) + i * (u12 - u21))
    g[..., 1] = 2.0 * (j * (u01 + u10) + k * (u02 + u20) + r * (u12 - u21)) - 4.0 * i * (u11 + u22)
    g[..., 2] = 2.0 * (i * (u01 + u10) + r * (u20 - u02) + k * (u12 + u21)) - 4.0 * j * (u00 + u22)
    g[..., 3] = 2.0 * (r * (u01 - u10) + i * (u02 + u20) + j * (u12 + u21)) - 4.0 * k * (u00 + u11)
    return g


def quat_from_rotmat(m) -> np.ndarray:
    """
    Inverse of quat_to_rotmat, with the sign fixed so that r >= 0

    Args:
        m: (..., 3, 3) proper rotation matrices

    Returns:
        (..., 4) unit quaternions
    """
    e = np.asarray(m, dtype=np.float64)
    # Rotation works on the Hamilton active matrix and returns (i, j, k, r)
    active = np.swapaxes(e, -1, -2)
    xyzw = Rotation.from_matrix(active.reshape(-1, 3, 3)).as_quat()
    q = np.concatenate([xyzw[:, 3:], xyzw[:, :3]], axis=-1)
    q = np.where(q[:, :1] < 0.0, -q, q)
    return q.reshape(e.shape[:-2] + (4,))


def quat_normalize(v) -> np.ndarray:
    """
    Project raw 4-vectors onto the unit sphere

    Raises:
        QuaternionError: when a norm is at or below EPS_NORM
    """
    v = _as_quat(v)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm <= EPS_NORM):
        raise QuaternionError("degenerate quaternion output")
    return v / norm


def quat_normalize_grad(v, upstream) -> np.ndarray:
    """dL/dv of v / |v| given dL/du: (g - u (u.g)) / |v|."""
    v = _as_quat(v)
    g = np.asarray(upstream, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm <= EPS_NORM):
        raise QuaternionError("degenerate quaternion output")
    u = v / norm
    return (g - u * np.sum(u * g, axis=-1, keepdims=True)) / norm


def axis_angle_quat(axis, degrees) -> np.ndarray:
    """Hamilton quaternion of a rotation by `degrees` about `axis`."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * np.deg2rad(np.asarray(degrees, dtype=np.float64))[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def euler_matrix(order: str, angles, degrees: bool = True) -> np.ndarray:
    """
    Active intrinsic rotation matrices for Euler angles applied in `order`

    Args:
        order: axes such as "ZXY"; the matrix is R_order[0] @ R_order[1] @ R_order[2]
        angles: (..., len(order)) angles
        degrees: angles in degrees, else radians

    Returns:
        (..., 3, 3) rotation matrices
    """
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape[-1:] != (len(order),):
        raise ValueError(f"{len(order)} angles per rotation expected for order {order!r}, got shape {angles.shape}")
    flat = Rotation.from_euler(order.upper(), angles.reshape(-1, len(order)), degrees=degrees).as_matrix()
    return flat.reshape(angles.shape[:-1] + (3, 3))


def euler_xyz_matrix(x_deg, y_deg, z_deg) -> np.ndarray:
    """Active intrinsic X-Y-Z rotation Rx(x) @ Ry(y) @ Rz(z)."""
    angles = np.stack(np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (x_deg, y_deg, z_deg))), axis=-1)
    return euler_matrix("XYZ", angles)


def axis_rotation(axis: str, radians) -> np.ndarray:
    """Active right-handed rotation matrices about a coordinate axis."""
    if axis not in ("x", "y", "z"):
        raise ValueError(f"unknown axis {axis!r}")
    return euler_matrix(axis, np.asarray(radians, dtype=np.float64)[..., None], degrees=False)


def quat_from_euler_xyz(x_deg, y_deg, z_deg) -> np.ndarray:
    """
    Quaternion whose Hamilton active matrix is Rx(x) Ry(y) Rz(z); its twist
    angle is y whenever |x| < 90.
    """
    active = euler_xyz_matrix(x_deg, y_deg, z_deg)
    return quat_from_rotmat(np.swapaxes(active, -1, -2))


def _twist_terms(q: np.ndarray):
    r, i, j, k = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    s = 2.0 * (i * k + j * r)
    a = 2.0 * (j * k - i * r)
    b = 1.0 - 2.0 * (i * i + j * j)
    sign = np.where(b < 0.0, -1.0, 1.0)
    return s, a, b, sign


def quat_twist_angle_y(q) -> np.ndarray:
    """
    Y angle (degrees, in (-180, 180]) of the intrinsic X-Y-Z decomposition of
    the Hamilton active rotation, taking the branch with |x angle| <= 90 so
    the y angle spans the full circle.
    """
    q = _as_quat(q)
    s, a, b, sign = _twist_terms(q)
    c = sign * np.hypot(a, b)
    angle = np.rad2deg(np.arctan2(s, c))
    return np.where(angle <= -180.0, angle + 360.0, angle)


def quat_twist_angle_y_grad(q, upstream) -> np.ndarray:
    """
    dL/dq of quat_twist_angle_y. Inside 0.01 degrees of gimbal lock the
    derivative is clamped to its value at GIMBAL_LIMIT_DEG.
    """
    q = _as_quat(q)
    g = np.asarray(upstream, dtype=np.float64)
    r, i, j, k = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    s, a, b, sign = _twist_terms(q)
    hyp = np.hypot(a, b)
    hyp_clamped = np.maximum(hyp, _HYPOT_FLOOR * np.sqrt(s * s + hyp * hyp))
    c = sign * hyp_clamped

    ds = 2.0 * np.stack([j, k, r, i], axis=-1)
    da = 2.0 * np.stack([-i, -r, k, j], axis=-1)
    db = np.stack([np.zeros_like(r), -4.0 * i, -4.0 * j, np.zeros_like(r)], axis=-1)
    dc = sign[..., None] * (a[..., None] * da + b[..., None] * db) / hyp_clamped[..., None]

    denom = (s * s + c * c)[..., None]
    dangle = (c[..., None] * ds - s[..., None] * dc) / denom
    return np.rad2deg(1.0) * g[..., None] * dangle
