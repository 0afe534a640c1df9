"""
Split absolute joint trajectories into local (heading-free, root-relative)
motion and global root motion.

Heading: forward = cross(up, left_hip - right_hip) on the ground plane,
psi = atan2(forward_x, forward_z). For frame t (0-based):

    local_t = Ry(-psi_t) (p_t - root_t)
    v_t     = (Ry(-psi_{t-1}) (root_t - root_{t-1}), wrap(psi_t - psi_{t-1}))     t >= 1
    v_0     = v_1

The clip origin is the virtual frame before the first, chosen so that
apply_global reproduces the input exactly.
"""
import logging
from typing import Optional

import numpy as np

from backend.kinematics import SequenceLengthError, Skeleton, yaw_matrix
from backend.motion_clip import MotionClip
from backend.quat_math import quat_from_rotmat, quat_to_rotmat
from ingestion.joint_aliases import CANONICAL_JOINTS, canonical_skeleton

logger = logging.getLogger(__name__)

HIP_JOINTS = ("LeftUpLeg", "RightUpLeg")
MIN_FORWARD_NORM = 1e-6


def wrap_degrees(angle):
    """Wrap to (-180, 180]."""
    wrapped = np.mod(np.asarray(angle, dtype=np.float64) + 180.0, 360.0) - 180.0
    return np.where(wrapped == -180.0, 180.0, wrapped)


def compute_headings(positions: np.ndarray, skeleton: Skeleton, hips=HIP_JOINTS) -> np.ndarray:
    """
    Per-frame facing angle in degrees about +y

    A frame whose hip axis is vertical (character lying flat) keeps the previous
    frame's heading; leading degenerate frames take the first valid one.
    """
    frames = positions.shape[0]
    try:
        left, right = skeleton.index(hips[0]), skeleton.index(hips[1])
    except KeyError:
        logger.debug(f"skeleton {skeleton.name!r} has no hip joints; using zero heading")
        return np.zeros(frames)
    across = positions[:, left] - positions[:, right]
    forward = np.stack([across[:, 2], np.zeros(frames), -across[:, 0]], axis=-1)
    norm = np.linalg.norm(forward, axis=-1)
    valid = norm > MIN_FORWARD_NORM
    headings = np.rad2deg(np.arctan2(forward[:, 0], forward[:, 2]))
    if not valid.all():
        logger.warning(f"{int((~valid).sum())} frames with degenerate heading; reusing previous heading")
        fallback = headings[np.argmax(valid)] if valid.any() else 0.0
        for t in range(frames):
            if not valid[t]:
                headings[t] = headings[t - 1] if t > 0 else fallback
    return headings


def preprocess(positions, skeleton: Skeleton, fps: float = 30.0, rotations=None, name: str = "",
               hips=HIP_JOINTS) -> MotionClip:
    """
    Build a MotionClip from absolute joint positions

    Args:
        positions: (T, N, 3) world joint positions, cm
        skeleton: the performing skeleton, joints in the same order
        fps: frame rate
        rotations: optional (T, N, 4) local quaternions whose root entry is the
            world root rotation; the heading is removed from the root entry
        name: clip name

    Returns:
        MotionClip whose apply_global reproduces `positions`
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 3 or positions.shape[1:] != (skeleton.n_joints, 3):
        raise ValueError(f"positions shape {positions.shape} does not match skeleton with {skeleton.n_joints} joints")
    frames = positions.shape[0]
    if frames < 2:
        raise SequenceLengthError(f"preprocessing needs at least 2 frames, got {frames}")
    if not np.all(np.isfinite(positions)):
        raise ValueError("non-finite joint positions")

    roots = positions[:, 0]
    headings = compute_headings(positions, skeleton, hips)
    inverse_yaw = yaw_matrix(-headings)
    local = np.einsum("tab,tnb->tna", inverse_yaw, positions - roots[:, None, :])

    global_motion = np.empty((frames, 4))
    global_motion[1:, :3] = np.einsum("tab,tb->ta", inverse_yaw[:-1], roots[1:] - roots[:-1])
    global_motion[1:, 3] = wrap_degrees(np.diff(headings))
    global_motion[0] = global_motion[1]

    origin_yaw = headings[0] - global_motion[0, 3]
    origin = np.concatenate([roots[0] - yaw_matrix(origin_yaw) @ global_motion[0, :3], [origin_yaw]])

    if rotations is not None:
        rotations = np.array(rotations, dtype=np.float64)
        if rotations.shape != (frames, skeleton.n_joints, 4):
            raise ValueError(f"rotations shape {rotations.shape}, expected {(frames, skeleton.n_joints, 4)}")
        rotations[:, 0] = quat_from_rotmat(inverse_yaw @ quat_to_rotmat(rotations[:, 0]))

    return MotionClip(skeleton=skeleton, fps=fps, local=local, global_motion=global_motion, origin=origin,
                      rotations=rotations, name=name)


def skeleton_from_positions(positions, name: str = "estimated") -> Skeleton:
    """
    Canonical skeleton for position-only input: template bone directions with
    the median bone lengths observed in the sequence. Zero-length bones from
    duplicated joints stay zero.
    """
    positions = np.asarray(positions, dtype=np.float64)
    template = canonical_skeleton()
    parents = template.parent_array
    lengths = np.median(np.linalg.norm(positions[:, 1:] - positions[:, parents[1:]], axis=-1), axis=0)
    directions = template.offsets[1:] / np.linalg.norm(template.offsets[1:], axis=-1, keepdims=True)
    tpose = np.zeros((len(CANONICAL_JOINTS), 3))
    tpose[0] = template.tpose[0] * (lengths.sum() / template.bone_lengths.sum())
    for n in range(1, len(tpose)):
        tpose[n] = tpose[parents[n]] + directions[n - 1] * lengths[n - 1]
    return Skeleton(template.names, template.parents, tpose, name=name)


def preprocess_positions(positions, fps: float = 30.0, skeleton: Optional[Skeleton] = None,
                         name: str = "input") -> MotionClip:
    """Preprocess canonical-order positions, estimating the skeleton when none is given."""
    skeleton = skeleton or skeleton_from_positions(positions, name=name)
    return preprocess(positions, skeleton, fps=fps, name=name)
