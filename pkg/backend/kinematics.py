"""
Skeleton representation and the differentiable forward kinematics layer.

Conventions: centimeters, y up, a skeleton faces +z in its T-pose. A joint's
quaternion rotates the bone that ends at that joint. In "hierarchical" mode
rotations accumulate from the root (W_n = W_parent(n) R_n); in "world" mode
every bone is rotated by R_root R_n with no accumulation along the chain.
The root's bone offset is zero, so the root quaternion acts only through the
rotations it passes to the rest of the skeleton.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Optional, Sequence

import numpy as np

from backend.quat_math import axis_rotation, quat_to_rotmat, quat_to_rotmat_grad

CompositionMode = Literal["hierarchical", "world"]


class ArityMismatchError(ValueError):
    pass


class SequenceLengthError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Skeleton:
    """
    Named joint tree with T-pose joint positions

    Attributes:
        names: joint names, root first
        parents: parent index per joint, None for the root; parents[i] < i
        tpose: (N, 3) T-pose joint positions in centimeters
        name: identifier used by clips (skeleton_id)
    """

    names: tuple
    parents: tuple
    tpose: np.ndarray = field(repr=False)
    name: str = "skeleton"

    def __post_init__(self):
        names = tuple(self.names)
        parents = tuple(None if p is None or p < 0 else int(p) for p in self.parents)
        tpose = np.array(self.tpose, dtype=np.float64)
        if len(names) < 2:
            raise ValueError("a skeleton needs at least 2 joints")
        if len(parents) != len(names) or tpose.shape != (len(names), 3):
            raise ValueError(
                f"skeleton {self.name!r}: {len(names)} names, {len(parents)} parents, tpose shape {tpose.shape}"
            )
        if parents[0] is not None or any(p is None for p in parents[1:]):
            raise ValueError(f"skeleton {self.name!r}: exactly one root, at index 0, is required")
        for index, parent in enumerate(parents[1:], start=1):
            if not 0 <= parent < index:
                raise ValueError(f"skeleton {self.name!r}: joint {names[index]!r} has parent {parent}, expected < {index}")
        if not np.all(np.isfinite(tpose)):
            raise ValueError(f"skeleton {self.name!r}: non-finite T-pose")
        tpose.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "tpose", tpose)

    @property
    def n_joints(self) -> int:
        return len(self.names)

    @cached_property
    def parent_array(self) -> np.ndarray:
        return np.array([-1] + list(self.parents[1:]), dtype=np.int64)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Bone offsets s̄ⁿ = p̄ⁿ − p̄^parent(n); row 0 (root) is zero."""
        offsets = np.zeros_like(self.tpose)
        offsets[1:] = self.tpose[1:] - self.tpose[self.parent_array[1:]]
        offsets.setflags(write=False)
        return offsets

    @cached_property
    def bone_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.offsets[1:], axis=-1)

    @cached_property
    def height(self) -> float:
        """Head-to-toe extent of the T-pose along the up axis."""
        return float(self.tpose[:, 1].max() - self.tpose[:, 1].min())

    @cached_property
    def local_tpose(self) -> np.ndarray:
        """T-pose with the root moved to the origin."""
        return self.tpose - self.tpose[0]

    def features(self) -> np.ndarray:
        """Conditioning vector: bone offsets (N-1)x3 flattened, divided by height."""
        return (self.offsets[1:] / self.height).reshape(-1)

    def index(self, joint_name: str) -> int:
        try:
            return self.names.index(joint_name)
        except ValueError:
            raise KeyError(f"joint {joint_name!r} not in skeleton {self.name!r}") from None

    def children(self, joint_index: int) -> list:
        return [n for n, p in enumerate(self.parents) if p == joint_index]

    def renamed(self, name: str) -> "Skeleton":
        return Skeleton(self.names, self.parents, self.tpose, name=name)


def _check_arity(quats: np.ndarray, offsets: np.ndarray) -> None:
    if quats.shape[-1:] != (4,) or quats.shape[-2] != offsets.shape[-2]:
        raise ArityMismatchError(
            f"joint/rotation arity mismatch: quaternions {quats.shape}, skeleton joints {offsets.shape[-2]}"
        )


def _bone_rotations(rot: np.ndarray, parents: np.ndarray, mode: CompositionMode) -> np.ndarray:
    """Rotation applied to each joint's incoming bone."""
    if mode == "hierarchical":
        world = np.empty_like(rot)
        world[..., 0, :, :] = rot[..., 0, :, :]
        for n in range(1, rot.shape[-3]):
            world[..., n, :, :] = world[..., parents[n], :, :] @ rot[..., n, :, :]
        return world
    if mode == "world":
        world = rot[..., :1, :, :] @ rot
        world[..., 0, :, :] = rot[..., 0, :, :]
        return world
    raise ValueError(f"unknown composition mode {mode!r}")


def fk_positions(quats, offsets, parents: Sequence[int], mode: CompositionMode = "hierarchical") -> np.ndarray:
    """
    Forward kinematics on raw arrays

    Args:
        quats: (..., N, 4) unit quaternions
        offsets: (..., N, 3) bone offsets, broadcastable against quats
        parents: parent index per joint, -1 for the root
        mode: "hierarchical" or "world"

    Returns:
        (..., N, 3) joint positions with the root at the origin
    """
    quats = np.asarray(quats, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    _check_arity(quats, offsets)
    parents = np.asarray(parents)
    bones = _bone_rotations(quat_to_rotmat(quats), parents, mode)
    step = np.einsum("...ab,...b->...a", bones, np.broadcast_to(offsets, bones.shape[:-1]))
    positions = np.zeros(step.shape, dtype=np.float64)
    for n in range(1, step.shape[-2]):
        positions[..., n, :] = positions[..., parents[n], :] + step[..., n, :]
    return positions


def fk_gradient(quats, offsets, parents: Sequence[int], upstream,
                mode: CompositionMode = "hierarchical") -> np.ndarray:
    """
    Vector-Jacobian product of fk_positions with respect to the quaternions

    Args:
        upstream: (..., N, 3) cotangent dL/dpositions

    Returns:
        (..., N, 4) cotangent dL/dquats
    """
    quats = np.asarray(quats, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    _check_arity(quats, offsets)
    parents = np.asarray(parents)
    n_joints = quats.shape[-2]
    rot = quat_to_rotmat(quats)
    bones = _bone_rotations(rot, parents, mode)
    offsets = np.broadcast_to(offsets, bones.shape[:-1])

    # subtree sums: every descendant's position moves with joint n's bone
    subtree = np.array(np.broadcast_to(upstream, bones.shape[:-1]), dtype=np.float64)
    for n in range(n_joints - 1, 0, -1):
        subtree[..., parents[n], :] += subtree[..., n, :]

    d_bone = subtree[..., :, :, None] * offsets[..., :, None, :]
    d_bone[..., 0, :, :] = 0.0
    d_rot = np.zeros_like(rot)

    if mode == "hierarchical":
        for n in range(n_joints - 1, 0, -1):
            parent = parents[n]
            d_rot[..., n, :, :] = np.swapaxes(bones[..., parent, :, :], -1, -2) @ d_bone[..., n, :, :]
            d_bone[..., parent, :, :] += d_bone[..., n, :, :] @ np.swapaxes(rot[..., n, :, :], -1, -2)
        d_rot[..., 0, :, :] = d_bone[..., 0, :, :]
    elif mode == "world":
        root_t = np.swapaxes(rot[..., :1, :, :], -1, -2)
        d_rot[..., 1:, :, :] = root_t @ d_bone[..., 1:, :, :]
        d_rot[..., 0, :, :] = np.sum(d_bone[..., 1:, :, :] @ np.swapaxes(rot[..., 1:, :, :], -1, -2), axis=-3)
    else:
        raise ValueError(f"unknown composition mode {mode!r}")

    return quat_to_rotmat_grad(quats, d_rot)


def fk_forward(quats, skeleton: Skeleton, mode: CompositionMode = "hierarchical") -> np.ndarray:
    """Pose of `skeleton` under per-joint quaternions, root at the origin."""
    return fk_positions(quats, skeleton.offsets, skeleton.parent_array, mode)


def fk_backward(quats, skeleton: Skeleton, upstream, mode: CompositionMode = "hierarchical") -> np.ndarray:
    return fk_gradient(quats, skeleton.offsets, skeleton.parent_array, upstream, mode)


def yaw_matrix(degrees) -> np.ndarray:
    """Rotation about the vertical (y) axis."""
    return axis_rotation("y", np.deg2rad(np.asarray(degrees, dtype=np.float64)))


def integrate_root(global_motion, origin: Optional[np.ndarray] = None):
    """
    Integrate per-frame root velocities and yaw rates

    Args:
        global_motion: (T, 4) rows (vx, vy, vz, dyaw); velocities are expressed in
            the previous frame's heading
        origin: (4,) root position and heading before the first frame

    Returns:
        (root positions (T, 3), headings in degrees (T,))
    """
    global_motion = np.asarray(global_motion, dtype=np.float64)
    origin = np.zeros(4) if origin is None else np.asarray(origin, dtype=np.float64)
    headings = origin[3] + np.cumsum(global_motion[:, 3])
    previous = np.concatenate([[origin[3]], headings[:-1]])
    displacement = np.einsum("tab,tb->ta", yaw_matrix(previous), global_motion[:, :3])
    roots = origin[:3] + np.cumsum(displacement, axis=0)
    return roots, headings


def apply_global(local, global_motion, origin: Optional[np.ndarray] = None) -> np.ndarray:
    """
    World-space joint trajectories from local poses and global motion

    Args:
        local: (T, N, 3) heading-free, root-relative poses
        global_motion: (T, 4) per-frame (vx, vy, vz, dyaw)
        origin: (4,) starting root position and heading, zeros by default

    Returns:
        (T, N, 3) absolute joint positions
    """
    local = np.asarray(local, dtype=np.float64)
    global_motion = np.asarray(global_motion, dtype=np.float64)
    if local.shape[0] != global_motion.shape[0]:
        raise SequenceLengthError(
            f"local motion has {local.shape[0]} frames but global motion has {global_motion.shape[0]}"
        )
    roots, headings = integrate_root(global_motion, origin)
    rotated = np.einsum("tab,tnb->tna", yaw_matrix(headings), local)
    return rotated + roots[:, None, :]
