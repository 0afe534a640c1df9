"""
Height-normalized error and movement measures on motion clips.

Both mse and movement_variance work on world positions divided by the
target character's height and sum over x, y and z before averaging over
frames and joints, so they share units.
"""
from typing import Optional, Sequence

import numpy as np

from backend.kinematics import ArityMismatchError, SequenceLengthError, Skeleton, apply_global
from backend.motion_clip import MotionClip

# normalized variance bin edges; the last bin is open
VARIANCE_BINS = (0.0, 2.5, 5.0, 10.0, 20.0, float("inf"))


def _check_comparable(prediction: MotionClip, truth: MotionClip) -> None:
    if prediction.length != truth.length:
        raise SequenceLengthError(f"prediction has {prediction.length} frames, ground truth {truth.length}")
    if prediction.skeleton.n_joints != truth.skeleton.n_joints:
        raise ArityMismatchError(
            f"prediction has {prediction.skeleton.n_joints} joints, ground truth {truth.skeleton.n_joints}"
        )


def mse(prediction: MotionClip, truth: MotionClip, height: Optional[float] = None) -> float:
    """
    Mean squared joint-position error after combining local and global motion

    Both clips are integrated from the ground truth's origin, so an origin
    mismatch is not counted as error.

    Args:
        prediction: retargeted clip
        truth: ground-truth clip on the same skeleton
        height: normalizing height, the truth skeleton's height by default

    Returns:
        mean over frames and joints of the squared distance in height units
    """
    _check_comparable(prediction, truth)
    height = truth.skeleton.height if height is None else height
    predicted = apply_global(prediction.local, prediction.global_motion, truth.origin)
    expected = apply_global(truth.local, truth.global_motion, truth.origin)
    return float(np.mean(np.sum(((predicted - expected) / height) ** 2, axis=-1)))


def movement_variance(clip: MotionClip, height: Optional[float] = None) -> float:
    """Temporal variance of normalized world positions, summed over xyz and averaged over joints."""
    height = clip.skeleton.height if height is None else height
    positions = clip.world_positions() / height
    return float(np.mean(np.sum(np.var(positions, axis=0), axis=-1)))


def assign_bins(values, edges: Sequence[float] = VARIANCE_BINS) -> np.ndarray:
    """Bin index per value; bin i holds edges[i] <= value < edges[i + 1]."""
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError(f"bin edges must be strictly increasing, got {edges.tolist()}")
    values = np.asarray(values, dtype=np.float64)
    if np.any(values < edges[0]) or np.any(values >= edges[-1]):
        raise ValueError(f"values outside [{edges[0]}, {edges[-1]})")
    return np.searchsorted(edges, values, side="right") - 1


def bone_lengths(local, skeleton: Skeleton) -> np.ndarray:
    """(T, N-1) bone lengths of a pose sequence."""
    local = np.asarray(local, dtype=np.float64)
    parents = skeleton.parent_array
    return np.linalg.norm(local[:, 1:] - local[:, parents[1:]], axis=-1)


def bone_length_error(local, skeleton: Skeleton) -> float:
    """Largest relative deviation of any bone from its T-pose length. Zero-length bones are ignored."""
    rest = skeleton.bone_lengths
    valid = rest > 1e-9
    if not valid.any():
        return 0.0
    lengths = bone_lengths(local, skeleton)
    return float(np.max(np.abs(lengths[:, valid] - rest[valid]) / rest[valid]))


def total_variation(series) -> float:
    """Sum of absolute frame-to-frame changes over all columns of a (T, ...) series."""
    series = np.asarray(series, dtype=np.float64)
    return float(np.sum(np.abs(np.diff(series, axis=0))))


def end_effector_heights(clip: MotionClip, joints: Sequence[str]) -> np.ndarray:
    """(T, len(joints)) height (local y) of the named joints."""
    index = [clip.skeleton.index(joint) for joint in joints]
    return clip.local[:, index, 1]
