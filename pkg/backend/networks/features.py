"""
Per-frame network features x_t = [p_t / h, (vx, vy, vz) / h, dyaw in radians].
"""
import numpy as np

from backend.kinematics import Skeleton
from backend.motion_clip import MotionClip


def feature_size(n_joints: int) -> int:
    return 3 * n_joints + 4


def clip_features(clip: MotionClip, dtype=np.float32) -> np.ndarray:
    """(T, 3N+4) normalised features of a clip, scaled by its own skeleton's height."""
    return motion_features(clip.local, clip.global_motion, clip.skeleton.height, dtype)


def motion_features(local, global_motion, height: float, dtype=np.float32) -> np.ndarray:
    local = np.asarray(local, dtype=np.float64)
    global_motion = np.asarray(global_motion, dtype=np.float64)
    frames = local.shape[0]
    return np.concatenate(
        [
            local.reshape(frames, -1) / height,
            global_motion[:, :3] / height,
            np.deg2rad(global_motion[:, 3:]),
        ],
        axis=-1,
    ).astype(dtype)


def features_to_motion(features, height: float) -> tuple:
    """
    Inverse of motion_features

    Returns:
        (local (T, N, 3) in cm, global motion (T, 4) in cm/frame and deg/frame)
    """
    features = np.asarray(features, dtype=np.float64)
    frames = features.shape[0]
    local = features[:, :-4].reshape(frames, -1, 3) * height
    global_motion = np.concatenate([features[:, -4:-1] * height, np.rad2deg(features[:, -1:])], axis=-1)
    return local, global_motion


def seed_frame(skeleton: Skeleton) -> np.ndarray:
    """x̂_0: normalised root-relative T-pose with zero velocity."""
    return np.concatenate([(skeleton.local_tpose / skeleton.height).reshape(-1), np.zeros(4)])
