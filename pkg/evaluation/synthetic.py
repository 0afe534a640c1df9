"""
Synthetic characters and motions with exact cross-character ground truth.

Every character shares the canonical joint tree with its own (left/right
symmetric) bone scales. A motion is a set of per-joint Euler angles plus a root
path and heading defined for the template character; performing it on a
character copies the joint rotations and scales the root path by the height
ratio. The copy baseline is therefore exact on this data.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from backend.kinematics import Skeleton, fk_positions, yaw_matrix
from backend.motion_clip import Dataset, MotionClip, RetargetPair
from backend.quat_math import quat_from_euler_xyz, quat_from_rotmat, quat_to_rotmat
from ingestion.joint_aliases import canonical_skeleton
from ingestion.preprocessing import preprocess

logger = logging.getLogger(__name__)

MOTION_KINDS = ("walk", "arm_wave", "idle_sway", "turn")
SCALE_RANGE = (0.6, 1.6)
MAX_TWIST = 30.0
CLIP_FRAMES = 120
FPS = 30.0

# bone groups scaled together; the bone ending at "LeftArm" and "RightArm" share "Arm"
BONE_GROUPS = ("Spine", "Neck", "UpLeg", "Leg", "Foot", "ToeBase", "Shoulder", "Arm", "ForeArm", "Hand")


def _bone_group(joint_name: str) -> str:
    name = joint_name.removeprefix("Left").removeprefix("Right")
    if name.startswith("Spine"):
        return "Spine"
    if name == "Head":
        return "Neck"
    return name


@dataclass(frozen=True, eq=False)
class MotionSpec:
    """
    A motion defined on the template character

    Attributes:
        angles: (T, N, 3) Euler x-y-z degrees per joint; the root row is body sway
        headings: (T,) root yaw in degrees
        root_path: (T, 3) root trajectory for the template's height
    """

    name: str
    kind: str
    angles: np.ndarray = field(repr=False)
    headings: np.ndarray = field(repr=False)
    root_path: np.ndarray = field(repr=False)


@dataclass
class SyntheticFamily:
    """Character and motion generator over one template skeleton."""

    template: Skeleton = field(default_factory=canonical_skeleton)
    frames: int = CLIP_FRAMES
    fps: float = FPS

    def character_from_scales(self, name: str, scales: dict) -> Skeleton:
        """Skeleton whose bones are the template's scaled per group, feet on the ground."""
        offsets = self.template.offsets.copy()
        for n, joint in enumerate(self.template.names[1:], start=1):
            offsets[n] *= scales.get(_bone_group(joint), 1.0)
        tpose = np.zeros_like(offsets)
        for n in range(1, len(offsets)):
            tpose[n] = tpose[self.template.parents[n]] + offsets[n]
        tpose[:, 1] -= tpose[:, 1].min()
        return Skeleton(self.template.names, self.template.parents, tpose, name=name)

    def make_character(self, name: str, rng: np.random.Generator) -> Skeleton:
        overall = rng.uniform(0.75, 1.3)
        scales = {group: float(np.clip(overall * rng.uniform(0.85, 1.2), *SCALE_RANGE)) for group in BONE_GROUPS}
        return self.character_from_scales(name, scales)

    def make_motion(self, name: str, kind: str, rng: np.random.Generator) -> MotionSpec:
        if kind not in MOTION_KINDS:
            raise ValueError(f"unknown motion kind {kind!r}, expected one of {MOTION_KINDS}")
        t = np.arange(self.frames) / self.fps
        angles = self._texture(t, rng)
        start = np.array([rng.uniform(-100.0, 100.0), self.template.tpose[0, 1], rng.uniform(-100.0, 100.0)])
        heading0 = rng.uniform(-180.0, 180.0)
        headings, step = getattr(self, f"_{kind}")(t, angles, heading0, rng)
        angles[:, :, 1] = np.clip(angles[:, :, 1], -MAX_TWIST, MAX_TWIST)
        root_path = start + np.cumsum(step, axis=0) - step[0]
        return MotionSpec(name, kind, angles, headings, root_path)

    def _texture(self, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Small independent oscillations on every joint except the hips."""
        n = self.template.n_joints
        amplitude = rng.uniform(0.0, [6.0, 15.0, 6.0], size=(n, 3))
        frequency = rng.uniform(0.2, 1.2, size=(n, 3))
        phase = rng.uniform(0.0, 2 * np.pi, size=(n, 3))
        angles = amplitude * np.sin(2 * np.pi * frequency * t[:, None, None] + phase)
        angles[:, 0] = 0.0
        for hip in ("LeftUpLeg", "RightUpLeg"):
            angles[:, self.template.index(hip)] = 0.0
        return angles

    def _j(self, name: str) -> int:
        return self.template.index(name)

    def _arms_down(self, angles: np.ndarray, drop: float) -> None:
        angles[:, self._j("LeftForeArm"), 2] -= drop
        angles[:, self._j("RightForeArm"), 2] += drop

    def _walk(self, t, angles, heading0, rng):
        omega = 2 * np.pi * rng.uniform(0.7, 1.3)
        thigh, knee, arm = rng.uniform(15, 35), rng.uniform(10, 40), rng.uniform(10, 30)
        swing = np.sin(omega * t)
        angles[:, self._j("LeftLeg"), 0] += thigh * swing
        angles[:, self._j("RightLeg"), 0] -= thigh * swing
        angles[:, self._j("LeftFoot"), 0] += knee * 0.5 * (1 - np.cos(omega * t))
        angles[:, self._j("RightFoot"), 0] += knee * 0.5 * (1 + np.cos(omega * t))
        self._arms_down(angles, rng.uniform(50, 75))
        angles[:, self._j("LeftForeArm"), 0] -= arm * swing
        angles[:, self._j("RightForeArm"), 0] += arm * swing
        angles[:, 0, 0] += 3.0 * np.sin(2 * omega * t)
        angles[:, 0, 2] += 2.0 * swing
        headings = heading0 + rng.uniform(-20, 20) * t
        speed = rng.uniform(60, 150) / self.fps
        step = np.einsum("tab,b->ta", yaw_matrix(headings), np.array([0.0, 0.0, speed]))
        step[:, 1] = np.diff(2.0 * np.sin(2 * omega * t), prepend=0.0)
        return headings, step

    def _arm_wave(self, t, angles, heading0, rng):
        omega = 2 * np.pi * rng.uniform(0.3, 1.0)
        lift, wave = rng.uniform(0, 40), rng.uniform(30, 60)
        phase = rng.uniform(0, np.pi)
        angles[:, self._j("LeftForeArm"), 2] += -lift + wave * np.sin(omega * t)
        angles[:, self._j("RightForeArm"), 2] += lift - wave * np.sin(omega * t + phase)
        angles[:, self._j("LeftHand"), 2] -= rng.uniform(10, 60) * 0.5 * (1 - np.cos(omega * t))
        angles[:, self._j("RightHand"), 2] += rng.uniform(10, 60) * 0.5 * (1 - np.cos(omega * t + phase))
        headings = np.full_like(t, heading0)
        step = np.zeros((len(t), 3))
        step[:, 1] = np.diff(np.sin(omega * t), prepend=0.0)
        return headings, step

    def _idle_sway(self, t, angles, heading0, rng):
        omega = 2 * np.pi * rng.uniform(0.2, 0.5)
        angles[:, 0, 2] += rng.uniform(3, 8) * np.sin(omega * t)
        for spine in ("Spine", "Spine1", "Spine2"):
            angles[:, self._j(spine), 0] += rng.uniform(1, 4) * np.sin(omega * t + 0.5)
        self._arms_down(angles, rng.uniform(60, 80))
        headings = heading0 + 10.0 * np.sin(0.5 * omega * t)
        lateral = rng.uniform(1, 4) * np.sin(omega * t)
        step = np.einsum("tab,tb->ta", yaw_matrix(headings),
                         np.stack([np.diff(lateral, prepend=0.0), np.zeros_like(t), np.zeros_like(t)], axis=-1))
        return headings, step

    def _turn(self, t, angles, heading0, rng):
        omega = 2 * np.pi * rng.uniform(1.0, 2.0)
        rate = rng.uniform(60, 180) * rng.choice([-1.0, 1.0])
        step_height = rng.uniform(5, 15)
        angles[:, self._j("LeftLeg"), 0] += step_height * np.maximum(np.sin(omega * t), 0.0)
        angles[:, self._j("RightLeg"), 0] += step_height * np.maximum(-np.sin(omega * t), 0.0)
        self._arms_down(angles, rng.uniform(40, 70))
        headings = heading0 + rate * t
        return headings, np.zeros((len(t), 3))

    def rotations(self, motion: MotionSpec) -> np.ndarray:
        """(T, N, 4) joint quaternions; the root entry carries the world heading."""
        quats = quat_from_euler_xyz(motion.angles[..., 0], motion.angles[..., 1], motion.angles[..., 2])
        root = yaw_matrix(motion.headings) @ quat_to_rotmat(quats[:, 0])
        quats[:, 0] = quat_from_rotmat(root)
        return quats

    def perform(self, motion: MotionSpec, character: Skeleton, name: Optional[str] = None) -> MotionClip:
        """Rotation-copy ground truth of `motion` on `character`."""
        quats = self.rotations(motion)
        ratio = character.height / self.template.height
        positions = fk_positions(quats, character.offsets, character.parent_array) + ratio * motion.root_path[:, None]
        return preprocess(positions, character, fps=self.fps, rotations=quats,
                          name=name or f"{motion.name}__{character.name}")


def _holdout(count: int, fraction: int) -> int:
    return count // fraction if count >= fraction else 0


def generate_dataset(n_characters: int, n_motions: int, seed: int = 0,
                     family: Optional[SyntheticFamily] = None) -> Dataset:
    """
    Build a dataset with ground-truth cross-character retargettings

    About a third of the characters and a quarter of the motions are held
    out. Training clips assign each training motion to one training character
    (round robin). Test pairs retarget a motion from one character onto
    another and are tagged with one of the four known/new scenarios.

    Args:
        n_characters: at least 2
        n_motions: at least 1
        seed: every random draw comes from this seed

    Returns:
        Dataset with splits, test pairs and character/motion lists
    """
    if n_characters < 2:
        raise ValueError(f"at least 2 characters are required, got {n_characters}")
    if n_motions < 1:
        raise ValueError(f"at least 1 motion is required, got {n_motions}")
    family = family or SyntheticFamily()
    rng = np.random.default_rng(seed)

    characters = [family.make_character(f"char{index:02d}", rng) for index in range(n_characters)]
    motions = [family.make_motion(f"{MOTION_KINDS[index % len(MOTION_KINDS)]}{index:02d}",
                                  MOTION_KINDS[index % len(MOTION_KINDS)], rng) for index in range(n_motions)]
    n_test_characters = _holdout(n_characters, 3)
    n_test_motions = _holdout(n_motions, 4)
    train_characters = characters[:n_characters - n_test_characters]
    test_characters = characters[n_characters - n_test_characters:]
    train_motions = motions[:n_motions - n_test_motions]
    test_motions = motions[n_motions - n_test_motions:]
    assert not {c.name for c in train_characters} & {c.name for c in test_characters}
    assert not {m.name for m in train_motions} & {m.name for m in test_motions}
    if not test_characters:
        logger.warning("too few characters to hold any out; new-character scenarios will be empty")
    if not test_motions:
        logger.warning("too few motions to hold any out; new-motion scenarios will be empty")

    clips: dict = {}
    splits: dict = {}

    def performed(motion: MotionSpec, character: Skeleton, split: str) -> str:
        name = f"{motion.name}__{character.name}"
        if name not in clips:
            clips[name] = family.perform(motion, character, name)
            splits[name] = split
        return name

    def other(pool: list, exclude: Skeleton) -> Optional[Skeleton]:
        candidates = [c for c in pool if c.name != exclude.name]
        return candidates[int(rng.integers(len(candidates)))] if candidates else None

    pairs = []
    for index, motion in enumerate(train_motions):
        performer = train_characters[index % len(train_characters)]
        source = performed(motion, performer, "train")
        known = other(train_characters, performer)
        if known is not None:
            pairs.append(RetargetPair(source, performed(motion, known, "test"), "known_motion_known_character"))
        if test_characters:
            new = test_characters[int(rng.integers(len(test_characters)))]
            pairs.append(RetargetPair(source, performed(motion, new, "test"), "known_motion_new_character"))

    for motion in test_motions:
        performer = train_characters[int(rng.integers(len(train_characters)))]
        source = performed(motion, performer, "test")
        known = other(train_characters, performer)
        if known is not None:
            pairs.append(RetargetPair(source, performed(motion, known, "test"), "new_motion_known_character"))
        if test_characters:
            new = test_characters[int(rng.integers(len(test_characters)))]
            pairs.append(RetargetPair(source, performed(motion, new, "test"), "new_motion_new_character"))

    dataset = Dataset(
        skeletons={c.name: c for c in characters},
        clips=clips,
        splits=splits,
        pairs=pairs,
        characters={"train": [c.name for c in train_characters], "test": [c.name for c in test_characters]},
        motions={"train": [m.name for m in train_motions], "test": [m.name for m in test_motions]},
        seed=seed,
    )
    logger.info(f"generated {len(clips)} clips over {n_characters} characters and {n_motions} motions, "
                f"{len(pairs)} test pairs")
    return dataset


def jitter_clip(clip: MotionClip, sigma: float, rng: np.random.Generator, name: Optional[str] = None) -> MotionClip:
    """Add Gaussian noise (cm) to the absolute joint positions and preprocess again. Rotations are dropped."""
    positions = clip.world_positions() + rng.normal(0.0, sigma, size=(clip.length, clip.skeleton.n_joints, 3))
    return preprocess(positions, clip.skeleton, fps=clip.fps, name=name or f"{clip.name}~{sigma:g}")


if __name__ == "__main__":
    dataset = generate_dataset(6, 8, seed=0)
    for pair in dataset.pairs:
        print(f"{pair.scenario:32s} {pair.source} -> {pair.truth}")
