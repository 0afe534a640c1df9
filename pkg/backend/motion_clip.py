"""
Motion clip and dataset containers shared by ingestion, training and evaluation.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from backend.kinematics import SequenceLengthError, Skeleton, apply_global, integrate_root

SCENARIOS = (
    "known_motion_known_character",
    "known_motion_new_character",
    "new_motion_known_character",
    "new_motion_new_character",
)


@dataclass(frozen=True, eq=False)
class MotionClip:
    """
    Preprocessed motion of one character

    Attributes:
        skeleton: performing character
        fps: frame rate
        local: (T, N, 3) heading-free, root-relative joint positions in cm
        global_motion: (T, 4) rows (vx, vy, vz, dyaw); cm/frame and deg/frame
        origin: (4,) root position and heading just before frame 1
        rotations: optional (T, N, 4) heading-compensated local quaternions
        name: clip identifier
    """

    skeleton: Skeleton
    fps: float
    local: np.ndarray = field(repr=False)
    global_motion: np.ndarray = field(repr=False)
    origin: np.ndarray = field(default_factory=lambda: np.zeros(4), repr=False)
    rotations: Optional[np.ndarray] = field(default=None, repr=False)
    name: str = ""

    def __post_init__(self):
        local = np.asarray(self.local, dtype=np.float64)
        global_motion = np.asarray(self.global_motion, dtype=np.float64)
        origin = np.asarray(self.origin, dtype=np.float64)
        if local.ndim != 3 or local.shape[1:] != (self.skeleton.n_joints, 3):
            raise ValueError(f"clip {self.name!r}: local shape {local.shape}, skeleton has {self.skeleton.n_joints} joints")
        if global_motion.shape != (local.shape[0], 4):
            raise SequenceLengthError(
                f"clip {self.name!r}: local has {local.shape[0]} frames, global motion shape {global_motion.shape}"
            )
        if local.shape[0] < 2:
            raise SequenceLengthError(f"clip {self.name!r}: at least 2 frames required, got {local.shape[0]}")
        if origin.shape != (4,):
            raise ValueError(f"clip {self.name!r}: origin must have 4 values, got {origin.shape}")
        if not (np.all(np.isfinite(local)) and np.all(np.isfinite(global_motion)) and np.all(np.isfinite(origin))):
            raise ValueError(f"clip {self.name!r}: non-finite motion values")
        object.__setattr__(self, "local", local)
        object.__setattr__(self, "global_motion", global_motion)
        object.__setattr__(self, "origin", origin)
        if self.rotations is not None:
            rotations = np.asarray(self.rotations, dtype=np.float64)
            if rotations.shape != (local.shape[0], self.skeleton.n_joints, 4):
                raise ValueError(f"clip {self.name!r}: rotations shape {rotations.shape}")
            object.__setattr__(self, "rotations", rotations)

    @property
    def skeleton_id(self) -> str:
        return self.skeleton.name

    @property
    def length(self) -> int:
        return self.local.shape[0]

    def world_positions(self) -> np.ndarray:
        return apply_global(self.local, self.global_motion, self.origin)

    def window(self, start: int, length: int, name: Optional[str] = None) -> "MotionClip":
        """Sub-clip of frames [start, start + length) with its origin carried over."""
        if start < 0 or length < 2 or start + length > self.length:
            raise SequenceLengthError(f"window [{start}, {start + length}) outside clip of {self.length} frames")
        origin = self.origin
        if start > 0:
            roots, headings = integrate_root(self.global_motion[:start], self.origin)
            origin = np.concatenate([roots[-1], headings[-1:]])
        rotations = None if self.rotations is None else self.rotations[start:start + length]
        return MotionClip(
            skeleton=self.skeleton,
            fps=self.fps,
            local=self.local[start:start + length],
            global_motion=self.global_motion[start:start + length],
            origin=origin,
            rotations=rotations,
            name=name or f"{self.name}[{start}:{start + length}]",
        )

    def replace(self, **changes) -> "MotionClip":
        values = dict(skeleton=self.skeleton, fps=self.fps, local=self.local, global_motion=self.global_motion,
                      origin=self.origin, rotations=self.rotations, name=self.name)
        values.update(changes)
        return MotionClip(**values)


@dataclass(frozen=True)
class RetargetPair:
    """A test case: retarget `source` onto the skeleton of `truth` and compare with `truth`."""

    source: str
    truth: str
    scenario: str


@dataclass
class Dataset:
    """
    Skeletons, clips, train/test tags and the test pairs of the four scenarios

    Attributes:
        skeletons: name -> Skeleton
        clips: name -> MotionClip
        splits: clip name -> "train" or "test"
        pairs: test retargetting cases
        characters: {"train": [...], "test": [...]} character names
        motions: {"train": [...], "test": [...]} motion names
    """

    skeletons: dict
    clips: dict
    splits: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)
    characters: dict = field(default_factory=dict)
    motions: dict = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self):
        for name, clip in self.clips.items():
            if clip.skeleton_id not in self.skeletons:
                raise KeyError(f"clip {name!r} references unknown skeleton {clip.skeleton_id!r}")
        for pair in self.pairs:
            if pair.source not in self.clips or pair.truth not in self.clips:
                raise KeyError(f"test pair {pair} references an unknown clip")
            if pair.scenario not in SCENARIOS:
                raise ValueError(f"unknown scenario {pair.scenario!r}")

    def train_clips(self) -> list:
        return [clip for name, clip in self.clips.items() if self.splits.get(name, "train") == "train"]

    def train_skeletons(self) -> list:
        """Skeletons that perform at least one training clip, in name order."""
        names = sorted({clip.skeleton_id for clip in self.train_clips()})
        return [self.skeletons[name] for name in names]

    def clips_of(self, skeleton_name: str, split: str = "train") -> list:
        return [clip for name, clip in self.clips.items()
                if clip.skeleton_id == skeleton_name and self.splits.get(name, "train") == split]


def sample_window(clip: MotionClip, length: int, rng: np.random.Generator) -> MotionClip:
    """Random contiguous window; the whole clip when it is not longer than `length`."""
    if clip.length <= length:
        return clip
    start = int(rng.integers(0, clip.length - length + 1))
    return clip.window(start, length)


def extract_clips(clip: MotionClip, length: int = 120) -> list:
    """
    Non-overlapping windows of `length` frames. Leftover frames get one more
    window aligned to the end of the sequence, overlapping the previous one.
    """
    if clip.length < length:
        raise SequenceLengthError(f"clip {clip.name!r} has {clip.length} frames, need at least {length}")
    starts = list(range(0, clip.length - length + 1, length))
    if starts[-1] + length < clip.length:
        starts.append(clip.length - length)
    return [clip.window(start, length, name=f"{clip.name}_{index:03d}") for index, start in enumerate(starts)]
