"""
Parser for the BVH motion-capture subset: HIERARCHY with ROOT/JOINT/End Site
blocks, 3 or 6 channels per joint in any Euler order, and a MOTION block.

Joint positions come from the file's own forward kinematics:

    W_j = W_parent(j) @ R_j            R_j = intrinsic Euler rotation in channel order
    p_j = p_parent(j) + W_parent(j) @ (offset_j + translation_j)

Position channels add to the joint's OFFSET. End Sites carry no motion and
are skipped. Joints without a canonical counterpart are dropped and their
rotations fold into the canonical joints below them.
"""
import logging
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from backend.kinematics import Skeleton, fk_positions
from backend.quat_math import euler_matrix, quat_from_rotmat
from ingestion.joint_aliases import CANONICAL_NAMES, canonical_name, canonical_parents

logger = logging.getLogger(__name__)

ROTATION_CHANNELS = {"Xrotation": "x", "Yrotation": "y", "Zrotation": "z"}
POSITION_CHANNELS = {"Xposition": 0, "Yposition": 1, "Zposition": 2}


class BvhParseError(ValueError):
    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class BvhMotion(NamedTuple):
    skeleton: Skeleton
    positions: np.ndarray                 # (T, N, 3) world joint positions, cm
    fps: float
    rotations: Optional[np.ndarray]       # (T, N, 4) local quaternions on the returned tree


class _Joint(NamedTuple):
    name: str
    parent: int
    offset: tuple
    channels: tuple
    line_number: int


class _Lines:
    """Cursor over non-empty lines that remembers 1-based line numbers."""

    def __init__(self, text: str):
        self.items = [(number, line.split()) for number, line in enumerate(text.splitlines(), start=1)
                      if line.strip()]
        self.index = 0

    @property
    def line_number(self) -> int:
        if self.index < len(self.items):
            return self.items[self.index][0]
        return self.items[-1][0] if self.items else 0

    def remaining(self) -> int:
        return len(self.items) - self.index

    def next(self) -> list:
        if self.index >= len(self.items):
            raise BvhParseError("unexpected end of file", self.line_number)
        tokens = self.items[self.index][1]
        self.index += 1
        return tokens

    def expect(self, keyword: str) -> list:
        number = self.line_number
        tokens = self.next()
        if tokens[0] != keyword:
            raise BvhParseError(f"expected {keyword!r}, found {tokens[0]!r}", number)
        return tokens


def _floats(tokens, count: int, line_number: int) -> list:
    if len(tokens) != count:
        raise BvhParseError(f"expected {count} numbers, found {len(tokens)}", line_number)
    try:
        values = [float(token) for token in tokens]
    except ValueError:
        raise BvhParseError(f"invalid number in {' '.join(tokens)!r}", line_number) from None
    if not np.all(np.isfinite(values)):
        raise BvhParseError("non-finite value", line_number)
    return values


def _parse_joint(lines: _Lines, name: str, parent: int, joints: list, header_line: int) -> None:
    lines.expect("{")
    number = lines.line_number
    tokens = lines.expect("OFFSET")
    offset = tuple(_floats(tokens[1:], 3, number))

    number = lines.line_number
    tokens = lines.expect("CHANNELS")
    try:
        count = int(tokens[1])
    except (IndexError, ValueError):
        raise BvhParseError("CHANNELS needs a channel count", number) from None
    channels = tuple(tokens[2:])
    if count not in (3, 6) or len(channels) != count:
        raise BvhParseError(f"expected 3 or 6 channels, found count {count} with {len(channels)} names", number)
    for channel in channels:
        if channel not in ROTATION_CHANNELS and channel not in POSITION_CHANNELS:
            raise BvhParseError(f"unknown channel {channel!r}", number)
    rotations = [channel for channel in channels if channel in ROTATION_CHANNELS]
    if len(rotations) != 3 or len(set(rotations)) != 3:
        raise BvhParseError("a joint needs exactly three distinct rotation channels", number)

    index = len(joints)
    joints.append(_Joint(name, parent, offset, channels, header_line))

    while True:
        number = lines.line_number
        tokens = lines.next()
        keyword = tokens[0]
        if keyword == "}":
            return
        if keyword == "JOINT":
            if len(tokens) < 2:
                raise BvhParseError("JOINT without a name", number)
            _parse_joint(lines, " ".join(tokens[1:]), index, joints, number)
        elif keyword == "End":
            _skip_end_site(lines)
        else:
            raise BvhParseError(f"unexpected {keyword!r} inside joint {name!r}", number)


def _skip_end_site(lines: _Lines) -> None:
    lines.expect("{")
    number = lines.line_number
    tokens = lines.expect("OFFSET")
    _floats(tokens[1:], 3, number)
    lines.expect("}")


def _parse_motion(lines: _Lines, n_channels: int) -> tuple:
    lines.expect("MOTION")
    number = lines.line_number
    tokens = lines.expect("Frames:")
    try:
        n_frames = int(tokens[1])
    except (IndexError, ValueError):
        raise BvhParseError("invalid frame count", number) from None
    if n_frames < 1:
        raise BvhParseError(f"frame count must be positive, got {n_frames}", number)

    number = lines.line_number
    tokens = lines.next()
    if tokens[:2] != ["Frame", "Time:"]:
        raise BvhParseError("expected 'Frame Time:'", number)
    frame_time = _floats(tokens[2:], 1, number)[0]
    if frame_time <= 0:
        raise BvhParseError(f"frame time must be positive, got {frame_time}", number)

    if lines.remaining() < n_frames:
        raise BvhParseError(f"header declares {n_frames} frames but only {lines.remaining()} rows follow",
                            lines.line_number)
    data = np.empty((n_frames, n_channels))
    for frame in range(n_frames):
        number = lines.line_number
        data[frame] = _floats(lines.next(), n_channels, number)
    if lines.remaining():
        logger.warning(f"ignoring {lines.remaining()} trailing lines after frame data")
    return data, 1.0 / frame_time


def _forward_kinematics(joints: list, data: np.ndarray) -> tuple:
    """World rotations (T, J, 3, 3) and positions (T, J, 3) of every BVH joint."""
    frames = data.shape[0]
    world_rot = np.empty((frames, len(joints), 3, 3))
    world_pos = np.empty((frames, len(joints), 3))
    column = 0
    for index, joint in enumerate(joints):
        order, angle_columns = "", []
        translation = np.zeros((frames, 3))
        for channel in joint.channels:
            if channel in ROTATION_CHANNELS:
                order += ROTATION_CHANNELS[channel]
                angle_columns.append(column)
            else:
                translation[:, POSITION_CHANNELS[channel]] = data[:, column]
            column += 1
        local = euler_matrix(order, data[:, angle_columns])
        offset = np.asarray(joint.offset) + translation
        if joint.parent < 0:
            world_rot[:, index] = local
            world_pos[:, index] = offset
        else:
            parent_rot = world_rot[:, joint.parent]
            world_rot[:, index] = parent_rot @ local
            world_pos[:, index] = world_pos[:, joint.parent] + np.einsum("tab,tb->ta", parent_rot, offset)
    return world_rot, world_pos


def _rest_positions(joints: list) -> np.ndarray:
    rest = np.zeros((len(joints), 3))
    for index, joint in enumerate(joints):
        base = rest[joint.parent] if joint.parent >= 0 else np.zeros(3)
        rest[index] = base + np.asarray(joint.offset)
    return rest


def _local_quats(world_rot: np.ndarray, joint_parent_rot: list, tree_parents: list) -> np.ndarray:
    """
    Quaternions on a joint tree whose per-joint world rotation is the BVH world
    rotation of the joint's BVH parent (root: its own).
    """
    frames = world_rot.shape[0]
    bone_world = np.stack([world_rot[:, source] for source in joint_parent_rot], axis=1)
    local = np.empty_like(bone_world)
    for n, parent in enumerate(tree_parents):
        if parent is None:
            local[:, n] = bone_world[:, n]
        else:
            local[:, n] = np.swapaxes(bone_world[:, parent], -1, -2) @ bone_world[:, n]
    return quat_from_rotmat(local).reshape(frames, len(tree_parents), 4)


def _fold_dropped_joints(positions: np.ndarray, rotations: np.ndarray, skeleton: Skeleton,
                         tolerance: float = 1e-6) -> np.ndarray:
    """
    Positions of the canonical joints as the folded rotations place them.

    A dropped joint's rotation is carried by the bone of its canonical child,
    which spans the dropped joint's offset too. When such a joint sits away
    from its parent and rotates, the file's child position cannot be reached
    with a fixed bone length; the canonical positions then follow the
    rotations so both stay consistent.
    """
    rebuilt = positions[:, :1] + fk_positions(rotations, skeleton.offsets, skeleton.parent_array)
    deviation = float(np.max(np.abs(rebuilt - positions)))
    if deviation <= tolerance:
        return positions
    logger.warning(f"dropped BVH joints move canonical joints by up to {deviation:.3f} cm; "
                   f"positions follow the folded rotations")
    return rebuilt


def _canonical_selection(joints: list) -> list:
    """Index of the BVH joint used for each canonical joint."""
    chosen: dict = {}
    for index, joint in enumerate(joints):
        if joint.name in CANONICAL_NAMES and joint.name not in chosen:
            chosen[joint.name] = index
    for index, joint in enumerate(joints):
        target = canonical_name(joint.name)
        if target is not None and target not in chosen:
            chosen[target] = index
    missing = [name for name in CANONICAL_NAMES if name not in chosen]
    if missing:
        raise BvhParseError(f"no joints map to canonical joints {missing}", joints[0].line_number)
    dropped = len(joints) - len(CANONICAL_NAMES)
    if dropped:
        logger.info(f"dropping {dropped} BVH joints without a canonical counterpart")
    return [chosen[name] for name in CANONICAL_NAMES]


def parse_bvh(text: str, canonical: bool = True, name: str = "bvh") -> BvhMotion:
    """
    Parse BVH text

    Args:
        text: file contents
        canonical: map joints onto the canonical 22-joint set by name and drop
            the rest; False keeps the file's own joint tree
        name: skeleton name

    Returns:
        BvhMotion with world positions, fps and per-joint quaternions

    Raises:
        BvhParseError: with the offending line number
    """
    lines = _Lines(text)
    try:
        lines.expect("HIERARCHY")
        number = lines.line_number
        tokens = lines.expect("ROOT")
        if len(tokens) < 2:
            raise BvhParseError("ROOT without a name", number)
        joints: list = []
        _parse_joint(lines, " ".join(tokens[1:]), -1, joints, number)
        data, fps = _parse_motion(lines, sum(len(joint.channels) for joint in joints))
    except BvhParseError:
        raise
    except (ValueError, IndexError, KeyError, RecursionError) as e:
        raise BvhParseError(str(e), lines.line_number) from e

    world_rot, world_pos = _forward_kinematics(joints, data)
    rest = _rest_positions(joints)

    try:
        if canonical:
            selection = _canonical_selection(joints)
            tree_parents = canonical_parents()
            skeleton = Skeleton(CANONICAL_NAMES, tree_parents, rest[selection], name=name)
            positions = world_pos[:, selection]
            source_parent = [selection[0]] + [max(joints[s].parent, 0) for s in selection[1:]]
        else:
            tree_parents = [None if joint.parent < 0 else joint.parent for joint in joints]
            skeleton = Skeleton(tuple(joint.name for joint in joints), tree_parents, rest, name=name)
            positions = world_pos
            source_parent = [joint.parent if joint.parent >= 0 else index for index, joint in enumerate(joints)]
    except BvhParseError:
        raise
    except ValueError as e:
        raise BvhParseError(str(e), joints[0].line_number) from e

    rotations = _local_quats(world_rot, source_parent, tree_parents)
    if canonical:
        positions = _fold_dropped_joints(positions, rotations, skeleton)
    logger.info(f"parsed BVH {name!r}: {skeleton.n_joints} joints, {positions.shape[0]} frames at {fps:g} fps")
    return BvhMotion(skeleton, positions, fps, rotations)


def parse_bvh_file(path, canonical: bool = True) -> BvhMotion:
    path = Path(path)
    return parse_bvh(path.read_text(), canonical=canonical, name=path.stem)
