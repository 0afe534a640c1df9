"""
Canonical 22-joint set, its template T-pose, and name tables mapping other
rigs onto it
"""
import numpy as np

from backend.kinematics import Skeleton

# name -> (parent, template T-pose position in cm). y up, facing +z, left side at -x.
CANONICAL_JOINTS = {
    "Root": (None, (0.0, 95.0, 0.0)),
    "Spine": ("Root", (0.0, 105.0, 0.0)),
    "Spine1": ("Spine", (0.0, 115.0, 0.0)),
    "Spine2": ("Spine1", (0.0, 127.0, 0.0)),
    "Neck": ("Spine2", (0.0, 145.0, 0.0)),
    "Head": ("Neck", (0.0, 157.0, 0.0)),
    "LeftUpLeg": ("Root", (-9.0, 90.0, 0.0)),
    "LeftLeg": ("LeftUpLeg", (-9.0, 50.0, 0.0)),
    "LeftFoot": ("LeftLeg", (-9.0, 8.0, 0.0)),
    "LeftToeBase": ("LeftFoot", (-9.0, 0.0, 12.0)),
    "RightUpLeg": ("Root", (9.0, 90.0, 0.0)),
    "RightLeg": ("RightUpLeg", (9.0, 50.0, 0.0)),
    "RightFoot": ("RightLeg", (9.0, 8.0, 0.0)),
    "RightToeBase": ("RightFoot", (9.0, 0.0, 12.0)),
    "LeftShoulder": ("Spine2", (-4.0, 140.0, 0.0)),
    "LeftArm": ("LeftShoulder", (-17.0, 140.0, 0.0)),
    "LeftForeArm": ("LeftArm", (-45.0, 140.0, 0.0)),
    "LeftHand": ("LeftForeArm", (-70.0, 140.0, 0.0)),
    "RightShoulder": ("Spine2", (4.0, 140.0, 0.0)),
    "RightArm": ("RightShoulder", (17.0, 140.0, 0.0)),
    "RightForeArm": ("RightArm", (45.0, 140.0, 0.0)),
    "RightHand": ("RightForeArm", (70.0, 140.0, 0.0)),
}

CANONICAL_NAMES = tuple(CANONICAL_JOINTS)

END_EFFECTORS = ("LeftHand", "RightHand", "LeftFoot", "LeftToeBase", "RightFoot", "RightToeBase")

# Alternative spellings seen in BVH exports (Mixamo prefixes are stripped first)
JOINT_ALIASES = {
    "Hips": "Root",
    "Hip": "Root",
    "Pelvis": "Root",
    "root": "Root",
    "Chest": "Spine1",
    "Chest2": "Spine2",
    "UpperChest": "Spine2",
    "Spine3": "Spine2",
    "LeftHip": "LeftUpLeg",
    "LeftUpperLeg": "LeftUpLeg",
    "LeftThigh": "LeftUpLeg",
    "LeftKnee": "LeftLeg",
    "LeftLowerLeg": "LeftLeg",
    "LeftShin": "LeftLeg",
    "LeftAnkle": "LeftFoot",
    "LeftToe": "LeftToeBase",
    "LeftToes": "LeftToeBase",
    "RightHip": "RightUpLeg",
    "RightUpperLeg": "RightUpLeg",
    "RightThigh": "RightUpLeg",
    "RightKnee": "RightLeg",
    "RightLowerLeg": "RightLeg",
    "RightShin": "RightLeg",
    "RightAnkle": "RightFoot",
    "RightToe": "RightToeBase",
    "RightToes": "RightToeBase",
    "LeftCollar": "LeftShoulder",
    "LeftClavicle": "LeftShoulder",
    "LeftUpperArm": "LeftArm",
    "LeftElbow": "LeftForeArm",
    "LeftLowerArm": "LeftForeArm",
    "LeftWrist": "LeftHand",
    "RightCollar": "RightShoulder",
    "RightClavicle": "RightShoulder",
    "RightUpperArm": "RightArm",
    "RightElbow": "RightForeArm",
    "RightLowerArm": "RightForeArm",
    "RightWrist": "RightHand",
}

# 17-joint pose-estimate layout -> canonical joints; duplicated sources fill the
# joints the estimator does not produce
POSE17_TO_CANONICAL = {
    "Root": "Hip",
    "Spine": "Spine",
    "Spine1": "Spine",
    "Spine2": "Thorax",
    "Neck": "Neck",
    "Head": "Head",
    "LeftUpLeg": "LHip",
    "LeftLeg": "LKnee",
    "LeftFoot": "LFoot",
    "LeftToeBase": "LFoot",
    "RightUpLeg": "RHip",
    "RightLeg": "RKnee",
    "RightFoot": "RFoot",
    "RightToeBase": "RFoot",
    "LeftShoulder": "LShoulder",
    "LeftArm": "LShoulder",
    "LeftForeArm": "LElbow",
    "LeftHand": "LWrist",
    "RightShoulder": "RShoulder",
    "RightArm": "RShoulder",
    "RightForeArm": "RElbow",
    "RightHand": "RWrist",
}

MIXAMO_PREFIXES = ("mixamorig:", "mixamorig_", "mixamorig1:")


def canonical_name(name: str):
    """Canonical joint name for a rig joint name, or None when it has no counterpart."""
    for prefix in MIXAMO_PREFIXES:
        if name.startswith(prefix):
            name = name[len(prefix):]
            break
    if name in CANONICAL_JOINTS:
        return name
    return JOINT_ALIASES.get(name)


def canonical_parents() -> list:
    return [None if parent is None else CANONICAL_NAMES.index(parent) for parent, _ in CANONICAL_JOINTS.values()]


def canonical_skeleton(name: str = "template", tpose=None) -> Skeleton:
    """The canonical joint tree, with the template T-pose unless `tpose` is given."""
    if tpose is None:
        tpose = np.array([position for _, position in CANONICAL_JOINTS.values()])
    return Skeleton(CANONICAL_NAMES, canonical_parents(), tpose, name=name)


def apply_joint_map(positions, source_names, mapping: dict) -> np.ndarray:
    """
    Reorder (and duplicate) source joints into the canonical order

    Args:
        positions: (T, M, 3) source joint positions
        source_names: the M source joint names
        mapping: canonical joint -> source joint

    Returns:
        (T, 22, 3) positions in canonical order
    """
    positions = np.asarray(positions, dtype=np.float64)
    source_names = list(source_names)
    missing = [joint for joint in CANONICAL_NAMES if joint not in mapping]
    if missing:
        raise KeyError(f"joint map does not cover canonical joints {missing}")
    try:
        index = [source_names.index(mapping[joint]) for joint in CANONICAL_NAMES]
    except ValueError as e:
        raise KeyError(f"joint map references a joint absent from the input: {e}") from None
    return positions[:, index, :]
