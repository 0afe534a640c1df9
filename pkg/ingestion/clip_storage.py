"""
Native JSON documents for skeletons and clips, and dataset directories:

    DIR/manifest.json          characters, motions, splits, test pairs
    DIR/skeletons/<name>.json
    DIR/clips/<name>.json
"""
import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

from backend.kinematics import Skeleton
from backend.models.clip_record import (CLIP_FORMAT_VERSION, ClipRecord, JointMapRecord, PositionsRecord,
                                        SkeletonDocument, SkeletonRecord)
from backend.motion_clip import Dataset, MotionClip, RetargetPair

logger = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1


class ClipFormatError(ValueError):
    pass


def _load_json(text: str, what: str) -> dict:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ClipFormatError(f"{what} is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ClipFormatError(f"{what} must be a JSON object")
    return document


def _check_version(document: dict, what: str, expected: int = CLIP_FORMAT_VERSION) -> None:
    version = document.get("version")
    if version != expected:
        raise ClipFormatError(f"unsupported {what} format version {version!r}, expected {expected}")


def skeleton_to_record(skeleton: Skeleton) -> SkeletonRecord:
    offsets = skeleton.offsets.copy()
    offsets[0] = skeleton.tpose[0]
    return SkeletonRecord(
        name=skeleton.name,
        joints=list(skeleton.names),
        parents=[-1 if p is None else p for p in skeleton.parents],
        offsets=offsets.tolist(),
    )


def record_to_skeleton(record: SkeletonRecord) -> Skeleton:
    offsets = np.asarray(record.offsets, dtype=np.float64)
    tpose = np.zeros_like(offsets)
    tpose[0] = offsets[0]
    for n in range(1, len(offsets)):
        parent = record.parents[n]
        if not 0 <= parent < n:
            raise ClipFormatError(f"skeleton {record.name!r}: joint {record.joints[n]!r} has parent {parent}")
        tpose[n] = tpose[parent] + offsets[n]
    try:
        return Skeleton(tuple(record.joints), record.parents, tpose, name=record.name)
    except ValueError as e:
        raise ClipFormatError(str(e)) from e


def clip_to_record(clip: MotionClip) -> ClipRecord:
    return ClipRecord(
        version=CLIP_FORMAT_VERSION,
        skeleton=skeleton_to_record(clip.skeleton),
        fps=clip.fps,
        local=clip.local.tolist(),
        global_motion=clip.global_motion.tolist(),
        origin=clip.origin.tolist(),
        rotations=None if clip.rotations is None else clip.rotations.tolist(),
        name=clip.name,
    )


def write_clip_json(clip: MotionClip) -> str:
    """Serialize a clip with its skeleton table; floats keep full precision."""
    return json.dumps(clip_to_record(clip).model_dump(mode="json"))


def parse_clip_json(text: str) -> MotionClip:
    """
    Parse a clip document

    Raises:
        ClipFormatError: on a version mismatch or schema violation
    """
    document = _load_json(text, "clip document")
    _check_version(document, "clip")
    try:
        record = ClipRecord.model_validate(document)
    except ValidationError as e:
        raise ClipFormatError(f"invalid clip document: {e}") from e
    skeleton = record_to_skeleton(record.skeleton)
    try:
        return MotionClip(
            skeleton=skeleton,
            fps=record.fps,
            local=np.asarray(record.local, dtype=np.float64),
            global_motion=np.asarray(record.global_motion, dtype=np.float64),
            origin=np.asarray(record.origin, dtype=np.float64),
            rotations=None if record.rotations is None else np.asarray(record.rotations, dtype=np.float64),
            name=record.name,
        )
    except ValueError as e:
        raise ClipFormatError(f"invalid clip document: {e}") from e


def write_skeleton_json(skeleton: Skeleton) -> str:
    document = SkeletonDocument(version=CLIP_FORMAT_VERSION, skeleton=skeleton_to_record(skeleton))
    return json.dumps(document.model_dump(mode="json"))


def parse_skeleton_json(text: str) -> Skeleton:
    document = _load_json(text, "skeleton document")
    _check_version(document, "skeleton")
    try:
        record = SkeletonDocument.model_validate(document)
    except ValidationError as e:
        raise ClipFormatError(f"invalid skeleton document: {e}") from e
    return record_to_skeleton(record.skeleton)


def save_clip(clip: MotionClip, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(write_clip_json(clip))
    return path


def load_clip(path) -> MotionClip:
    return parse_clip_json(Path(path).read_text())


def save_skeleton(skeleton: Skeleton, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(write_skeleton_json(skeleton))
    return path


def load_skeleton(path) -> Skeleton:
    """Skeleton from a skeleton document, or from the skeleton table of a clip document."""
    text = Path(path).read_text()
    document = _load_json(text, str(path))
    if document.get("kind") == "clip":
        return parse_clip_json(text).skeleton
    return parse_skeleton_json(text)


def load_positions(path) -> PositionsRecord:
    """Position-only input: {"joints": [...], "fps": 30, "positions": [[[x, y, z], ...], ...]}."""
    document = _load_json(Path(path).read_text(), str(path))
    try:
        return PositionsRecord.model_validate(document)
    except ValidationError as e:
        raise ClipFormatError(f"invalid positions document {path}: {e}") from e


def load_joint_map(path) -> dict:
    document = _load_json(Path(path).read_text(), str(path))
    if "mapping" not in document:
        document = {"mapping": document}
    try:
        return JointMapRecord.model_validate(document).mapping
    except ValidationError as e:
        raise ClipFormatError(f"invalid joint map {path}: {e}") from e


def save_dataset(dataset: Dataset, directory) -> Path:
    """
    Write skeletons, clips and the split manifest

    Returns:
        The dataset directory
    """
    directory = Path(directory)
    try:
        for name, skeleton in dataset.skeletons.items():
            save_skeleton(skeleton, directory / "skeletons" / f"{name}.json")
        for name, clip in dataset.clips.items():
            save_clip(clip, directory / "clips" / f"{name}.json")
        manifest = {
            "version": DATASET_FORMAT_VERSION,
            "seed": dataset.seed,
            "characters": dataset.characters,
            "motions": dataset.motions,
            "splits": dataset.splits,
            "test_pairs": [{"source": p.source, "truth": p.truth, "scenario": p.scenario} for p in dataset.pairs],
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
        print(f"Saved {len(dataset.skeletons)} skeletons and {len(dataset.clips)} clips to {directory}")
        return directory
    except Exception as e:
        logger.error(f"Error saving dataset to {directory}: {e}")
        raise


def load_clips_dir(directory) -> dict:
    """name -> MotionClip for every *.json clip in a directory."""
    directory = Path(directory)
    clips = {}
    for path in sorted(directory.glob("*.json")):
        clip = load_clip(path)
        clips[clip.name or path.stem] = clip
    return clips


def load_dataset(directory, manifest: Optional[dict] = None) -> Dataset:
    """
    Read a dataset directory. Without manifest.json every clip is a training
    clip and there are no test pairs.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory {directory} does not exist")
    manifest_path = directory / "manifest.json"
    if manifest is None and manifest_path.exists():
        manifest = _load_json(manifest_path.read_text(), str(manifest_path))
        _check_version(manifest, "dataset manifest", DATASET_FORMAT_VERSION)
    manifest = manifest or {}

    skeletons = {}
    for path in sorted((directory / "skeletons").glob("*.json")):
        skeleton = load_skeleton(path)
        skeletons[skeleton.name] = skeleton
    clips = load_clips_dir(directory / "clips")
    for clip in clips.values():
        skeletons.setdefault(clip.skeleton_id, clip.skeleton)

    pairs = [RetargetPair(p["source"], p["truth"], p["scenario"]) for p in manifest.get("test_pairs", [])]
    dataset = Dataset(
        skeletons=skeletons,
        clips=clips,
        splits=manifest.get("splits", {name: "train" for name in clips}),
        pairs=pairs,
        characters=manifest.get("characters", {}),
        motions=manifest.get("motions", {}),
        seed=manifest.get("seed"),
    )
    logger.info(f"loaded dataset {directory}: {len(skeletons)} skeletons, {len(clips)} clips, {len(pairs)} test pairs")
    return dataset
