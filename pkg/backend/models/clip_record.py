"""
Schemas of the native JSON documents: skeleton files and motion clip files.
"""
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

CLIP_FORMAT_VERSION = 1


class SkeletonRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    joints: list[str] = Field(min_length=2)
    parents: list[int]
    offsets: list[list[float]]  # bone offsets, root row = root T-pose position

    @model_validator(mode="after")
    def check_table(self):
        n = len(self.joints)
        if len(self.parents) != n or len(self.offsets) != n:
            raise ValueError(f"skeleton table sizes differ: {n} joints, {len(self.parents)} parents, "
                             f"{len(self.offsets)} offsets")
        if any(len(row) != 3 for row in self.offsets):
            raise ValueError("every offset needs 3 components")
        return self


class SkeletonDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: Literal[1]
    kind: Literal["skeleton"] = "skeleton"
    skeleton: SkeletonRecord


class ClipRecord(BaseModel):
    """
    One preprocessed clip.

    local: T x N x 3 heading-free root-relative positions (cm)
    global_motion: T x 4 rows (vx, vy, vz cm/frame, dyaw deg/frame)
    origin: root position and heading before the first frame
    rotations: optional T x N x 4 heading-compensated local quaternions
    """

    model_config = ConfigDict(extra="forbid")

    version: Literal[1]
    kind: Literal["clip"] = "clip"
    skeleton: SkeletonRecord
    fps: float = Field(gt=0)
    local: list[list[list[float]]] = Field(min_length=2)
    global_motion: list[list[float]] = Field(min_length=2)
    origin: list[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0], min_length=4, max_length=4)
    rotations: Optional[list[list[list[float]]]] = None
    name: str = ""

    @model_validator(mode="after")
    def check_lengths(self):
        if len(self.local) != len(self.global_motion):
            raise ValueError(f"local has {len(self.local)} frames, global_motion has {len(self.global_motion)}")
        if self.rotations is not None and len(self.rotations) != len(self.local):
            raise ValueError(f"rotations have {len(self.rotations)} frames, local has {len(self.local)}")
        return self


class PositionsRecord(BaseModel):
    """Position-only input, e.g. externally estimated 3D poses."""

    model_config = ConfigDict(extra="ignore")

    joints: list[str] = Field(min_length=2)
    fps: float = Field(30.0, gt=0)
    positions: list[list[list[float]]] = Field(min_length=2)


class JointMapRecord(BaseModel):
    """Target joint -> source joint; duplicated sources are allowed."""

    model_config = ConfigDict(extra="forbid")

    mapping: dict[str, str]
