from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointManifest(BaseModel):
    """manifest.json of a checkpoint directory."""

    model_config = ConfigDict(extra="forbid")

    version: Literal[1]
    model_kind: Literal["fk", "rnn", "mlp"]
    n_joints: int = Field(ge=2)
    joint_names: list[str]
    composition: Literal["hierarchical", "world"] = "hierarchical"
    hidden_size: int
    num_layers: int
    mlp_width: int = 512
    gru_variant: Literal["reset_before", "reset_after"] = "reset_before"
    dtype: Literal["float32", "float64"] = "float32"
    normalization: str = "positions and xyz velocities divided by character height; yaw rate in radians"
    step: int = 0
    mode: Optional[str] = None
    seed: Optional[int] = None
    has_discriminator: bool = False
    has_optimizer: bool = False
    parameter_shapes: dict[str, list[int]] = Field(default_factory=dict)
    rng_state: Optional[dict] = None
