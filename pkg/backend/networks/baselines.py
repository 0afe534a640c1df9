"""
Comparison methods: rotation copy, and conditional RNN / MLP networks whose
pose head outputs xyz coordinates directly (no FK layer, so bone lengths are
not guaranteed).
"""
import logging
from typing import Optional

import numpy as np

from backend import autodiff as ad
from backend.autodiff import Tensor
from backend.config import ModelSettings
from backend.kinematics import Skeleton, fk_forward
from backend.layers import FeedForward, GruStack, Linear
from backend.motion_clip import MotionClip
from backend.networks.retarget_model import ConditionBatch, SequenceModel, StepOutput, retarget_clip

logger = logging.getLogger(__name__)


class MissingRotationsError(ValueError):
    pass


def copy_retarget(clip: MotionClip, target: Skeleton, scale_velocity: bool = True,
                  name: Optional[str] = None) -> MotionClip:
    """
    Put the input's per-joint rotations on the target skeleton and copy its global motion

    Args:
        clip: rotation-bearing input clip
        target: skeleton to animate
        scale_velocity: scale xyz root velocity and origin by the height ratio;
            False copies them verbatim

    Raises:
        MissingRotationsError: when the clip has no rotations
    """
    if clip.rotations is None:
        raise MissingRotationsError(
            f"clip {clip.name!r} has no joint rotations; the copy baseline needs BVH or synthetic input"
        )
    local = fk_forward(clip.rotations, target)
    global_motion = clip.global_motion.copy()
    origin = clip.origin.copy()
    if scale_velocity:
        ratio = target.height / clip.skeleton.height
        global_motion[:, :3] *= ratio
        origin[:3] *= ratio
    return MotionClip(
        skeleton=target,
        fps=clip.fps,
        local=local,
        global_motion=global_motion,
        origin=origin,
        rotations=clip.rotations.copy(),
        name=name or f"{clip.name}->{target.name}",
    )


class ConditionalRnnBaseline(SequenceModel):
    """Same encoder/decoder recurrence as RetargetModel, with a direct 3N pose head."""

    kind = "rnn"

    def __init__(self, n_joints: int, settings: Optional[ModelSettings] = None, seed: int = 0,
                 rng: Optional[np.random.Generator] = None):
        super().__init__(n_joints, settings)
        rng = rng if rng is not None else np.random.default_rng(seed)
        s = self.settings
        self.encoder = self.add_child(
            "encoder", GruStack(self.input_size, s.hidden_size, s.num_layers, rng, self.dtype, s.gru_variant)
        )
        decoder_input = self.input_size + s.hidden_size + 3 * (n_joints - 1)
        self.decoder = self.add_child(
            "decoder", GruStack(decoder_input, s.hidden_size, s.num_layers, rng, self.dtype, s.gru_variant)
        )
        self.pose_head = self.add_child("pose_head", Linear(s.hidden_size, 3 * n_joints, rng, self.dtype))
        self.velocity_head = self.add_child("velocity_head", Linear(s.hidden_size, 4, rng, self.dtype))

    def encoder_initial_state(self, batch: int) -> list:
        return self.encoder.initial_state(batch)

    def decoder_initial_state(self, batch: int) -> list:
        return self.decoder.initial_state(batch)

    def encode_step(self, x_t: Tensor, state: list) -> tuple:
        self._check_input(x_t)
        return self.encoder(x_t, state)

    def decode_step(self, x_prev: Tensor, h_enc: Tensor, condition: ConditionBatch, state: list) -> StepOutput:
        batch = h_enc.shape[0]
        out, state = self.decoder(ad.concat([x_prev, h_enc, Tensor(condition.features)], axis=-1), state)
        flat = self.pose_head(out)
        velocity = self.velocity_head(out)
        frame = ad.concat([flat, velocity], axis=-1)
        return StepOutput(frame, flat.reshape(batch, self.n_joints, 3), velocity, None, state)


class ConditionalMlpBaseline(SequenceModel):
    """
    Per-frame feedforward encoder and decoder (2 layers of width mlp_width);
    no recurrence, so neither hidden state nor previous output is carried.
    """

    kind = "mlp"

    def __init__(self, n_joints: int, settings: Optional[ModelSettings] = None, seed: int = 0,
                 rng: Optional[np.random.Generator] = None):
        super().__init__(n_joints, settings)
        rng = rng if rng is not None else np.random.default_rng(seed)
        width = self.settings.mlp_width
        self.encoder = self.add_child("encoder", FeedForward(self.input_size, width, 2, rng, self.dtype))
        self.decoder = self.add_child("decoder", FeedForward(width + 3 * (n_joints - 1), width, 2, rng, self.dtype))
        self.pose_head = self.add_child("pose_head", Linear(width, 3 * n_joints, rng, self.dtype))
        self.velocity_head = self.add_child("velocity_head", Linear(width, 4, rng, self.dtype))

    def encoder_initial_state(self, batch: int) -> list:
        return []

    def decoder_initial_state(self, batch: int) -> list:
        return []

    def encode_step(self, x_t: Tensor, state: list) -> tuple:
        self._check_input(x_t)
        return self.encoder(x_t), state

    def decode_step(self, x_prev: Tensor, h_enc: Tensor, condition: ConditionBatch, state: list) -> StepOutput:
        batch = h_enc.shape[0]
        out = self.decoder(ad.concat([h_enc, Tensor(condition.features)], axis=-1))
        flat = self.pose_head(out)
        velocity = self.velocity_head(out)
        frame = ad.concat([flat, velocity], axis=-1)
        return StepOutput(frame, flat.reshape(batch, self.n_joints, 3), velocity, None, state)


def conditional_rnn_baseline(model: ConditionalRnnBaseline, clip: MotionClip, target: Skeleton) -> MotionClip:
    return retarget_clip(model, clip, target)


def conditional_mlp_baseline(model: ConditionalMlpBaseline, clip: MotionClip, target: Skeleton) -> MotionClip:
    return retarget_clip(model, clip, target)
