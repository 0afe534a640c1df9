"""
Recurrent retargetting network with a forward-kinematics output layer.

Online synthesis, per frame t:

    h_enc_t = RNN_enc(x_t, h_enc_{t-1})
    h_dec_t = RNN_dec([x̂_{t-1}, h_enc_t, s̄_B], h_dec_{t-1})
    q̂_t     = per-joint normalise(W_p h_dec_t)
    p̂_t     = FK(q̂_t, s̄_B)
    v̂_t     = W_v h_dec_t
    x̂_t     = [p̂_t, v̂_t]

All quantities are in normalised feature units (see backend.networks.features).
The decoder consumes its own previous output, never the ground truth.
"""
import logging
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

from backend import autodiff as ad
from backend.autodiff import Tensor
from backend.config import ModelSettings
from backend.kinematics import ArityMismatchError, SequenceLengthError, Skeleton, fk_gradient, fk_positions
from backend.layers import GruStack, Linear, Module
from backend.motion_clip import MotionClip
from backend.networks.features import clip_features, feature_size, features_to_motion, seed_frame
from backend.quat_math import quat_normalize, quat_normalize_grad

logger = logging.getLogger(__name__)


class ConditionBatch:
    """
    Per-sample condition skeletons of one batch. All skeletons must share one
    joint tree; bone offsets may differ.
    """

    def __init__(self, skeletons: Sequence[Skeleton], dtype=np.float32):
        if not skeletons:
            raise ValueError("a condition batch needs at least one skeleton")
        first = skeletons[0]
        for skeleton in skeletons[1:]:
            if skeleton.n_joints != first.n_joints:
                raise ArityMismatchError(
                    f"joint/rotation arity mismatch: skeleton {skeleton.name!r} has {skeleton.n_joints} joints, "
                    f"{first.name!r} has {first.n_joints}"
                )
            if not np.array_equal(skeleton.parent_array, first.parent_array):
                raise ValueError(f"skeletons {first.name!r} and {skeleton.name!r} have different joint trees")
        self.skeletons = tuple(skeletons)
        self.parents = first.parent_array
        self.n_joints = first.n_joints
        self.heights = np.array([s.height for s in skeletons])
        self.offsets = np.stack([s.offsets / s.height for s in skeletons])
        self.features = np.stack([s.features() for s in skeletons]).astype(dtype)
        self.seed = np.stack([seed_frame(s) for s in skeletons]).astype(dtype)

    @property
    def batch_size(self) -> int:
        return len(self.skeletons)


class StepOutput(NamedTuple):
    frame: Tensor               # (B, 3N+4) x̂_t
    pose: Tensor                # (B, N, 3) p̂_t
    velocity: Tensor            # (B, 4) v̂_t
    quats: Optional[Tensor]     # (B, N, 4) q̂_t, None for position-head models
    state: list                 # decoder hidden state per layer


class SynthesisOutput(NamedTuple):
    features: Tensor            # (B, T, 3N+4)
    local: Tensor               # (B, T, N, 3)
    velocity: Tensor            # (B, T, 4)
    quats: Optional[Tensor]     # (B, T, N, 4)
    encoder_state: list
    decoder_state: list


def normalize_quats(raw: Tensor) -> Tensor:
    return ad.custom_op(quat_normalize, lambda grad, v: (quat_normalize_grad(v, grad),), raw)


def fk_layer(quats: Tensor, offsets: np.ndarray, parents: np.ndarray, mode: str = "hierarchical") -> Tensor:
    """Differentiable FK with fixed bone offsets; gradients flow to the quaternions only."""
    return ad.custom_op(
        lambda q: fk_positions(q, offsets, parents, mode),
        lambda grad, q: (fk_gradient(q, offsets, parents, grad, mode),),
        quats,
    )


class SequenceModel(Module):
    """Encoder/decoder loop shared by the FK network and the position-head baselines."""

    kind = "base"

    def __init__(self, n_joints: int, settings: Optional[ModelSettings] = None):
        super().__init__()
        if n_joints < 2:
            raise ValueError(f"need at least 2 joints, got {n_joints}")
        self.settings = settings or ModelSettings(kind=self.kind)
        self.n_joints = n_joints
        self.dtype = np.dtype(self.settings.dtype)
        self.input_size = feature_size(n_joints)

    def encoder_initial_state(self, batch: int) -> list:
        raise NotImplementedError

    def decoder_initial_state(self, batch: int) -> list:
        raise NotImplementedError

    def encode_step(self, x_t: Tensor, state: list) -> tuple:
        raise NotImplementedError

    def decode_step(self, x_prev: Tensor, h_enc: Tensor, condition: ConditionBatch, state: list) -> StepOutput:
        raise NotImplementedError

    def _check_input(self, x_t: Tensor) -> None:
        if x_t.shape[-1] != self.input_size:
            raise ArityMismatchError(
                f"joint/rotation arity mismatch: frame has {x_t.shape[-1]} values, "
                f"model expects 3N+4 = {self.input_size}"
            )

    def _check_condition(self, condition: ConditionBatch) -> None:
        if condition.n_joints != self.n_joints:
            raise ArityMismatchError(
                f"joint/rotation arity mismatch: condition skeleton has {condition.n_joints} joints, "
                f"model has {self.n_joints}"
            )

    def synthesize(self, features, condition: ConditionBatch) -> SynthesisOutput:
        """
        Retarget a batch of feature sequences onto the condition skeletons

        Args:
            features: (B, T, 3N+4) or (T, 3N+4) normalised input motion
            condition: target skeletons, one per batch row

        Returns:
            SynthesisOutput with per-frame outputs stacked along axis 1
        """
        if not isinstance(features, Tensor):
            features = Tensor(np.asarray(features, dtype=self.dtype))
        if features.ndim == 2:
            features = features.reshape(1, *features.shape)
        batch, frames = features.shape[:2]
        self._check_input(features)
        self._check_condition(condition)
        if batch != condition.batch_size:
            raise ValueError(f"batch has {batch} sequences but {condition.batch_size} condition skeletons")
        if frames < 2:
            raise SequenceLengthError(f"synthesis needs T >= 2, got {frames}")

        enc_state = self.encoder_initial_state(batch)
        dec_state = self.decoder_initial_state(batch)
        prev = Tensor(condition.seed)
        steps = []
        for t in range(frames):
            h_enc, enc_state = self.encode_step(features[:, t, :], enc_state)
            step = self.decode_step(prev, h_enc, condition, dec_state)
            dec_state = step.state
            prev = step.frame
            steps.append(step)

        quats = None if steps[0].quats is None else ad.stack([s.quats for s in steps], axis=1)
        return SynthesisOutput(
            features=ad.stack([s.frame for s in steps], axis=1),
            local=ad.stack([s.pose for s in steps], axis=1),
            velocity=ad.stack([s.velocity for s in steps], axis=1),
            quats=quats,
            encoder_state=enc_state,
            decoder_state=dec_state,
        )

    def stream(self, frames: Iterable, target: Skeleton) -> Iterator[np.ndarray]:
        """
        Online retargetting: yields each output frame (normalised, 3N+4) before
        the next input frame is consumed.
        """
        condition = ConditionBatch([target], self.dtype)
        enc_state = self.encoder_initial_state(1)
        dec_state = self.decoder_initial_state(1)
        prev = Tensor(condition.seed)
        for frame in frames:
            x_t = Tensor(np.asarray(frame, dtype=self.dtype).reshape(1, -1))
            self._check_input(x_t)
            h_enc, enc_state = self.encode_step(x_t, enc_state)
            step = self.decode_step(prev, h_enc, condition, dec_state)
            dec_state, prev = step.state, step.frame
            yield step.frame.data[0].copy()


class RetargetModel(SequenceModel):
    """
    Encoder GRU stack, decoder GRU stack, quaternion head W_p (hidden -> 4N)
    and velocity head W_v (hidden -> 4).
    """

    kind = "fk"

    def __init__(self, n_joints: int, settings: Optional[ModelSettings] = None, seed: int = 0,
                 rng: Optional[np.random.Generator] = None):
        super().__init__(n_joints, settings)
        rng = rng if rng is not None else np.random.default_rng(seed)
        s = self.settings
        self.composition = s.composition
        self.encoder = self.add_child(
            "encoder", GruStack(self.input_size, s.hidden_size, s.num_layers, rng, self.dtype, s.gru_variant)
        )
        decoder_input = self.input_size + s.hidden_size + 3 * (n_joints - 1)
        self.decoder = self.add_child(
            "decoder", GruStack(decoder_input, s.hidden_size, s.num_layers, rng, self.dtype, s.gru_variant)
        )
        self.quat_head = self.add_child("quat_head", Linear(s.hidden_size, 4 * n_joints, rng, self.dtype))
        self.velocity_head = self.add_child("velocity_head", Linear(s.hidden_size, 4, rng, self.dtype))
        # near-identity start: zero weights, bias (1, 0, 0, 0) per joint
        self.quat_head.weight.data[...] = 0.0
        self.quat_head.bias.data[...] = np.tile(np.array([1.0, 0.0, 0.0, 0.0], dtype=self.dtype), n_joints)

    def encoder_initial_state(self, batch: int) -> list:
        return self.encoder.initial_state(batch)

    def decoder_initial_state(self, batch: int) -> list:
        return self.decoder.initial_state(batch)

    def encode_step(self, x_t: Tensor, state: list) -> tuple:
        self._check_input(x_t)
        return self.encoder(x_t, state)

    def decode_step(self, x_prev: Tensor, h_enc: Tensor, condition: ConditionBatch, state: list) -> StepOutput:
        batch = h_enc.shape[0]
        inputs = ad.concat([x_prev, h_enc, Tensor(condition.features)], axis=-1)
        out, state = self.decoder(inputs, state)
        raw = self.quat_head(out).reshape(batch, self.n_joints, 4)
        quats = normalize_quats(raw)
        pose = fk_layer(quats, condition.offsets, condition.parents, self.composition)
        velocity = self.velocity_head(out)
        frame = ad.concat([pose.reshape(batch, 3 * self.n_joints), velocity], axis=-1)
        return StepOutput(frame, pose, velocity, quats, state)


def encode_step(model: SequenceModel, x_t, state: list) -> tuple:
    """One encoder step; returns (top-layer hidden state, new per-layer state)."""
    x_t = x_t if isinstance(x_t, Tensor) else Tensor(np.asarray(x_t, dtype=model.dtype))
    if x_t.ndim == 1:
        x_t = x_t.reshape(1, -1)
    return model.encode_step(x_t, state)


def decode_step(model: SequenceModel, x_prev, h_enc: Tensor, condition: ConditionBatch, state: list) -> StepOutput:
    x_prev = x_prev if isinstance(x_prev, Tensor) else Tensor(np.asarray(x_prev, dtype=model.dtype))
    if x_prev.ndim == 1:
        x_prev = x_prev.reshape(1, -1)
    return model.decode_step(x_prev, h_enc, condition, state)


def synthesize(model: SequenceModel, features, condition: ConditionBatch) -> SynthesisOutput:
    return model.synthesize(features, condition)


def retarget_clip(model: SequenceModel, clip: MotionClip, target: Skeleton, name: Optional[str] = None) -> MotionClip:
    """
    Retarget a whole clip onto `target` and return it in centimeters.
    The origin is scaled by the height ratio so trajectories start where the
    target character would stand.
    """
    condition = ConditionBatch([target], model.dtype)
    output = model.synthesize(clip_features(clip, model.dtype)[None], condition)
    local, global_motion = features_to_motion(output.features.data[0], target.height)
    ratio = target.height / clip.skeleton.height
    origin = clip.origin * np.array([ratio, ratio, ratio, 1.0])
    rotations = None if output.quats is None else output.quats.data[0].astype(np.float64)
    logger.debug(f"retargeted {clip.name!r} ({clip.length} frames) onto {target.name!r}")
    return MotionClip(
        skeleton=target,
        fps=clip.fps,
        local=local,
        global_motion=global_motion,
        origin=origin,
        rotations=rotations,
        name=name or f"{clip.name}->{target.name}",
    )

