"""
Sequence discriminator: a 5-layer 1-D convolutional network over
[pose deltas, velocities, skeleton features] that scores realism per clip.
"""
from typing import Optional

import numpy as np

from backend import autodiff as ad
from backend.autodiff import Tensor
from backend.kinematics import SequenceLengthError
from backend.layers import Conv1d, InstanceNorm1d, Module
from backend.networks.retarget_model import ConditionBatch

KERNEL = 4
WIDTHS = (64, 128, 256, 256, 1)
LEAK = 0.2
KEEP_PROB = 0.7


def discriminator_channels(n_joints: int) -> int:
    return 3 * n_joints + 4 + 3 * (n_joints - 1)


def min_sequence_frames() -> int:
    """Shortest clip, in frames, that survives the strided layers and the final valid convolution."""
    length = KERNEL
    for _ in WIDTHS[:-1]:
        length = 2 * length - 1
    return length + 1


MIN_FRAMES = min_sequence_frames()


class Discriminator(Module):
    """
    Layers 1-4: stride 2, "same" padding, leaky ReLU, dropout; layers 2-4 are
    instance-normalised. Layer 5: "valid" convolution, linear. Per-position
    logits are averaged over time before the sigmoid.
    """

    def __init__(self, n_joints: int, seed: int = 0, rng: Optional[np.random.Generator] = None,
                 dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.n_joints = n_joints
        self.dtype = np.dtype(dtype)
        self.in_channels = discriminator_channels(n_joints)
        self.convs = []
        self.norms = {}
        channels = self.in_channels
        for index, width in enumerate(WIDTHS):
            last = index == len(WIDTHS) - 1
            conv = Conv1d(channels, width, KERNEL, stride=1 if last else 2, padding="valid" if last else "same",
                          rng=rng, dtype=self.dtype, init_scale=0.1 if last else 1.0)
            self.convs.append(self.add_child(f"conv{index + 1}", conv))
            if 1 <= index <= 3:
                self.norms[index] = self.add_child(f"norm{index + 1}", InstanceNorm1d(width, self.dtype))
            channels = width

    def logits(self, inputs: Tensor, rng: Optional[np.random.Generator] = None, training: bool = False) -> Tensor:
        """Mean per-position logit for (B, C, L) inputs."""
        x = inputs
        for index, conv in enumerate(self.convs):
            x = conv(x)
            if index == len(self.convs) - 1:
                break
            if index in self.norms:
                x = self.norms[index](x)
            x = ad.leaky_relu(x, LEAK)
            if training:
                x = ad.dropout(x, KEEP_PROB, rng, training=True)
        return x.mean(axis=(1, 2))

    def __call__(self, inputs: Tensor, rng: Optional[np.random.Generator] = None, training: bool = False) -> Tensor:
        return ad.sigmoid(self.logits(inputs, rng, training))


def discriminator_inputs(local, velocity, condition: ConditionBatch) -> Tensor:
    """
    Assemble (B, C, T-1) inputs: local pose differences p_{2:T} - p_{1:T-1},
    the velocities v_{2:T} that arrive with them and the condition features
    tiled along time.

    Args:
        local: (B, T, N, 3) normalised local poses (Tensor or array)
        velocity: (B, T, 4) normalised global motion
    """
    local = local if isinstance(local, Tensor) else Tensor(np.asarray(local))
    velocity = velocity if isinstance(velocity, Tensor) else Tensor(np.asarray(velocity, dtype=local.dtype))
    batch, frames = local.shape[:2]
    if frames < 2:
        raise SequenceLengthError(f"discriminator needs T >= 2, got {frames}")
    flat = local.reshape(batch, frames, -1)
    deltas = flat[:, 1:, :] - flat[:, :-1, :]
    tiled = np.broadcast_to(condition.features[:, None, :], (batch, frames - 1, condition.features.shape[-1]))
    stacked = ad.concat([deltas, velocity[:, 1:, :], Tensor(np.array(tiled, dtype=local.dtype))], axis=-1)
    return stacked.transpose(0, 2, 1)


def discriminate(discriminator: Discriminator, local, velocity, condition: ConditionBatch,
                 rng: Optional[np.random.Generator] = None, training: bool = False) -> Tensor:
    """Realism probability in (0, 1) per sequence, shape (B,)."""
    return discriminator(discriminator_inputs(local, velocity, condition), rng=rng, training=training)
