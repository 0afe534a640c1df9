"""
Objective terms. Every term sums over frames and components of one clip and
averages over the batch; batch-less (T, ...) inputs count as a batch of one.
"""
from typing import NamedTuple, Optional

import numpy as np

from backend import autodiff as ad
from backend.autodiff import ShapeError, Tensor
from backend.config import LossWeights
from backend.quat_math import quat_twist_angle_y, quat_twist_angle_y_grad

PROB_EPS = 1e-7


class LossTerms(NamedTuple):
    cycle: Tensor
    gen: Tensor
    twist: Tensor
    smooth: Tensor


def _batched(x, like: Optional[Tensor] = None) -> Tensor:
    x = x if isinstance(x, Tensor) else ad.as_tensor(np.asarray(x, dtype=like.dtype if like is not None else None))
    return x


def _per_sample_sum(x: Tensor) -> Tensor:
    """(B, ...) -> (B,) sums."""
    return x.reshape(x.shape[0], -1).sum(axis=1)


def squared_error(pred, target) -> Tensor:
    """Per-sample ‖pred − target‖², shape (B,)."""
    pred = _batched(pred)
    target = _batched(target, like=pred)
    if pred.shape != target.shape:
        raise ShapeError(f"squared error: shapes {pred.shape} and {target.shape} differ")
    if pred.ndim == 2:
        pred, target = pred.reshape(1, *pred.shape), target.reshape(1, *target.shape)
    return _per_sample_sum(ad.square(pred - target))


def cycle_loss(reconstructed, original) -> Tensor:
    """C = ‖x^A − x̂^A‖² summed over frames and components, batch mean."""
    return squared_error(reconstructed, original).mean()


def _probability(r, like: Tensor) -> Tensor:
    return ad.clip(_batched(r, like=like), PROB_EPS, 1.0 - PROB_EPS)


def adversarial_or_reconstruction_loss(retargeted, original, r_a=None, r_b=None, same_skeleton=True,
                                       beta: float = 0.001, non_saturating: bool = True,
                                       adversarial: bool = True) -> tuple:
    """
    Square loss on samples whose target skeleton equals the input skeleton,
    adversarial terms on the rest

    Args:
        retargeted: x̂^B, (B, T, F)
        original: x^A, same shape
        r_a: discriminator probabilities on real clips of B, (B,); only needed
            for the discriminator term
        r_b: discriminator probabilities on x̂^B, (B,)
        same_skeleton: bool or (B,) bool mask
        beta: weight of the generator's adversarial signal
        non_saturating: generator minimises −β log r^B instead of β log(1 − r^B)
        adversarial: False makes the adversarial branch contribute 0

    Returns:
        (generator term to minimise, discriminator objective log r^A + log(1 − r^B)
        to maximise); both batch means, the discriminator mean is over
        cross-skeleton samples only
    """
    square = squared_error(retargeted, original)
    batch = square.shape[0]
    same = np.broadcast_to(np.asarray(same_skeleton, dtype=bool), (batch,))
    same_mask = same.astype(square.dtype)
    gen = square * same_mask
    disc = Tensor(np.zeros((), dtype=square.dtype))

    if adversarial and not same.all():
        cross_mask = 1.0 - same_mask
        if r_b is not None:
            rb = _probability(r_b, square)
            adv = -beta * ad.log(rb) if non_saturating else beta * ad.log(1.0 - rb)
            gen = gen + adv * cross_mask
        if r_a is not None and r_b is not None:
            ra = _probability(r_a, square)
            rb = _probability(r_b, square)
            objective = (ad.log(ra) + ad.log(1.0 - rb)) * cross_mask
            disc = objective.sum() * (1.0 / float(cross_mask.sum()))
    return gen.mean(), disc


def twist_angles(quats) -> Tensor:
    """Per-joint y-twist in degrees, differentiable."""
    return ad.custom_op(quat_twist_angle_y, lambda grad, q: (quat_twist_angle_y_grad(q, grad),), quats)


def _twist_penalty(quats, alpha: float) -> Tensor:
    quats = _batched(quats)
    if quats.ndim == 3:
        quats = quats.reshape(1, *quats.shape)
    excess = ad.relu(ad.tabs(twist_angles(quats)) - alpha)
    return _per_sample_sum(ad.square(excess)).mean()


def twist_loss(quats_b, quats_a=None, alpha: float = 100.0) -> Tensor:
    """J = ‖max(0, |twist(q̂^B)| − α)‖² + ‖max(0, |twist(q̂^A)| − α)‖², degrees."""
    total = _twist_penalty(quats_b, alpha)
    if quats_a is not None:
        total = total + _twist_penalty(quats_a, alpha)
    return total


def _smooth_penalty(velocity) -> Tensor:
    velocity = _batched(velocity)
    if velocity.ndim == 2:
        velocity = velocity.reshape(1, *velocity.shape)
    if velocity.shape[1] < 2:
        return Tensor(np.zeros((), dtype=velocity.dtype))
    return _per_sample_sum(ad.square(velocity[:, 1:, :] - velocity[:, :-1, :])).mean()


def smoothing_loss(velocity_b, velocity_a=None) -> Tensor:
    """S = ‖v̂^B_{2:T} − v̂^B_{1:T−1}‖² + ‖v̂^A_{2:T} − v̂^A_{1:T−1}‖²."""
    total = _smooth_penalty(velocity_b)
    if velocity_a is not None:
        total = total + _smooth_penalty(velocity_a)
    return total


def total_objective(terms: LossTerms, weights: LossWeights) -> Tensor:
    """C + R + λ J + ω S."""
    return terms.cycle + terms.gen + weights.lam * terms.twist + weights.omega * terms.smooth
