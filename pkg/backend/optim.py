"""
Adam with bias correction and global-norm gradient clipping.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from backend.config import OptimizerSettings

logger = logging.getLogger(__name__)


class NonFiniteGradientError(RuntimeError):
    pass


def global_norm(grads: dict) -> float:
    """Joint L2 norm over every gradient array."""
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_global_norm(grads: dict, max_norm: float = 25.0) -> tuple:
    """
    Rescale the whole gradient set when its joint norm exceeds max_norm

    Args:
        grads: name -> gradient array
        max_norm: clipping threshold

    Returns:
        (clipped gradients, norm before clipping)

    Raises:
        NonFiniteGradientError: naming the first parameter with a NaN/inf gradient
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads), norm
    scale = max_norm / norm
    return {name: (grad * scale).astype(grad.dtype, copy=False) for name, grad in grads.items()}, norm


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def state_dict(self) -> dict:
        arrays = {"step": np.array(self.step)}
        arrays.update({f"m:{name}": value for name, value in self.m.items()})
        arrays.update({f"v:{name}": value for name, value in self.v.items()})
        return arrays

    @classmethod
    def from_state_dict(cls, arrays: dict) -> "AdamState":
        state = cls(step=int(arrays["step"]))
        for key, value in arrays.items():
            if key.startswith("m:"):
                state.m[key[2:]] = np.array(value)
            elif key.startswith("v:"):
                state.v[key[2:]] = np.array(value)
        return state


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 1e-4,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """
    In-place Adam update of `params` (name -> Tensor) from `grads` (name -> array).
    Parameters without a gradient entry keep their value and moments.
    """
    if set(grads) - set(params):
        raise KeyError(f"gradients for unknown parameters: {sorted(set(grads) - set(params))}")
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, grad in grads.items():
        tensor = params[name]
        if grad.shape != tensor.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match parameter {name!r} {tensor.shape}")
        m = state.m.get(name, np.zeros_like(tensor.data))
        v = state.v.get(name, np.zeros_like(tensor.data))
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        tensor.data = (tensor.data - update).astype(tensor.dtype, copy=False)


class Adam:
    """Adam over a fixed parameter dict, optionally clipping by global norm first."""

    def __init__(self, params: dict, settings: OptimizerSettings | None = None, clip: bool = True):
        self.params = params
        self.settings = settings or OptimizerSettings()
        self.clip = clip
        self.state = AdamState()
        self.last_norm = 0.0

    def step(self) -> float:
        """
        Apply one update from the gradients currently stored on the parameters

        Returns:
            Global gradient norm before clipping
        """
        grads = {name: tensor.grad for name, tensor in self.params.items() if tensor.grad is not None}
        if self.clip:
            grads, norm = clip_global_norm(grads, self.settings.clip_norm)
        else:
            for name, grad in grads.items():
                if not np.all(np.isfinite(grad)):
                    raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
            norm = global_norm(grads)
        adam_step(self.params, grads, self.state, lr=self.settings.lr, beta1=self.settings.beta1,
                  beta2=self.settings.beta2, eps=self.settings.eps)
        self.last_norm = norm
        logger.debug(f"adam step {self.state.step}: grad norm {norm:.4f}")
        return norm

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()
