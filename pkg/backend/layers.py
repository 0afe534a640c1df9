"""
Neural building blocks on top of backend.autodiff: affine maps, gated
recurrent cells and stacks, 1-D convolutions, instance normalisation.

Initialisation: recurrent weights orthogonal, input weights uniform in
±1/sqrt(fan_in), biases zero. Every random draw goes through an explicit
numpy Generator so a seed fixes the whole network.
"""
from typing import Literal, Optional

import numpy as np

from backend import autodiff as ad
from backend.autodiff import ShapeError, Tensor


def uniform_fan_in(rng: np.random.Generator, fan_in: int, shape: tuple, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def orthogonal(rng: np.random.Generator, size: int, dtype) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((size, size)))
    # sign fix makes the draw uniform over the orthogonal group
    return (q * np.sign(np.diag(r))).astype(dtype)


class Module:
    """Holds named parameters and sub-modules."""

    def __init__(self):
        self._params: dict = {}
        self._children: dict = {}

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        tensor = Tensor(value, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def parameters(self, prefix: str = "") -> dict:
        """Flat name -> Tensor map, in registration order."""
        params = {f"{prefix}{name}": tensor for name, tensor in self._params.items()}
        for child_name, child in self._children.items():
            params.update(child.parameters(prefix=f"{prefix}{child_name}."))
        return params

    def zero_grad(self) -> None:
        for tensor in self.parameters().values():
            tensor.zero_grad()

    def state_dict(self) -> dict:
        return {name: tensor.data.copy() for name, tensor in self.parameters().items()}

    def load_state_dict(self, state: dict) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        for name, tensor in params.items():
            value = np.asarray(state[name])
            if value.shape != tensor.shape:
                raise ShapeError(f"parameter {name}: checkpoint shape {value.shape}, model shape {tensor.shape}")
            tensor.data = value.astype(tensor.dtype, copy=True)


class Linear(Module):
    """y = x W + b with W of shape (in, out)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = self.add_param("weight", uniform_fan_in(rng, in_features, (in_features, out_features), dtype))
        self.bias = self.add_param("bias", np.zeros(out_features, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"Linear: input {x.shape} does not match weight {self.weight.shape}")
        return x @ self.weight + self.bias


class GRUCell(Module):
    """
    Gated recurrent cell.

        z = σ(x W_z + h U_z + b_z)        update gate
        r = σ(x W_r + h U_r + b_r)        reset gate
        c = tanh(x W_c + (r ⊙ h) U_c + b_c)     variant "reset_before"
        c = tanh(x W_c + r ⊙ (h U_c) + b_c)     variant "reset_after"
        h' = z ⊙ h + (1 − z) ⊙ c
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator, dtype=np.float32,
                 variant: Literal["reset_before", "reset_after"] = "reset_before"):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.variant = variant
        h = hidden_size
        self.w_x = self.add_param("w_x", uniform_fan_in(rng, input_size, (input_size, 3 * h), dtype))
        self.u_gates = self.add_param(
            "u_gates", np.concatenate([orthogonal(rng, h, dtype), orthogonal(rng, h, dtype)], axis=1)
        )
        self.u_c = self.add_param("u_c", orthogonal(rng, h, dtype))
        self.bias = self.add_param("bias", np.zeros(3 * h, dtype=dtype))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        if x.shape[-1] != self.input_size or h.shape[-1] != self.hidden_size:
            raise ShapeError(
                f"GRUCell: input {x.shape} / hidden {h.shape} do not match sizes ({self.input_size}, {self.hidden_size})"
            )
        n = self.hidden_size
        gx = x @ self.w_x + self.bias
        gh = h @ self.u_gates
        z = ad.sigmoid(gx[:, :n] + gh[:, :n])
        r = ad.sigmoid(gx[:, n:2 * n] + gh[:, n:])
        if self.variant == "reset_before":
            c = ad.tanh(gx[:, 2 * n:] + (r * h) @ self.u_c)
        else:
            c = ad.tanh(gx[:, 2 * n:] + r * (h @ self.u_c))
        return z * h + (1.0 - z) * c


def gru_step(cell: GRUCell, x: Tensor, h: Tensor) -> Tensor:
    return cell(x, h)


class GruStack(Module):
    """Stacked GRU cells; layer k feeds its new state to layer k+1."""

    def __init__(self, input_size: int, hidden_size: int, num_layers: int, rng: np.random.Generator,
                 dtype=np.float32, variant: str = "reset_before"):
        super().__init__()
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.input_size = input_size
        self.cells = [
            self.add_child(f"layer{k}", GRUCell(input_size if k == 0 else hidden_size, hidden_size, rng, dtype, variant))
            for k in range(num_layers)
        ]
        self.dtype = np.dtype(dtype)

    def initial_state(self, batch: int) -> list:
        return [Tensor(np.zeros((batch, self.hidden_size), dtype=self.dtype)) for _ in range(self.num_layers)]

    def __call__(self, x: Tensor, state: list) -> tuple:
        """
        Returns:
            (top-layer output, new per-layer states)
        """
        new_state = []
        inp = x
        for cell, h in zip(self.cells, state):
            inp = cell(inp, h)
            new_state.append(inp)
        return inp, new_state


class FeedForward(Module):
    """Stack of Linear + tanh layers."""

    def __init__(self, input_size: int, width: int, depth: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.layers = [
            self.add_child(f"layer{k}", Linear(input_size if k == 0 else width, width, rng, dtype))
            for k in range(depth)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = ad.tanh(layer(x))
        return x


class Conv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int, padding: str,
                 rng: np.random.Generator, dtype=np.float32, init_scale: float = 1.0):
        super().__init__()
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel
        self.weight = self.add_param(
            "weight", init_scale * uniform_fan_in(rng, fan_in, (out_channels, in_channels, kernel), dtype)
        )
        self.bias = self.add_param("bias", np.zeros(out_channels, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class InstanceNorm1d(Module):
    def __init__(self, channels: int, dtype=np.float32, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.gamma = self.add_param("gamma", np.ones(channels, dtype=dtype))
        self.beta = self.add_param("beta", np.zeros(channels, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.instance_norm_1d(x, self.gamma, self.beta, eps=self.eps)


def set_parameters(module: Module, values: Optional[dict] = None, fill: Optional[float] = None) -> None:
    """Overwrite parameters in place, either from a dict or with a constant."""
    for name, tensor in module.parameters().items():
        if values is not None and name in values:
            tensor.data = np.asarray(values[name], dtype=tensor.dtype).copy()
        elif fill is not None:
            tensor.data = np.full(tensor.shape, fill, dtype=tensor.dtype)
