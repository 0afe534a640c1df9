import numpy as np
import pytest

from backend.autodiff import Tape, Tensor
from backend.config import ModelSettings
from backend.kinematics import Skeleton
from evaluation.synthetic import generate_dataset
from ingestion.joint_aliases import canonical_skeleton


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_joint_skeleton():
    return Skeleton(("root", "tip"), (None, 0), [[0.0, 0.0, 0.0], [0.0, 10.0, 0.0]], name="stick")


@pytest.fixture
def chain_skeleton():
    tpose = [[0.0, 0.0, 0.0], [0.0, 5.0, 0.0], [3.0, 9.0, 0.0], [3.0, 9.0, 4.0], [-2.0, 5.0, 1.0]]
    return Skeleton(("root", "a", "b", "c", "d"), (None, 0, 1, 2, 1), tpose, name="chain")


@pytest.fixture
def template():
    return canonical_skeleton()


@pytest.fixture
def tiny_settings():
    return ModelSettings(kind="fk", hidden_size=8, num_layers=1, mlp_width=16, dtype="float64")


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(3, 4, seed=7)


@pytest.fixture
def random_quats(rng):
    def make(shape):
        q = rng.standard_normal(tuple(shape) + (4,))
        return q / np.linalg.norm(q, axis=-1, keepdims=True)
    return make


def _numeric_gradient(fn, x: np.ndarray, eps: float) -> np.ndarray:
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for index in range(flat.size):
        saved = flat[index]
        flat[index] = saved + eps
        plus = fn(x)
        flat[index] = saved - eps
        minus = fn(x)
        flat[index] = saved
        out[index] = (plus - minus) / (2 * eps)
    return grad


@pytest.fixture
def gradcheck():
    """
    Compare tape gradients of sum(op(*inputs) * w) with central differences.
    `op` maps Tensors to a Tensor; inputs are float64 arrays.
    """
    def check(op, *inputs, eps=1e-6, rtol=1e-4, atol=1e-7, seed=0):
        inputs = [np.array(x, dtype=np.float64) for x in inputs]
        probe = op(*[Tensor(x) for x in inputs]).data
        weights = np.random.default_rng(seed).standard_normal(probe.shape)

        tensors = [Tensor(x, requires_grad=True) for x in inputs]
        with Tape() as tape:
            loss = (op(*tensors) * weights).sum()
            tape.backward(loss)

        for position, tensor in enumerate(tensors):
            def scalar(value, position=position):
                args = [Tensor(v) for v in inputs]
                args[position] = Tensor(value)
                return float(np.sum(op(*args).data * weights))

            numeric = _numeric_gradient(scalar, inputs[position].copy(), eps)
            analytic = np.zeros_like(numeric) if tensor.grad is None else tensor.grad
            np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)
    return check
