"""Dense-tensor primitives: activations, matmul, init, seeded RNG, finite differences.

Everything operates on plain numpy arrays in row-major (C) order. Training
runs at float32; gradient checking runs at float64 because central
differences lose too many digits at single precision.
"""

from __future__ import annotations

import hashlib
from typing import Callable

import numpy as np

TRAIN_DTYPE = np.float32
CHECK_DTYPE = np.float64

ACTIVATION_KINDS = ("sigmoid", "tanh", "relu", "softmax")


class NonFiniteError(FloatingPointError):
    """A tensor contains NaN or Inf where finite values are required."""


class RngState:
    """Seeded RNG with named substreams.

    Each label (init / dropout / shuffle / sampling / ...) gets an independent
    PCG64 stream derived from (seed, sha256(label)), so adding a consumer
    never perturbs the draws of another. Identical seed => identical streams,
    across processes and platforms.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)

    def substream(self, label: str) -> np.random.Generator:
        digest = int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, digest])))


def assert_finite(x: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{name} contains NaN/Inf")


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    # exp of a non-positive argument only; never overflows
    ex = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)


def activate(x: np.ndarray, kind: str, axis: int = -1) -> np.ndarray:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "relu":
        return relu(x)
    if kind == "softmax":
        return softmax(x, axis=axis)
    raise ValueError(f"unknown activation kind: {kind!r}")


def activate_backward(
    kind: str, grad: np.ndarray, output: np.ndarray, axis: int = -1
) -> np.ndarray:
    """Gradient w.r.t. the activation input, expressed through the output.

    For sigmoid/tanh/relu the Jacobian is diagonal; softmax needs the full
    vector-Jacobian product along `axis`.
    """
    if kind == "sigmoid":
        return grad * output * (1.0 - output)
    if kind == "tanh":
        return grad * (1.0 - output * output)
    if kind == "relu":
        return grad * (output > 0).astype(output.dtype)
    if kind == "softmax":
        return output * (grad - np.sum(grad * output, axis=axis, keepdims=True))
    raise ValueError(f"unknown activation kind: {kind!r}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def glorot_uniform(
    shape: tuple[int, ...],
    rng: np.random.Generator,
    fans: tuple[int, int] | None = None,
    dtype: np.dtype = TRAIN_DTYPE,
) -> np.ndarray:
    """Uniform on [-L, L] with L = sqrt(6 / (fan_in + fan_out)).

    Default fan convention: 1-D -> (n, n); 2-D -> (rows, cols); higher rank
    treats the leading axes as receptive field (fan = field * channel dims).
    Pass `fans` explicitly where a layer documents a different convention.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) < 1:
        raise ValueError("shape needs at least one dimension")
    if fans is None:
        if len(shape) == 1:
            fans = (shape[0], shape[0])
        elif len(shape) == 2:
            fans = (shape[0], shape[1])
        else:
            receptive = int(np.prod(shape[:-2]))
            fans = (receptive * shape[-2], receptive * shape[-1])
    limit = np.sqrt(6.0 / (fans[0] + fans[1]))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, coordinate by coordinate.

    The test oracle for every hand-derived backward pass. Only meaningful at
    float64; callers must evaluate `f` in 64-bit mode.
    """
    x = np.asarray(x, dtype=CHECK_DTYPE)
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        f_plus = float(f(x))
        flat_x[i] = orig - h
        f_minus = float(f(x))
        flat_x[i] = orig
        flat_g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max_i |a_i - b_i| / max(1, |a_i|, |b_i|), the gradient-check metric."""
    a = np.asarray(a, dtype=CHECK_DTYPE)
    b = np.asarray(b, dtype=CHECK_DTYPE)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / denom))
