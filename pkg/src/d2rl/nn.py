"""Small dense-layer engine with hand-written reverse mode.

Every tensor is a 2-D ``float64`` numpy array with the batch along rows.
Layers cache nothing themselves; callers keep the forward inputs they need
for the backward pass (see :mod:`d2rl.arch`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError

DTYPE = np.float64

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
TANH_LOG_GUARD = 1e-6
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.isfinite(x).all():
        raise NumericError(f"non-finite values in {what}")
    return x


def as_tensor(x, what: str = "tensor", dtype=DTYPE) -> np.ndarray:
    """Coerce to a finite 2-D array (float64 unless told otherwise); 1-D input becomes a single row."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(f"{what} must be 2-D, got shape {arr.shape}")
    return check_finite(arr, what)


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def split_rng(seed: int, n: int = 2) -> list[np.random.Generator]:
    """Independent child generators derived from one run seed."""
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


def adam_update(param, grad, m, v, t: int, cfg: AdamConfig) -> None:
    """One bias-corrected Adam step, in place. ``t`` is the post-increment step.

    theta -= lr * m_hat / (sqrt(v_hat) + eps), with the bias corrections
    folded into scalars to keep temporaries down.
    """
    m *= cfg.beta1
    m += (1.0 - cfg.beta1) * grad
    v *= cfg.beta2
    v += (1.0 - cfg.beta2) * np.square(grad)
    denom = np.sqrt(v)
    denom *= 1.0 / math.sqrt(1.0 - cfg.beta2 ** t)
    denom += cfg.eps
    np.divide(m, denom, out=denom)
    denom *= cfg.lr / (1.0 - cfg.beta1 ** t)
    param -= denom


class LinearLayer:
    """Affine map ``y = x @ W.T + b`` with gradient and Adam buffers."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None, dtype=DTYPE):
        if in_dim < 1 or out_dim < 1:
            raise DimensionError(f"layer dims must be positive, got {in_dim}->{out_dim}")
        bound = 1.0 / math.sqrt(in_dim)
        if rng is None:
            self.weight = np.zeros((out_dim, in_dim), dtype=dtype)
            self.bias = np.zeros(out_dim, dtype=dtype)
        else:
            # drawn in float64 so the stream consumed does not depend on dtype
            self.weight = rng.uniform(-bound, bound, size=(out_dim, in_dim)).astype(dtype)
            self.bias = rng.uniform(-bound, bound, size=out_dim).astype(dtype)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self.adam_m = {"weight": np.zeros_like(self.weight), "bias": np.zeros_like(self.bias)}
        self.adam_v = {"weight": np.zeros_like(self.weight), "bias": np.zeros_like(self.bias)}
        self.adam_t = 0

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: np.ndarray, check_input: bool = True) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(f"expected (batch, {self.in_dim}) input, got {x.shape}")
        if check_input:
            check_finite(x, "linear input")
        y = x @ self.weight.T
        y += self.bias
        return check_finite(y, "linear output")

    def backward(self, x: np.ndarray, upstream: np.ndarray, param_grads: bool = True) -> np.ndarray:
        """Accumulate parameter gradients (unless disabled) and return dL/dx."""
        if upstream.shape != (x.shape[0], self.out_dim) or x.shape[1] != self.in_dim:
            raise DimensionError(
                f"backward shapes x={x.shape} upstream={upstream.shape} "
                f"do not match layer {self.in_dim}->{self.out_dim}"
            )
        if param_grads:
            self.grad_weight += upstream.T @ x
            self.grad_bias += upstream.sum(axis=0)
        if self.out_dim == 1:
            # outer product; BLAS is slow on rank-1 matmuls and the products are identical
            return upstream * self.weight
        return upstream @ self.weight

    def zero_grad(self) -> None:
        self.grad_weight.fill(0.0)
        self.grad_bias.fill(0.0)

    def adam_step(self, cfg: AdamConfig) -> None:
        self.adam_t += 1
        adam_update(self.weight, self.grad_weight, self.adam_m["weight"], self.adam_v["weight"], self.adam_t, cfg)
        adam_update(self.bias, self.grad_bias, self.adam_m["bias"], self.adam_v["bias"], self.adam_t, cfg)
        self.zero_grad()

    def parameters(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def num_params(self) -> int:
        return self.weight.size + self.bias.size


def adam_step(layer: LinearLayer, cfg: AdamConfig) -> None:
    layer.adam_step(cfg)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return upstream * (x > 0.0)


def tanh_forward(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_backward(y: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return upstream * (1.0 - y * y)


def concat_forward(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"batch mismatch in concat: {a.shape[0]} vs {b.shape[0]}")
    return np.concatenate([a, b], axis=1)


def concat_backward(upstream: np.ndarray, left_width: int) -> tuple[np.ndarray, np.ndarray]:
    return upstream[:, :left_width], upstream[:, left_width:]


def clamp_log_std(raw: np.ndarray) -> np.ndarray:
    return np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)


class TanhGaussianSample:
    """A reparameterised draw ``a = tanh(mean + exp(log_std) * eps)``.

    ``log_prob`` carries the change-of-variables correction and has shape
    ``(batch, 1)``. :meth:`backward` maps gradients on ``action`` and
    ``log_prob`` back onto ``mean`` and ``log_std`` with ``eps`` held fixed.
    """

    def __init__(self, mean: np.ndarray, log_std: np.ndarray, noise: np.ndarray):
        if mean.shape != log_std.shape or noise.shape != mean.shape:
            raise DimensionError("mean, log_std and noise must share a shape")
        noise = noise.astype(mean.dtype, copy=False)
        self.std = np.exp(log_std)
        self.noise = noise
        self.pre_tanh = mean + self.std * noise
        self.action = np.tanh(self.pre_tanh)
        self._one_minus_a2 = 1.0 - self.action * self.action
        per_dim = (-0.5 * noise * noise - log_std - _HALF_LOG_2PI
                   - np.log(self._one_minus_a2 + TANH_LOG_GUARD))
        self.log_prob = check_finite(per_dim.sum(axis=1, keepdims=True), "log_prob")

    def backward(self, grad_action: np.ndarray | None, grad_log_prob: np.ndarray | None):
        g_u = np.zeros_like(self.pre_tanh)
        g_log_std = np.zeros_like(self.pre_tanh)
        if grad_action is not None:
            g_u += grad_action * self._one_minus_a2
        if grad_log_prob is not None:
            # d/du of -log(1 - tanh(u)^2 + guard)
            g_u += grad_log_prob * (2.0 * self.action * self._one_minus_a2
                                    / (self._one_minus_a2 + TANH_LOG_GUARD))
            g_log_std -= grad_log_prob
        g_log_std += g_u * self.std * self.noise
        return g_u, g_log_std


def gaussian_sample_tanh(mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator | None = None,
                         noise: np.ndarray | None = None) -> TanhGaussianSample:
    """Draw a squashed Gaussian action; pass ``noise`` to fix ``eps``."""
    if noise is None:
        noise = rng.standard_normal(mean.shape)
    return TanhGaussianSample(mean, log_std, noise)


def deterministic_action(mean: np.ndarray) -> np.ndarray:
    return np.tanh(mean)
