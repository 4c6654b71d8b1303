"""Independent reference implementations used by the tests.

Nothing here imports the code under test beyond plain data access, so a
shared bug cannot make both sides agree.
"""
from __future__ import annotations

import math

import numpy as np


def central_difference(f, arr: np.ndarray, index, h: float = 1e-5) -> float:
    """d f() / d arr[index] by central differences, perturbing ``arr`` in place."""
    old = arr[index]
    arr[index] = old + h
    up = f()
    arr[index] = old - h
    down = f()
    arr[index] = old
    return (up - down) / (2.0 * h)


def rel_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a) + abs(b), floor)


def dense_forward_explicit(weights, biases, head_weight, head_bias, x):
    """D2RL trunk plus a linear head, building each concatenated vector by hand.

    ``weights``/``biases`` are the trunk layers in order. The layer input for
    k >= 2 is a freshly allocated ``[h, x]`` matrix filled slice by slice.
    """
    h = np.maximum(x @ weights[0].T + biases[0], 0.0)
    for w, b in zip(weights[1:], biases[1:]):
        v = np.empty((x.shape[0], h.shape[1] + x.shape[1]), dtype=x.dtype)
        v[:, :h.shape[1]] = h
        v[:, h.shape[1]:] = x
        z = v @ w.T
        z += b
        h = np.maximum(z, 0.0)
    out = h @ head_weight.T
    out += head_bias
    return out


def brute_force_param_count(net) -> int:
    """Count every stored scalar by walking the layer objects one entry at a time."""
    total = 0
    for _, layer in net.all_layers():
        for arr in (layer.weight, layer.bias):
            for _ in np.nditer(arr):
                total += 1
    return total


def sparse_reward_oracle(achieved, desired, radius: float = 0.05) -> float:
    dist = math.sqrt(sum((float(a) - float(d)) ** 2 for a, d in zip(achieved, desired)))
    return 0.0 if dist <= radius else -1.0


def her_future_count(n: int, k: int) -> int:
    """Originals, k copies for every step that has a future, one self-goal copy for the last step."""
    if k == 0:
        return n
    return n + k * max(n - 1, 0) + (1 if n else 0)


def squashed_density(a: np.ndarray, mean: float, std: float) -> np.ndarray:
    """Density of tanh(N(mean, std^2)) at a in (-1, 1)."""
    u = np.arctanh(a)
    gauss = np.exp(-0.5 * ((u - mean) / std) ** 2) / (std * math.sqrt(2.0 * math.pi))
    return gauss / (1.0 - a * a)


def ridge_r2(features: np.ndarray, targets: np.ndarray, lam: float = 1e-6) -> float:
    """Affine ridge fit by the normal equations, R^2 averaged over whitened targets."""
    f = np.hstack([features, np.ones((features.shape[0], 1))])
    reg = lam * np.eye(f.shape[1])
    reg[-1, -1] = 0.0
    coef = np.linalg.solve(f.T @ f + reg, f.T @ targets)
    resid = targets - f @ coef
    xc = targets - targets.mean(axis=0)
    return 1.0 - float(np.trace(np.linalg.solve(xc.T @ xc, resid.T @ resid))) / targets.shape[1]


def network_loss_coefficients(net, batch: int, rng):
    """Random fixed weights turning the network's head output into a scalar loss."""
    head = net.topology.head.value
    if head == "gaussian":
        a = net.topology.action_dim
        return rng.normal(size=(batch, a)), rng.normal(size=(batch, a))
    width = 1 if head == "q" else net.topology.action_dim
    return rng.normal(size=(batch, width))


def network_scalar_loss(net, x, coef) -> float:
    out = net.forward(x, cache=False)
    if isinstance(out, tuple):
        return float(np.sum(coef[0] * out[0]) + np.sum(coef[1] * out[1]))
    return float(np.sum(coef * out))


def network_gradient_check(net, x, rng, coords: int = 120, h: float = 1e-5):
    """Max relative error between backward() and central differences.

    ``coords`` coordinates are drawn across all parameters and the input.
    Returns (max_rel_error, number_of_coordinates_checked).
    """
    coef = network_loss_coefficients(net, x.shape[0], rng)
    net.zero_grad()
    net.forward(x)
    gx = net.backward(coef)
    grads = {name: g for name, g in _named_grads(net)}
    arrays = [(arr, grads[name]) for name, arr in net.named_parameters()] + [(x, gx)]
    sizes = np.array([a.size for a, _ in arrays], dtype=float)
    worst = 0.0
    for _ in range(coords):
        which = rng.choice(len(arrays), p=sizes / sizes.sum())
        arr, grad = arrays[which]
        idx = tuple(int(rng.integers(s)) for s in arr.shape)
        fd = central_difference(lambda: network_scalar_loss(net, x, coef), arr, idx, h)
        worst = max(worst, rel_error(float(grad[idx]), fd))
    return worst, coords


def _named_grads(net):
    for name, layer in net.all_layers():
        yield f"{name}.weight", layer.grad_weight
        yield f"{name}.bias", layer.grad_bias
