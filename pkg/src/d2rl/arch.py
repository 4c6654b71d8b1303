"""Network topologies: vanilla MLP, dense input-reinjection (D2RL), residual MLP.

All three share one forward/backward contract so the algorithms never need
to know which trunk they are driving.

Dense trunk, for ``L`` hidden layers and raw input ``x``::

    h1 = relu(L1(x))
    hk = relu(Lk([h(k-1), x]))      k = 2..L

Heads always read ``hL`` alone; the raw input is not re-appended before the
output layer.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import D2RLError, DimensionError
from .nn import (
    AdamConfig,
    LinearLayer,
    as_tensor,
    check_finite,
    clamp_log_std,
    LOG_STD_MAX,
    LOG_STD_MIN,
)


class Kind(str, Enum):
    VANILLA = "vanilla"
    DENSE = "dense"
    RESIDUAL = "residual"


class Head(str, Enum):
    GAUSSIAN = "gaussian"          # (mean, clamped log_std) for SAC
    DETERMINISTIC = "deterministic"  # tanh(L(h)) for TD3 / DDPG
    Q = "q"                         # scalar state-action value


@dataclass(frozen=True)
class NetworkTopology:
    kind: Kind
    input_dim: int
    hidden_dim: int = 256
    num_hidden_layers: int = 4
    head: Head = Head.Q
    action_dim: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "head", Head(self.head))
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise DimensionError("input_dim and hidden_dim must be positive")
        if self.num_hidden_layers < 1:
            raise DimensionError("need at least one hidden layer")
        if self.head is not Head.Q and self.action_dim < 1:
            raise DimensionError("policy heads need a positive action_dim")

    def trunk_shapes(self) -> list[tuple[int, int]]:
        """(in, out) for every hidden layer."""
        h, d = self.hidden_dim, self.input_dim
        shapes = [(d, h)]
        later_in = h + d if self.kind is Kind.DENSE else h
        shapes += [(later_in, h)] * (self.num_hidden_layers - 1)
        return shapes

    def head_shapes(self) -> dict[str, tuple[int, int]]:
        h = self.hidden_dim
        if self.head is Head.Q:
            return {"out": (h, 1)}
        if self.head is Head.GAUSSIAN:
            return {"mean": (h, self.action_dim), "log_std": (h, self.action_dim)}
        return {"mean": (h, self.action_dim)}


def param_count(topology: NetworkTopology) -> int:
    shapes = topology.trunk_shapes() + list(topology.head_shapes().values())
    return sum((i + 1) * o for i, o in shapes)


class Network:
    """Instantiated topology with parameters, Adam state and a forward cache."""

    def __init__(self, topology: NetworkTopology, rng: np.random.Generator | None = None, dtype=np.float64):
        self.topology = topology
        self.dtype = np.dtype(dtype)
        self.layers = [LinearLayer(i, o, rng, self.dtype) for i, o in topology.trunk_shapes()]
        self.heads = {name: LinearLayer(i, o, rng, self.dtype) for name, (i, o) in topology.head_shapes().items()}
        self._cache = None
        assert self.num_params() == param_count(topology)

    # --- forward -----------------------------------------------------------

    def trunk(self, x: np.ndarray, keep: bool = False):
        """Run the hidden layers; returns ``hL`` and (optionally) the per-layer record."""
        kind = self.topology.kind
        width = self.topology.hidden_dim
        record = []
        h = None
        for k, layer in enumerate(self.layers):
            if k == 0:
                inp = x
            elif kind is Kind.DENSE:
                inp = np.concatenate([h, x], axis=1)
            else:
                inp = h
            z = layer.forward(inp, check_input=False)
            out = np.maximum(z, 0.0)
            if kind is Kind.RESIDUAL and k > 0:
                out = out + h
            if keep:
                record.append((inp, z, out))
            h = out
        assert h.shape[1] == width
        return h, record

    def forward(self, x, cache: bool = True):
        """Head outputs for a batch.

        Q head: ``(batch, 1)`` values. Gaussian head: ``(mean, log_std)`` with
        log_std clamped to [-5, 2]. Deterministic head: ``tanh(mean)``.
        """
        x = as_tensor(x, "network input", self.dtype)
        if x.shape[1] != self.topology.input_dim:
            raise DimensionError(f"expected input width {self.topology.input_dim}, got {x.shape[1]}")
        h, record = self.trunk(x, keep=cache)
        head = self.topology.head
        if head is Head.Q:
            out = self.heads["out"].forward(h, check_input=False)
            extra = None
        elif head is Head.GAUSSIAN:
            mean = self.heads["mean"].forward(h, check_input=False)
            raw = self.heads["log_std"].forward(h, check_input=False)
            out = (mean, clamp_log_std(raw))
            extra = raw
        else:
            out = np.tanh(self.heads["mean"].forward(h, check_input=False))
            extra = out
        self._cache = (x, h, record, extra) if cache else None
        return out

    def hidden_representations(self, x) -> list[dict[str, np.ndarray]]:
        """Per hidden layer: its input vector and its post-activation output."""
        x = as_tensor(x, "network input", self.dtype)
        _, record = self.trunk(x, keep=True)
        return [{"input": inp, "output": out} for inp, _, out in record]

    # --- backward ----------------------------------------------------------

    def backward(self, upstream, param_grads: bool = True) -> np.ndarray:
        """Backpropagate head gradients; returns dL/dx.

        ``upstream`` is ``(batch, 1)`` for Q heads, a ``(g_mean, g_log_std)``
        pair for Gaussian heads (either may be None) and ``(batch, action_dim)``
        for the deterministic head. With ``param_grads=False`` only the input
        gradient is computed and the stored parameter gradients are untouched.
        """
        if self._cache is None:
            raise D2RLError("backward called without a cached forward pass")
        x, h, record, extra = self._cache
        head = self.topology.head
        cast = self._cast
        if head is Head.Q:
            g = self.heads["out"].backward(h, cast(upstream), param_grads)
        elif head is Head.GAUSSIAN:
            g_mean, g_log_std = cast(upstream[0]), cast(upstream[1])
            g = np.zeros_like(h)
            if g_mean is not None:
                g += self.heads["mean"].backward(h, g_mean, param_grads)
            if g_log_std is not None:
                inside = (extra >= LOG_STD_MIN) & (extra <= LOG_STD_MAX)
                g += self.heads["log_std"].backward(h, g_log_std * inside, param_grads)
        else:
            g = self.heads["mean"].backward(h, cast(upstream) * (1.0 - extra * extra), param_grads)

        kind = self.topology.kind
        hidden = self.topology.hidden_dim
        gx = np.zeros_like(x)
        for k in range(len(self.layers) - 1, -1, -1):
            inp, z, _ = record[k]
            g_z = g * (z > 0.0)
            g_inp = self.layers[k].backward(inp, g_z, param_grads)
            if k == 0:
                gx += g_inp
            elif kind is Kind.DENSE:
                gx += g_inp[:, hidden:]
                g = g_inp[:, :hidden]
            elif kind is Kind.RESIDUAL:
                g = g + g_inp
            else:
                g = g_inp
        return check_finite(gx, "input gradient")

    def _cast(self, arr):
        return None if arr is None else np.asarray(arr, dtype=self.dtype)

    # --- parameters --------------------------------------------------------

    def all_layers(self) -> list[tuple[str, LinearLayer]]:
        named = [(f"layer{k + 1}", layer) for k, layer in enumerate(self.layers)]
        return named + list(self.heads.items())

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{name}.{p}", arr) for name, layer in self.all_layers()
                for p, arr in layer.parameters().items()]

    def num_params(self) -> int:
        return sum(layer.num_params() for _, layer in self.all_layers())

    def zero_grad(self) -> None:
        for _, layer in self.all_layers():
            layer.zero_grad()

    def adam_step(self, cfg: AdamConfig) -> None:
        for _, layer in self.all_layers():
            layer.adam_step(cfg)

    def copy(self) -> "Network":
        clone = copy.deepcopy(self)
        clone._cache = None
        return clone

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        for name, arr in self.named_parameters():
            src = params[name]
            if src.shape != arr.shape:
                raise DimensionError(f"{name}: expected shape {arr.shape}, got {src.shape}")
            arr[...] = src


def build_network(topology: NetworkTopology, rng: np.random.Generator, dtype=np.float64) -> Network:
    return Network(topology, rng, dtype)
