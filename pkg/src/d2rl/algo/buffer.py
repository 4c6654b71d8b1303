from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import D2RLError, DimensionError, NumericError


@dataclass
class Transition:
    """One environment step.

    ``done`` is True only for genuine terminal states, never for time-limit
    truncation. For goal-conditioned environments ``state`` and
    ``next_state`` end with the desired goal, and ``achieved_goal`` is the
    goal reached after the step.
    """
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    achieved_goal: np.ndarray | None = None
    desired_goal: np.ndarray | None = None


@dataclass
class Batch:
    state: np.ndarray       # (n, obs_dim)
    action: np.ndarray      # (n, action_dim)
    reward: np.ndarray      # (n, 1)
    next_state: np.ndarray  # (n, obs_dim)
    done: np.ndarray        # (n, 1), 0.0 or 1.0

    def __len__(self):
        return self.state.shape[0]

    @classmethod
    def from_transitions(cls, transitions) -> "Batch":
        return cls(
            state=np.array([t.state for t in transitions], dtype=np.float64),
            action=np.array([t.action for t in transitions], dtype=np.float64),
            reward=np.array([[t.reward] for t in transitions], dtype=np.float64),
            next_state=np.array([t.next_state for t in transitions], dtype=np.float64),
            done=np.array([[float(t.done)] for t in transitions], dtype=np.float64),
        )


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs_dim, self.action_dim = obs_dim, action_dim
        self.state = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, action_dim))
        self.reward = np.zeros((capacity, 1))
        self.next_state = np.zeros((capacity, obs_dim))
        self.done = np.zeros((capacity, 1))
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition) -> None:
        state = np.asarray(t.state, dtype=np.float64).reshape(-1)
        next_state = np.asarray(t.next_state, dtype=np.float64).reshape(-1)
        action = np.asarray(t.action, dtype=np.float64).reshape(-1)
        if state.shape[0] != self.obs_dim or next_state.shape[0] != self.obs_dim:
            raise DimensionError(f"state width must be {self.obs_dim}")
        if action.shape[0] != self.action_dim:
            raise DimensionError(f"action width must be {self.action_dim}")
        if not np.isfinite(t.reward):
            raise NumericError("non-finite reward")
        i = self.cursor
        self.state[i] = state
        self.action[i] = action
        self.reward[i, 0] = t.reward
        self.next_state[i] = next_state
        self.done[i, 0] = float(t.done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def extend(self, transitions) -> None:
        for t in transitions:
            self.push(t)

    def indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise D2RLError("cannot sample from an empty replay buffer")
        return rng.integers(0, self.size, size=n)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        idx = self.indices(n, rng)
        return Batch(self.state[idx], self.action[idx], self.reward[idx],
                     self.next_state[idx], self.done[idx])

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        start = self.cursor if self.size == self.capacity else 0
        order = [(start + j) % self.capacity for j in range(self.size)]
        return [Transition(self.state[i].copy(), self.action[i].copy(), float(self.reward[i, 0]),
                           self.next_state[i].copy(), bool(self.done[i, 0])) for i in order]
