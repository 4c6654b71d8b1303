"""Hindsight relabelling with the "future" strategy."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..envs import sparse_reward
from ..errors import D2RLError


def _with_goal(obs: np.ndarray, goal: np.ndarray) -> np.ndarray:
    out = np.array(obs, dtype=np.float64, copy=True)
    out[-goal.shape[0]:] = goal
    return out


def relabelled_size(n: int, k: int) -> int:
    """Output length of :func:`her_relabel` for an episode of ``n`` steps."""
    if k == 0 or n == 0:
        return n
    return n + k * (n - 1) + 1


def her_relabel(episode, k: int, rng: np.random.Generator, reward_fn=sparse_reward) -> list:
    """Originals plus ``k`` hindsight copies per step.

    Step ``t`` gets ``k`` goals drawn uniformly (with replacement) from the
    achieved goals of steps ``t+1 .. T-1``. The final step has no future, so
    it gets a single copy relabelled with its own achieved goal. Rewards come
    from ``reward_fn(achieved, new_goal)``; a copy is terminal exactly when
    its reward signals success (0).
    """
    episode = list(episode)
    if k < 0:
        raise ValueError("k must be non-negative")
    for t in episode:
        if t.achieved_goal is None or t.desired_goal is None:
            raise D2RLError("hindsight relabelling needs achieved and desired goals")
    out = list(episode)
    if k == 0:
        return out
    n = len(episode)
    for i, tr in enumerate(episode):
        if i == n - 1:
            future = [i]
        else:
            future = rng.integers(i + 1, n, size=k).tolist()
        for j in future:
            goal = np.asarray(episode[j].achieved_goal, dtype=np.float64)
            reward = float(reward_fn(tr.achieved_goal, goal))
            out.append(replace(
                tr,
                state=_with_goal(tr.state, goal),
                next_state=_with_goal(tr.next_state, goal),
                desired_goal=goal.copy(),
                reward=reward,
                done=reward == 0.0,
            ))
    return out
