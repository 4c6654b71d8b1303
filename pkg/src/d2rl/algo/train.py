"""Environment interaction loop, evaluation protocol and learning curves."""
from __future__ import annotations

import copy
import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from ..checkpoint import quantize
from ..envs import Env
from ..nn import make_rng
from .agent import Agent, policy_action
from .buffer import ReplayBuffer, Transition
from .her import her_relabel

CURVE_FORMAT_VERSION = 1
CURVE_HEADER = ("env_step", "eval_return_mean", "eval_return_sd", "critic_loss", "actor_loss", "alpha", "wall_ms")

_EVAL_STREAM = 0x5EED_E7A1


def eval_seeds(seed: int, episodes: int) -> list[int]:
    """Reset seeds for the evaluation episodes of a run; identical at every evaluation."""
    root = np.random.SeedSequence([seed, _EVAL_STREAM])
    return [int(s.generate_state(1)[0]) for s in root.spawn(episodes)]


@dataclass
class CurveRow:
    env_step: int
    eval_return_mean: float
    eval_return_sd: float
    critic_loss: float
    actor_loss: float
    alpha: float
    wall_ms: float
    success_rate: float = float("nan")

    def csv_fields(self) -> list[str]:
        return [str(self.env_step)] + [repr(float(getattr(self, k))) for k in CURVE_HEADER[1:]]


@dataclass
class LearningCurve:
    rows: list[CurveRow] = field(default_factory=list)

    def append(self, row: CurveRow) -> None:
        if self.rows and row.env_step <= self.rows[-1].env_step:
            raise ValueError("env_step must increase strictly along a curve")
        self.rows.append(row)

    def final_window(self, window: int = 5, key: str = "eval_return_mean") -> float:
        vals = [getattr(r, key) for r in self.rows[-window:]]
        return float(np.mean(vals))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for row in self.rows:
            writer.writerow(row.csv_fields())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LearningCurve":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != CURVE_HEADER:
            raise ValueError(f"unexpected curve header {header}")
        curve = cls()
        for rec in reader:
            curve.append(CurveRow(int(rec[0]), *(float(v) for v in rec[1:])))
        return curve


def evaluate(policy, env: Env, seeds) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic rollouts, one per seed, stepped in lockstep.

    Returns per-episode returns and success flags (always False for
    environments without a success notion).
    """
    envs = [copy.deepcopy(env) for _ in seeds]
    obs = np.array([e.reset(s) for e, s in zip(envs, seeds)])
    returns = np.zeros(len(envs))
    success = np.zeros(len(envs), dtype=bool)
    live = np.ones(len(envs), dtype=bool)
    spec = env.spec
    while live.any():
        idx = np.flatnonzero(live)
        actions = policy_action(policy, obs[idx], deterministic=True)
        for j, i in enumerate(idx):
            o, r, done, info = envs[i].step(spec.scale_action(actions[j]))
            obs[i] = o
            returns[i] += r
            if info.get("is_success"):
                success[i] = True
            if done or info["truncated"]:
                live[i] = False
    return returns, success


def evaluate_policy(policy, env: Env, seed: int, episodes: int) -> tuple[np.ndarray, np.ndarray]:
    """The evaluation protocol used in training and by ``d2rl eval``.

    The policy is first rounded through float32 so that a policy reloaded
    from a checkpoint scores exactly the same.
    """
    return evaluate(quantize(policy), env, eval_seeds(seed, episodes))


def _nanmean(vals) -> float:
    vals = [v for v in vals if not np.isnan(v)]
    return float(np.mean(vals)) if vals else float("nan")


def train(env: Env, agent: Agent, total_steps: int, seed: int, env_rng: np.random.Generator | None = None,
          sinks=(), log=None) -> LearningCurve:
    """Run the interaction loop for ``total_steps`` environment steps.

    Random actions for the first ``warmup_steps``, then policy samples; one
    gradient update per step after warmup. Every ``eval_interval`` steps (and
    at the last step) the deterministic policy is scored on
    ``eval_episodes`` fixed-seed episodes and a row is appended to the curve.
    Each sink is called as ``sink(row, agent)`` after the row is recorded.
    """
    cfg = agent.cfg
    spec = env.spec
    if spec.obs_dim != cfg.obs_dim or spec.action_dim != cfg.action_dim:
        raise ValueError("environment and agent dimensions disagree")
    env_rng = env_rng if env_rng is not None else make_rng(seed)
    goal_env = spec.goal_dim is not None
    buffer = ReplayBuffer(cfg.buffer_capacity, spec.obs_dim, spec.action_dim)
    eval_env = copy.deepcopy(env)
    curve = LearningCurve()
    pending = {"critic_loss": [], "actor_loss": [], "alpha": []}
    episode: list[Transition] = []
    start = time.perf_counter()

    def new_episode():
        return env.reset(int(env_rng.integers(0, 2 ** 63 - 1)))

    obs = new_episode()
    for step in range(1, total_steps + 1):
        if step <= cfg.warmup_steps:
            action = agent.rng.uniform(-1.0, 1.0, size=spec.action_dim)
        else:
            action = agent.act(obs)
        next_obs, reward, done, info = env.step(spec.scale_action(action))
        tr = Transition(obs, action, reward, next_obs, done)
        if goal_env:
            tr.achieved_goal = info["achieved_goal"]
            tr.desired_goal = obs[-spec.goal_dim:].copy()
            episode.append(tr)
        else:
            buffer.push(tr)
        obs = next_obs
        if done or info["truncated"]:
            if goal_env:
                buffer.extend(her_relabel(episode, cfg.her_k, agent.rng) if cfg.her_k else episode)
                episode = []
            obs = new_episode()

        if step > cfg.warmup_steps and len(buffer):
            losses = agent.update(buffer.sample(cfg.batch_size, agent.rng))
            for k in pending:
                pending[k].append(losses[k])

        if step % cfg.eval_interval == 0 or step == total_steps:
            returns, success = evaluate_policy(agent.policy, eval_env, seed, cfg.eval_episodes)
            row = CurveRow(
                env_step=step,
                eval_return_mean=float(np.mean(returns)),
                eval_return_sd=float(np.std(returns)),
                critic_loss=_nanmean(pending["critic_loss"]),
                actor_loss=_nanmean(pending["actor_loss"]),
                alpha=_nanmean(pending["alpha"]),
                wall_ms=round((time.perf_counter() - start) * 1000.0, 3),
                success_rate=float(np.mean(success)),
            )
            pending = {k: [] for k in pending}
            curve.append(row)
            if log is not None:
                log(row)
            for sink in sinks:
                sink(row, agent)
    return curve
