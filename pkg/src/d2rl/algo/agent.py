"""Off-policy actor-critic agents: SAC, TD3 and DDPG over any trunk topology.

Policies act in the unit box [-1, 1]^n; the training loop rescales actions
to the environment's bounds. Critics read ``[state, action]`` as one vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..arch import Head, Kind, Network, NetworkTopology
from ..errors import D2RLError, DimensionError
from ..nn import AdamConfig, adam_update, deterministic_action, gaussian_sample_tanh
from .buffer import Batch

ALGOS = ("sac", "td3", "ddpg")


@dataclass(frozen=True)
class AgentConfig:
    algo: str
    policy_topology: NetworkTopology
    critic_topology: NetworkTopology
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_alpha: float = 1e-4
    batch_size: int = 256
    gamma: float = 0.99
    tau: float = 0.005
    initial_temperature: float = 0.1
    target_entropy: float | None = None  # None -> -action_dim
    learn_alpha: bool = True
    single_critic: bool = False
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    exploration_noise: float = 0.1
    warmup_steps: int = 1000
    eval_interval: int = 1000
    eval_episodes: int = 10
    buffer_capacity: int = 1_000_000
    her_k: int = 0
    dtype: str = "float32"  # compute precision of the agent's networks

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.initial_temperature <= 0:
            raise ValueError("initial_temperature must be positive")
        if self.policy_delay < 1 or self.eval_interval < 1 or self.eval_episodes < 1:
            raise ValueError("policy_delay, eval_interval and eval_episodes must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.warmup_steps < 0 or self.her_k < 0 or self.buffer_capacity < 1:
            raise ValueError("warmup_steps, her_k must be >= 0 and buffer_capacity >= 1")
        want_head = Head.GAUSSIAN if self.algo == "sac" else Head.DETERMINISTIC
        if self.policy_topology.head is not want_head:
            raise ValueError(f"{self.algo} needs a {want_head.value} policy head")
        if self.critic_topology.head is not Head.Q:
            raise ValueError("critic topology must use the Q head")
        obs, act = self.policy_topology.input_dim, self.policy_topology.action_dim
        if self.critic_topology.input_dim != obs + act:
            raise DimensionError("critic input must be obs_dim + action_dim")

    @property
    def obs_dim(self) -> int:
        return self.policy_topology.input_dim

    @property
    def action_dim(self) -> int:
        return self.policy_topology.action_dim

    @property
    def entropy_target(self) -> float:
        return -float(self.action_dim) if self.target_entropy is None else self.target_entropy

    @property
    def num_critics(self) -> int:
        if self.algo == "ddpg" or (self.algo == "sac" and self.single_critic):
            return 1
        return 2


def make_topologies(algo: str, obs_dim: int, action_dim: int, policy_kind="dense", critic_kind="dense",
                    hidden_dim: int = 256, policy_layers: int = 4, critic_layers: int = 4):
    head = Head.GAUSSIAN if algo == "sac" else Head.DETERMINISTIC
    policy = NetworkTopology(Kind(policy_kind), obs_dim, hidden_dim, policy_layers, head, action_dim)
    critic = NetworkTopology(Kind(critic_kind), obs_dim + action_dim, hidden_dim, critic_layers, Head.Q)
    return policy, critic


def td_target(reward, done, next_q, gamma):
    """``r + gamma * next_q * (1 - done)``; works elementwise on arrays."""
    return reward + gamma * next_q * (1.0 - np.asarray(done, dtype=np.float64))


def soft_update(target: Network, online: Network, tau: float) -> None:
    """Polyak-average ``online`` into ``target``: p_t <- (1 - tau) p_t + tau p_o."""
    t_params = target.named_parameters()
    o_params = online.named_parameters()
    if [(n, a.shape) for n, a in t_params] != [(n, a.shape) for n, a in o_params]:
        raise DimensionError("target and online networks have different shapes")
    keep = 1.0 - tau
    for (_, t), (_, o) in zip(t_params, o_params):
        t *= keep
        t += tau * o


class Agent:
    def __init__(self, cfg: AgentConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.policy = Network(cfg.policy_topology, rng, cfg.dtype)
        self.critics = [Network(cfg.critic_topology, rng, cfg.dtype) for _ in range(cfg.num_critics)]
        self.target_critics = [c.copy() for c in self.critics]
        self.target_policy = self.policy.copy() if cfg.algo != "sac" else None
        self.log_alpha = np.array([math.log(cfg.initial_temperature)])
        self._alpha_m = np.zeros(1)
        self._alpha_v = np.zeros(1)
        self._alpha_t = 0
        self.actor_adam = AdamConfig(lr=cfg.lr_actor)
        self.critic_adam = AdamConfig(lr=cfg.lr_critic)
        self.alpha_adam = AdamConfig(lr=cfg.lr_alpha)
        self.num_updates = 0

    @property
    def alpha(self) -> float:
        return float(math.exp(self.log_alpha[0]))

    # --- acting ------------------------------------------------------------

    def act(self, obs, deterministic: bool = False) -> np.ndarray:
        """Actions in [-1, 1]; a single observation gives a 1-D action."""
        obs = np.asarray(obs, dtype=np.float64)
        single = obs.ndim == 1
        actions = policy_action(self.policy, obs, deterministic, self.rng, self.cfg.exploration_noise)
        return actions[0] if single else actions

    # --- learning ----------------------------------------------------------

    def update(self, batch: Batch) -> dict[str, float]:
        if len(batch) == 0:
            raise D2RLError("cannot update on an empty batch")
        self.num_updates += 1
        if self.cfg.algo == "sac":
            return sac_update(self, batch)
        if self.cfg.algo == "td3":
            return td3_update(self, batch)
        return ddpg_update(self, batch)

    def networks(self) -> dict[str, Network]:
        nets = {"policy": self.policy}
        for i, (c, tc) in enumerate(zip(self.critics, self.target_critics), start=1):
            nets[f"q{i}"] = c
            nets[f"q{i}_target"] = tc
        if self.target_policy is not None:
            nets["policy_target"] = self.target_policy
        return nets


def policy_action(policy: Network, obs, deterministic: bool, rng=None, exploration_noise: float = 0.0):
    obs = np.atleast_2d(obs)
    if policy.topology.head is Head.GAUSSIAN:
        mean, log_std = policy.forward(obs, cache=False)
        if deterministic:
            return deterministic_action(mean)
        return gaussian_sample_tanh(mean, log_std, rng).action
    action = policy.forward(obs, cache=False)
    if not deterministic and exploration_noise > 0:
        action = np.clip(action + exploration_noise * rng.standard_normal(action.shape), -1.0, 1.0)
    return action


def _regress(critic: Network, inputs: np.ndarray, target: np.ndarray, adam: AdamConfig) -> tuple[float, np.ndarray]:
    q = critic.forward(inputs)
    diff = q - target
    critic.zero_grad()
    critic.backward(2.0 * diff / diff.shape[0])
    critic.adam_step(adam)
    return float(np.mean(diff * diff)), q


def _fit_critics(agent: Agent, sa: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    losses, q_first = [], None
    for critic in agent.critics:
        loss, q = _regress(critic, sa, y, agent.critic_adam)
        losses.append(loss)
        q_first = q if q_first is None else q_first
    return float(np.mean(losses)), float(np.mean(q_first))


def _min_q(nets, sa: np.ndarray, cache: bool):
    qs = [net.forward(sa, cache=cache) for net in nets]
    if len(qs) == 1:
        return qs[0], qs
    return np.minimum(qs[0], qs[1]), qs


def sac_update(agent: Agent, batch: Batch) -> dict[str, float]:
    cfg = agent.cfg
    s, a, r, s2, d = batch.state, batch.action, batch.reward, batch.next_state, batch.done
    n = s.shape[0]
    alpha = agent.alpha

    # critics
    mean2, log_std2 = agent.policy.forward(s2, cache=False)
    next_sample = gaussian_sample_tanh(mean2, log_std2, agent.rng)
    next_q, _ = _min_q(agent.target_critics, np.concatenate([s2, next_sample.action], axis=1), cache=False)
    y = td_target(r, d, next_q - alpha * next_sample.log_prob, cfg.gamma)
    critic_loss, q_mean = _fit_critics(agent, np.concatenate([s, a], axis=1), y)

    # policy, through the reparameterised sample
    mean, log_std = agent.policy.forward(s)
    sample = gaussian_sample_tanh(mean, log_std, agent.rng)
    q_pi, qs = _min_q(agent.critics, np.concatenate([s, sample.action], axis=1), cache=True)
    actor_loss = float(np.mean(alpha * sample.log_prob - q_pi))
    if len(qs) == 1:
        routes = [np.full((n, 1), -1.0 / n)]
    else:
        first = qs[0] <= qs[1]
        routes = [np.where(first, -1.0 / n, 0.0), np.where(first, 0.0, -1.0 / n)]
    g_action = np.zeros_like(sample.action)
    for critic, up in zip(agent.critics, routes):
        g_action += critic.backward(up, param_grads=False)[:, cfg.obs_dim:]
    g_mean, g_log_std = sample.backward(g_action, np.full((n, 1), alpha / n))
    agent.policy.zero_grad()
    agent.policy.backward((g_mean, g_log_std))
    agent.policy.adam_step(agent.actor_adam)

    # temperature: loss = -log_alpha * mean(log_prob + target_entropy)
    if cfg.learn_alpha:
        grad = -np.array([np.mean(sample.log_prob) + cfg.entropy_target])
        agent._alpha_t += 1
        adam_update(agent.log_alpha, grad, agent._alpha_m, agent._alpha_v, agent._alpha_t, agent.alpha_adam)

    for tc, c in zip(agent.target_critics, agent.critics):
        soft_update(tc, c, cfg.tau)
    return {"critic_loss": critic_loss, "actor_loss": actor_loss, "alpha": agent.alpha, "q_mean": q_mean}


def _deterministic_policy_step(agent: Agent, s: np.ndarray) -> float:
    n = s.shape[0]
    action = agent.policy.forward(s)
    critic = agent.critics[0]
    q = critic.forward(np.concatenate([s, action], axis=1))
    g_action = critic.backward(np.full((n, 1), -1.0 / n), param_grads=False)[:, agent.cfg.obs_dim:]
    agent.policy.zero_grad()
    agent.policy.backward(g_action)
    agent.policy.adam_step(agent.actor_adam)
    return float(-np.mean(q))


def _soft_update_all(agent: Agent) -> None:
    tau = agent.cfg.tau
    for tc, c in zip(agent.target_critics, agent.critics):
        soft_update(tc, c, tau)
    soft_update(agent.target_policy, agent.policy, tau)


def td3_update(agent: Agent, batch: Batch) -> dict[str, float]:
    cfg = agent.cfg
    s, a, r, s2, d = batch.state, batch.action, batch.reward, batch.next_state, batch.done
    next_action = agent.target_policy.forward(s2, cache=False)
    noise = np.clip(cfg.policy_noise * agent.rng.standard_normal(next_action.shape), -cfg.noise_clip, cfg.noise_clip)
    next_action = np.clip(next_action + noise, -1.0, 1.0)
    next_q, _ = _min_q(agent.target_critics, np.concatenate([s2, next_action], axis=1), cache=False)
    y = td_target(r, d, next_q, cfg.gamma)
    critic_loss, q_mean = _fit_critics(agent, np.concatenate([s, a], axis=1), y)
    actor_loss = float("nan")
    if agent.num_updates % cfg.policy_delay == 0:
        actor_loss = _deterministic_policy_step(agent, s)
        _soft_update_all(agent)
    return {"critic_loss": critic_loss, "actor_loss": actor_loss, "alpha": float("nan"), "q_mean": q_mean}


def ddpg_update(agent: Agent, batch: Batch) -> dict[str, float]:
    cfg = agent.cfg
    s, a, r, s2, d = batch.state, batch.action, batch.reward, batch.next_state, batch.done
    next_action = agent.target_policy.forward(s2, cache=False)
    next_q, _ = _min_q(agent.target_critics, np.concatenate([s2, next_action], axis=1), cache=False)
    y = td_target(r, d, next_q, cfg.gamma)
    critic_loss, q_mean = _fit_critics(agent, np.concatenate([s, a], axis=1), y)
    actor_loss = _deterministic_policy_step(agent, s)
    _soft_update_all(agent)
    return {"critic_loss": critic_loss, "actor_loss": actor_loss, "alpha": float("nan"), "q_mean": q_mean}
