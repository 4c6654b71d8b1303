"""Desk-scale continuous-control environments.

Three deterministic state machines, looked up by name through :func:`make_env`:

``pendulum``
    Torque-limited pendulum swing-up, angle measured from upright.
``cartpole-swingup``
    Force-driven cart on a bounded track with the pole starting down.
``pointmass-goal``
    2-D double integrator that must reach a sampled goal; sparse reward,
    used for hindsight relabelling.

``step`` returns ``(obs, reward, done, info)``. ``done`` marks only genuine
terminal states; running out of time sets ``info["truncated"]`` instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    action_dim: int
    action_low: tuple[float, ...]
    action_high: tuple[float, ...]
    max_episode_steps: int
    goal_dim: int | None = None

    def __post_init__(self):
        if len(self.action_low) != self.action_dim or len(self.action_high) != self.action_dim:
            raise DimensionError("action bounds must have action_dim entries")
        for lo, hi in zip(self.action_low, self.action_high):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"bad action bounds [{lo}, {hi}]")

    def scale_action(self, unit_action) -> np.ndarray:
        """Map an action in [-1, 1]^n onto the environment's bounds."""
        lo = np.asarray(self.action_low)
        hi = np.asarray(self.action_high)
        return lo + (np.asarray(unit_action, dtype=np.float64) + 1.0) * 0.5 * (hi - lo)


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


class Env:
    spec: EnvSpec

    def __init__(self):
        self.t = 0

    def _check_action(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape[0] != self.spec.action_dim:
            raise DimensionError(f"expected {self.spec.action_dim} action dims, got {a.shape[0]}")
        if not np.isfinite(a).all():
            raise NumericError("non-finite action")
        return np.clip(a, self.spec.action_low, self.spec.action_high)

    def _tick(self) -> bool:
        self.t += 1
        return self.t >= self.spec.max_episode_steps

    @staticmethod
    def _seeded(seed) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(seed))


class Pendulum(Env):
    """theta'' = 3g/(2l) sin(theta) + 3/(m l^2) u, semi-implicit Euler.

    Initial state: theta ~ U[-pi, pi], theta_dot ~ U[-1, 1]. Velocity clamp
    [-8, 8] rad/s. Reward is charged on the pre-step state and the applied
    torque, so it lies in [-(pi^2 + 6.4 + 0.004), 0].
    """

    spec = EnvSpec(obs_dim=3, action_dim=1, action_low=(-2.0,), action_high=(2.0,), max_episode_steps=200)
    max_speed = 8.0

    def __init__(self, dt: float = 0.05, g: float = 10.0, m: float = 1.0, l: float = 1.0):
        super().__init__()
        self.dt, self.g, self.m, self.l = dt, g, m, l
        self.theta = 0.0
        self.theta_dot = 0.0

    def reset(self, seed) -> np.ndarray:
        rng = self._seeded(seed)
        self.theta = float(rng.uniform(-math.pi, math.pi))
        self.theta_dot = float(rng.uniform(-1.0, 1.0))
        self.t = 0
        return self.observation()

    def set_state(self, theta: float, theta_dot: float) -> np.ndarray:
        self.theta, self.theta_dot = float(theta), float(theta_dot)
        return self.observation()

    def observation(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot])

    def energy(self) -> float:
        # uniform rod about its pivot; upright is the potential maximum
        inertia = self.m * self.l ** 2 / 3.0
        return 0.5 * inertia * self.theta_dot ** 2 + self.m * self.g * 0.5 * self.l * math.cos(self.theta)

    def step(self, action):
        u = float(self._check_action(action)[0])
        th, thdot = self.theta, self.theta_dot
        reward = -(wrap_angle(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2)
        acc = 3.0 * self.g / (2.0 * self.l) * math.sin(th) + 3.0 / (self.m * self.l ** 2) * u
        thdot = min(max(thdot + acc * self.dt, -self.max_speed), self.max_speed)
        self.theta = th + thdot * self.dt
        self.theta_dot = thdot
        truncated = self._tick()
        return self.observation(), reward, False, {"truncated": truncated}


class CartpoleSwingup(Env):
    """Classic cart-pole equations (pole angle 0 = upright) driven by a force.

    Control period 0.05 s split into 5 semi-implicit Euler substeps. The cart
    is clamped to [-2.4, 2.4] m (velocity zeroed at the wall); cart speed is
    clamped to +-10 m/s and pole speed to +-25 rad/s. The pole starts hanging
    down with a small perturbation. Reward ``cos(theta) - 0.01 x^2`` is
    charged on the post-step state.
    """

    spec = EnvSpec(obs_dim=5, action_dim=1, action_low=(-10.0,), action_high=(10.0,), max_episode_steps=500)
    track = 2.4
    max_cart_speed = 10.0
    max_pole_speed = 25.0

    def __init__(self, dt: float = 0.05, substeps: int = 5):
        super().__init__()
        self.dt, self.substeps = dt, substeps
        self.gravity, self.cart_mass, self.pole_mass, self.half_length = 9.8, 1.0, 0.1, 0.5
        self.state = np.zeros(4)

    def reset(self, seed) -> np.ndarray:
        rng = self._seeded(seed)
        x, x_dot, th_dot = rng.uniform(-0.05, 0.05, size=3)
        th = math.pi + rng.uniform(-0.05, 0.05)
        self.state = np.array([x, x_dot, th, th_dot])
        self.t = 0
        return self.observation()

    def observation(self) -> np.ndarray:
        x, x_dot, th, th_dot = self.state
        return np.array([x, x_dot, math.cos(th), math.sin(th), th_dot])

    def step(self, action):
        force = float(self._check_action(action)[0])
        x, x_dot, th, th_dot = (float(v) for v in self.state)
        total = self.cart_mass + self.pole_mass
        pml = self.pole_mass * self.half_length
        h = self.dt / self.substeps
        for _ in range(self.substeps):
            sin, cos = math.sin(th), math.cos(th)
            temp = (force + pml * th_dot ** 2 * sin) / total
            th_acc = (self.gravity * sin - cos * temp) / (
                self.half_length * (4.0 / 3.0 - self.pole_mass * cos ** 2 / total))
            x_acc = temp - pml * th_acc * cos / total
            x_dot = min(max(x_dot + h * x_acc, -self.max_cart_speed), self.max_cart_speed)
            th_dot = min(max(th_dot + h * th_acc, -self.max_pole_speed), self.max_pole_speed)
            x += h * x_dot
            th += h * th_dot
            if abs(x) > self.track:
                x = math.copysign(self.track, x)
                x_dot = 0.0
        self.state = np.array([x, x_dot, th, th_dot])
        reward = math.cos(th) - 0.01 * x * x
        truncated = self._tick()
        return self.observation(), reward, False, {"truncated": truncated}


SUCCESS_RADIUS = 0.05


def sparse_reward(achieved, desired, radius: float = SUCCESS_RADIUS):
    """0 where ``achieved`` is within ``radius`` of ``desired`` (inclusive), else -1.

    Works on single goals or on batches stacked along the first axis.
    """
    achieved = np.asarray(achieved, dtype=np.float64)
    desired = np.asarray(desired, dtype=np.float64)
    if achieved.shape != desired.shape:
        raise DimensionError(f"goal shapes differ: {achieved.shape} vs {desired.shape}")
    dist = np.linalg.norm(achieved - desired, axis=-1)
    reward = np.where(dist <= radius, 0.0, -1.0)
    return float(reward) if reward.ndim == 0 else reward


class PointMassGoal(Env):
    """Point mass in the box [-1, 1]^2 pushed by a bounded force toward a goal.

    Observation is ``(pos, vel, desired_goal)``; the goal always occupies the
    trailing ``goal_dim`` entries. Position is clipped to the box and the
    normal velocity component zeroed on contact. The episode terminates on
    success.
    """

    spec = EnvSpec(obs_dim=6, action_dim=2, action_low=(-1.0, -1.0), action_high=(1.0, 1.0),
                   max_episode_steps=100, goal_dim=2)
    arena = 1.0
    max_speed = 1.0
    radius = SUCCESS_RADIUS

    def __init__(self, dt: float = 0.1):
        super().__init__()
        self.dt = dt
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.goal = np.zeros(2)

    def reset(self, seed) -> np.ndarray:
        rng = self._seeded(seed)
        self.pos = rng.uniform(-self.arena, self.arena, size=2)
        while True:
            self.goal = rng.uniform(-self.arena, self.arena, size=2)
            if np.linalg.norm(self.goal - self.pos) >= 2.0 * self.radius:
                break
        self.vel = np.zeros(2)
        self.t = 0
        return self.observation()

    def observation(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel, self.goal])

    def compute_reward(self, achieved, desired):
        return sparse_reward(achieved, desired, self.radius)

    def step(self, action):
        force = self._check_action(action)
        vel = np.clip(self.vel + force * self.dt, -self.max_speed, self.max_speed)
        pos = self.pos + vel * self.dt
        hit = np.abs(pos) > self.arena
        pos = np.clip(pos, -self.arena, self.arena)
        vel = np.where(hit, 0.0, vel)
        self.pos, self.vel = pos, vel
        reward = self.compute_reward(pos, self.goal)
        success = reward == 0.0
        truncated = self._tick() and not success
        info = {"truncated": truncated, "achieved_goal": pos.copy(), "is_success": success}
        return self.observation(), reward, success, info


ENVS = {
    "pendulum": Pendulum,
    "cartpole-swingup": CartpoleSwingup,
    "pointmass-goal": PointMassGoal,
}


def make_env(name: str) -> Env:
    try:
        return ENVS[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None
