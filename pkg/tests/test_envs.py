import math

import numpy as np
import pytest

from d2rl.envs import ENVS, CartpoleSwingup, Pendulum, PointMassGoal, make_env, wrap_angle
from d2rl.errors import DimensionError, NumericError
from d2rl.nn import make_rng

PENDULUM_FLOOR = -(math.pi ** 2 + 0.1 * 64 + 0.001 * 4)
CARTPOLE_FLOOR = -1.0 - 0.01 * 2.4 ** 2


def rollout(env, seed, steps, action_seed=0):
    rng = make_rng(action_seed)
    obs = [env.reset(seed)]
    rewards = []
    for _ in range(steps):
        a = rng.uniform(env.spec.action_low, env.spec.action_high)
        o, r, done, info = env.step(a)
        obs.append(o)
        rewards.append(r)
        if done or info["truncated"]:
            obs.append(env.reset(int(rng.integers(1 << 30))))
    return np.array(obs), np.array(rewards)


def test_registry():
    assert set(ENVS) == {"pendulum", "cartpole-swingup", "pointmass-goal"}
    assert isinstance(make_env("pendulum"), Pendulum)
    with pytest.raises(ValueError):
        make_env("ant")


@pytest.mark.parametrize("name", sorted(ENVS))
def test_reset_deterministic(name):
    a, b = make_env(name), make_env(name)
    np.testing.assert_array_equal(a.reset(123), b.reset(123))
    assert not np.array_equal(a.reset(1), b.reset(2))


@pytest.mark.parametrize("name", sorted(ENVS))
def test_trajectories_bit_identical(name):
    o1, r1 = rollout(make_env(name), 5, 300)
    o2, r2 = rollout(make_env(name), 5, 300)
    assert np.array_equal(o1, o2) and np.array_equal(r1, r2)


@pytest.mark.parametrize("name", sorted(ENVS))
def test_observation_dims(name):
    env = make_env(name)
    obs, _ = rollout(env, 0, 250)
    assert obs.shape[1] == env.spec.obs_dim
    assert np.isfinite(obs).all()


@pytest.mark.parametrize("name", sorted(ENVS))
def test_action_validation(name):
    env = make_env(name)
    env.reset(0)
    with pytest.raises(DimensionError):
        env.step(np.zeros(env.spec.action_dim + 1))
    with pytest.raises(NumericError):
        env.step(np.full(env.spec.action_dim, np.nan))


def test_reward_bounds_random_steps():
    floors = {"pendulum": (PENDULUM_FLOOR, 0.0), "cartpole-swingup": (CARTPOLE_FLOOR, 1.0),
              "pointmass-goal": (-1.0, 0.0)}
    for name, (lo, hi) in floors.items():
        _, rewards = rollout(make_env(name), 1, 100_000)
        assert rewards.min() >= lo and rewards.max() <= hi


def test_horizons_and_truncation():
    env = Pendulum()
    env.reset(0)
    for t in range(1, 201):
        _, _, done, info = env.step([0.0])
        assert not done
        assert info["truncated"] == (t == 200)
    env = CartpoleSwingup()
    env.reset(0)
    flags = [env.step([0.0])[3]["truncated"] for _ in range(500)]
    assert flags[-1] and not any(flags[:-1])


# --- pendulum ---------------------------------------------------------------------

def test_pendulum_reset_distribution():
    env = Pendulum()
    states = []
    for seed in range(10_000):
        env.reset(seed)
        states.append((env.theta, env.theta_dot))
    th, thd = np.array(states).T
    assert th.min() >= -math.pi and th.max() <= math.pi
    assert thd.min() >= -1 and thd.max() <= 1
    # spread over the whole interval, not a corner of it
    assert th.min() < -3.0 and th.max() > 3.0 and thd.min() < -0.99 and thd.max() > 0.99


def test_pendulum_equilibrium():
    env = Pendulum()
    env.reset(0)
    env.set_state(0.0, 0.0)
    obs, reward, done, _ = env.step([0.0])
    np.testing.assert_array_equal(obs, [1.0, 0.0, 0.0])
    assert reward == 0.0 and not done


def test_pendulum_reward_formula_and_clipping():
    env = Pendulum()
    env.reset(0)
    env.set_state(3 * math.pi / 2, 2.0)  # wraps to -pi/2
    _, reward, _, _ = env.step([5.0])  # clipped to 2
    assert reward == pytest.approx(-((math.pi / 2) ** 2 + 0.1 * 4 + 0.001 * 4), rel=1e-12)


def test_pendulum_worst_reward():
    env = Pendulum()
    env.reset(0)
    env.set_state(math.pi, 8.0)
    _, reward, _, _ = env.step([-2.0])
    assert reward == pytest.approx(PENDULUM_FLOOR, rel=1e-12)


def test_pendulum_speed_clamp():
    env = Pendulum()
    env.reset(0)
    env.set_state(1.0, 7.99)
    for _ in range(50):
        env.step([2.0])
        assert abs(env.theta_dot) <= 8.0


def test_pendulum_energy_drift_small_dt():
    env = Pendulum(dt=0.001)
    env.reset(0)
    env.set_state(2.0, 0.0)
    e0 = env.energy()
    drift = 0.0
    for _ in range(1000):
        env.step([0.0])
        drift = max(drift, abs(env.energy() - e0))
    assert drift < 0.01 * abs(e0)


def test_wrap_angle():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    for th in np.linspace(-20, 20, 401):
        w = wrap_angle(th)
        assert -math.pi < w <= math.pi
        assert math.cos(w) == pytest.approx(math.cos(th), abs=1e-9)


# --- cartpole ---------------------------------------------------------------------

def test_cartpole_starts_down():
    env = CartpoleSwingup()
    for seed in range(50):
        obs = env.reset(seed)
        assert obs[2] < -0.99  # cos(theta) near -1


def test_cartpole_track_and_speed_limits():
    env = CartpoleSwingup()
    env.reset(0)
    for _ in range(500):
        env.step([10.0])
        x, x_dot, _, th_dot = env.state
        assert abs(x) <= 2.4 and abs(x_dot) <= 10.0 and abs(th_dot) <= 25.0
    assert env.state[0] == 2.4


def test_cartpole_upright_rest_is_equilibrium():
    env = CartpoleSwingup()
    env.reset(0)
    env.state = np.zeros(4)
    obs, reward, _, _ = env.step([0.0])
    np.testing.assert_array_equal(obs, [0, 0, 1, 0, 0])
    assert reward == 1.0


# --- point mass -------------------------------------------------------------------

def test_pointmass_start_goal_separation():
    env = PointMassGoal()
    for seed in range(2000):
        obs = env.reset(seed)
        assert np.linalg.norm(obs[:2] - obs[-2:]) >= 0.1
        assert (np.abs(obs[:2]) <= 1).all() and (np.abs(obs[-2:]) <= 1).all()
        assert (obs[2:4] == 0).all()


def test_pointmass_success_terminates():
    env = PointMassGoal()
    env.reset(0)
    env.pos = env.goal.copy()
    env.vel = np.zeros(2)
    obs, reward, done, info = env.step([0.0, 0.0])
    assert reward == 0.0 and done and info["is_success"] and not info["truncated"]
    np.testing.assert_array_equal(info["achieved_goal"], obs[:2])


def test_pointmass_velocity_clamp_and_walls():
    env = PointMassGoal()
    env.reset(3)
    for _ in range(100):
        obs, _, done, _ = env.step([1.0, -1.0])
        assert (np.abs(obs[2:4]) <= 1.0).all() and (np.abs(obs[:2]) <= 1.0).all()
        if done:
            break


def test_pointmass_observation_layout():
    env = PointMassGoal()
    obs = env.reset(9)
    np.testing.assert_array_equal(obs[-2:], env.goal)
    assert env.spec.goal_dim == 2 and env.spec.obs_dim == 6


def test_scale_action():
    spec = Pendulum.spec
    np.testing.assert_array_equal(spec.scale_action([-1.0]), [-2.0])
    np.testing.assert_array_equal(spec.scale_action([1.0]), [2.0])
    np.testing.assert_array_equal(spec.scale_action([0.0]), [0.0])
