from .agent import (
    ALGOS,
    Agent,
    AgentConfig,
    ddpg_update,
    make_topologies,
    sac_update,
    soft_update,
    td3_update,
    td_target,
)
from .buffer import Batch, ReplayBuffer, Transition
from .her import her_relabel, relabelled_size
from .train import CURVE_HEADER, CurveRow, LearningCurve, evaluate_policy, eval_seeds, train
from ..nn import split_rng


def run_streams(seed: int):
    """(env_rng, agent_rng) for one run; nothing else draws randomness."""
    env_rng, agent_rng = split_rng(seed, 2)
    return env_rng, agent_rng


def run_training(env, cfg: AgentConfig, seed: int, total_steps: int, sinks=(), log=None):
    env_rng, agent_rng = run_streams(seed)
    agent = Agent(cfg, agent_rng)
    curve = train(env, agent, total_steps, seed, env_rng=env_rng, sinks=sinks, log=log)
    return agent, curve
