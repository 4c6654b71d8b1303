"""``d2rl`` command line: train, eval, sweep and probe.

Run configuration is a flat text file of ``key = value`` lines; ``#``
starts a comment. Every key has a default, so an empty file is a valid
config. The fully resolved config is echoed next to every run's output.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .algo import ALGOS, AgentConfig, LearningCurve, evaluate_policy, make_topologies, run_training
from .arch import Kind
from .diag import AXES, SweepSpec, collect_observations, input_probe, run_sweep
from .envs import ENVS, make_env
from .errors import CheckpointError, ConfigError, D2RLError, DimensionError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

_KINDS = tuple(k.value for k in Kind)


@dataclass(frozen=True)
class RunConfig:
    env: str = "pendulum"
    algo: str = "sac"
    arch: str = "dense"
    num_layers: int = 4
    policy_arch: str = ""  # "" inherits arch
    critic_arch: str = ""
    policy_layers: int = 0  # 0 inherits num_layers
    critic_layers: int = 0
    hidden_dim: int = 256
    seed: int = 0
    total_steps: int = 30000
    out: str = "runs/default"
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_alpha: float = 1e-4
    batch_size: int = 256
    gamma: float = 0.99
    tau: float = 0.005
    initial_temperature: float = 0.1
    target_entropy: float | None = None
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
    dtype: str = "float32"
    sweep_axis: str = "num_layers"
    sweep_values: tuple = ("1", "2", "4", "8")
    seeds: tuple = (0, 1, 2, 3, 4)

    def resolved(self) -> "RunConfig":
        """Fill the per-network keys left to inherit from ``arch`` / ``num_layers``."""
        return _replace(self, policy_arch=self.policy_arch or self.arch,
                        critic_arch=self.critic_arch or self.arch,
                        policy_layers=self.policy_layers or self.num_layers,
                        critic_layers=self.critic_layers or self.num_layers)

    def agent_config(self) -> AgentConfig:
        spec = ENVS[self.env]().spec
        r = self.resolved()
        policy, critic = make_topologies(self.algo, spec.obs_dim, spec.action_dim, r.policy_arch, r.critic_arch,
                                         self.hidden_dim, r.policy_layers, r.critic_layers)
        keys = {f.name for f in fields(AgentConfig)} - {"algo", "policy_topology", "critic_topology"}
        try:
            return AgentConfig(self.algo, policy, critic, **{k: getattr(self, k) for k in keys})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def sweep_spec(self) -> SweepSpec:
        try:
            return SweepSpec(self.agent_config(), self.sweep_axis, tuple(self.sweep_values),
                             tuple(self.seeds), self.env, self.total_steps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _replace(cfg: RunConfig, **changes) -> RunConfig:
    vals = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    vals.update(changes)
    return RunConfig(**vals)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_CHOICES = {
    "env": tuple(ENVS), "algo": ALGOS, "arch": _KINDS, "policy_arch": ("",) + _KINDS,
    "critic_arch": ("",) + _KINDS, "dtype": ("float32", "float64"), "sweep_axis": AXES,
}
_NON_NEGATIVE = ("policy_layers", "critic_layers", "seed", "warmup_steps", "her_k")
_POSITIVE = ("num_layers", "hidden_dim", "total_steps", "batch_size", "policy_delay", "eval_interval",
             "eval_episodes", "buffer_capacity", "lr_actor", "lr_critic", "lr_alpha", "initial_temperature")


def _parse_value(key: str, raw: str):
    typ = _FIELDS[key].type
    try:
        if typ == "bool":
            if raw.lower() not in ("true", "false"):
                raise ValueError
            return raw.lower() == "true"
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "float | None":
            return None if raw.lower() == "none" else float(raw)
        if typ == "tuple":
            items = tuple(v.strip() for v in raw.split(",") if v.strip())
            return tuple(int(v) for v in items) if key == "seeds" else items
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {typ}") from None


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _validate(cfg: RunConfig) -> None:
    for key, choices in _CHOICES.items():
        if getattr(cfg, key) not in choices:
            raise ConfigError(f"{key} must be one of {list(choices)}, got {getattr(cfg, key)!r}")
    for key in _NON_NEGATIVE:
        if getattr(cfg, key) < 0:
            raise ConfigError(f"{key} must be >= 0")
    for key in _POSITIVE:
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"{key} must be positive")
    for key in ("gamma", "tau", "policy_noise", "noise_clip", "exploration_noise"):
        if not math.isfinite(getattr(cfg, key)):
            raise ConfigError(f"{key} must be finite")
    if not 0.0 <= cfg.gamma < 1.0:
        raise ConfigError(f"gamma must lie in [0, 1), got {cfg.gamma}")
    if not 0.0 < cfg.tau <= 1.0:
        raise ConfigError(f"tau must lie in (0, 1], got {cfg.tau}")
    if not cfg.seeds:
        raise ConfigError("seeds must list at least one seed")
    if not cfg.sweep_values:
        raise ConfigError("sweep_values must list at least one value")
    cfg.agent_config()


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Read ``key = value`` lines into a validated :class:`RunConfig`.

    Unknown keys, repeated keys, unreadable values and out-of-range values
    raise :class:`ConfigError`. ``overrides`` (already typed) win over the file.
    """
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    values.update(overrides or {})
    cfg = RunConfig(**values).resolved()
    _validate(cfg)
    return cfg


def format_config(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def load_config(path, overrides: dict | None = None) -> RunConfig:
    text = ""
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        text = p.read_text(encoding="utf-8")
    return parse_config(text, {k: v for k, v in (overrides or {}).items() if v is not None})


# --- checkpoints -----------------------------------------------------------

def agent_tensors(agent) -> dict:
    tensors = ckpt.network_tensors("policy", agent.policy)
    for i, critic in enumerate(agent.critics, start=1):
        tensors.update(ckpt.network_tensors(f"q{i}", critic))
    tensors["log_alpha"] = agent.log_alpha.copy()
    return tensors


def load_policy(path):
    return ckpt.network_from_tensors("policy", ckpt.load(path))


def check_env_dims(net, env) -> None:
    topo, spec = net.topology, env.spec
    want = spec.obs_dim if topo.head.value != "q" else spec.obs_dim + spec.action_dim
    if topo.input_dim != want or (topo.head.value != "q" and topo.action_dim != spec.action_dim):
        raise DimensionError(
            f"checkpoint network expects input {topo.input_dim} / action {topo.action_dim}, "
            f"environment has obs {spec.obs_dim} / action {spec.action_dim}"
        )


# --- commands ----------------------------------------------------------------

def cmd_train(cfg: RunConfig, out=None) -> LearningCurve:
    out = Path(out or cfg.out)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(format_config(cfg), encoding="utf-8")
    curve = LearningCurve()
    goal_env = ENVS[cfg.env].spec.goal_dim is not None

    def sink(row, agent):
        curve.append(row)
        (out / "curve.csv").write_text(curve.to_csv())
        if goal_env:
            # success rate has no column in the fixed curve format; it gets its own file
            lines = ["env_step,success_rate"] + [f"{r.env_step},{r.success_rate!r}" for r in curve.rows]
            (out / "success.csv").write_text("\n".join(lines) + "\n")
        tensors = agent_tensors(agent)
        ckpt.save(out / "checkpoints" / f"step_{row.env_step:08d}.ckpt", tensors)
        ckpt.save(out / "final.ckpt", tensors)

    def log(row):
        print(f"step {row.env_step:>8d}  return {row.eval_return_mean:10.2f} ± {row.eval_return_sd:.2f}", flush=True)

    run_training(make_env(cfg.env), cfg.agent_config(), cfg.seed, cfg.total_steps, sinks=(sink,), log=log)
    return curve


def cmd_eval(checkpoint, env_name: str, episodes: int, seed: int = 0) -> tuple[float, float]:
    policy = load_policy(checkpoint)
    env = make_env(env_name)
    check_env_dims(policy, env)
    returns, success = evaluate_policy(policy, env, seed, episodes)
    mean, sd = float(np.mean(returns)), float(np.std(returns))
    line = f"return {mean!r} ± {sd!r} over {episodes} episodes"
    if env.spec.goal_dim is not None:
        line += f"; success rate {float(np.mean(success))!r}"
    print(line)
    return mean, sd


def cmd_sweep(cfg: RunConfig, out=None, workers: int = 1):
    out = Path(out or cfg.out)
    spec = cfg.sweep_spec()
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(format_config(cfg), encoding="utf-8")
    result = run_sweep(spec, out_dir=out, workers=workers)
    for value, mean, sd, n in result.aggregate([str(v) for v in spec.values]):
        print(f"{cfg.sweep_axis}={value}: {mean:.2f} ± {sd:.2f} ({n} seeds)")
    return result


def cmd_probe(checkpoint, env_name: str, samples: int | None = None, seed: int = 0, out=".", network="policy"):
    tensors = ckpt.load(checkpoint)
    net = ckpt.network_from_tensors(network, tensors)
    env = make_env(env_name)
    check_env_dims(net, env)
    topo = net.topology
    widest = topo.hidden_dim + (topo.input_dim if topo.kind is Kind.DENSE else 0)
    samples = samples or 10 * widest
    inputs = collect_observations(env_name, samples, seed)
    if network != "policy":
        rng = np.random.default_rng(seed)
        inputs = np.hstack([inputs, rng.uniform(-1.0, 1.0, (samples, env.spec.action_dim))])
    report = input_probe(net, inputs)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "probe.csv").write_text(report.to_csv())
    for r in report.rows:
        print(f"layer {r.layer} {r.representation:>6s}  r2 {r.r2:.6f}  mse {r.mse:.3e}")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="d2rl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--steps", type=int, help="override total_steps")

    p = sub.add_parser("train", help="train one agent")
    run_flags(p)
    p = sub.add_parser("sweep", help="run an ablation sweep")
    run_flags(p)
    p.add_argument("--workers", type=int, default=1, help="parallel run workers")

    p = sub.add_parser("eval", help="score a checkpoint's deterministic policy")
    p.add_argument("checkpoint", help="a .ckpt file written by train")
    p.add_argument("--env", default="pendulum", help="environment name (default pendulum)")
    p.add_argument("--episodes", type=int, default=10, help="deterministic episodes (default 10)")
    p.add_argument("--seed", type=int, default=0, help="run seed the eval episodes derive from")

    p = sub.add_parser("probe", help="linear input-reconstruction probe of a checkpoint")
    p.add_argument("checkpoint", help="a .ckpt file written by train")
    p.add_argument("--env", default="pendulum", help="environment the observations come from")
    p.add_argument("--samples", type=int, help="observations to collect (default: the minimum the probe needs)")
    p.add_argument("--seed", type=int, default=0, help="seed of the random rollouts")
    p.add_argument("--out", default=".", help="directory for probe.csv")
    p.add_argument("--network", default="policy", help="policy, q1 or q2")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("train", "sweep"):
            cfg = load_config(args.config, {"seed": args.seed, "out": args.out, "total_steps": args.steps})
            if args.command == "train":
                cmd_train(cfg)
            else:
                cmd_sweep(cfg, workers=args.workers)
        elif args.command == "eval":
            if args.episodes < 1:
                raise ConfigError("--episodes must be positive")
            cmd_eval(args.checkpoint, args.env, args.episodes, args.seed)
        else:
            cmd_probe(args.checkpoint, args.env, args.samples, args.seed, args.out, args.network)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (D2RLError, CheckpointError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
