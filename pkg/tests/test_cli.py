import csv
import io
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from d2rl.algo import LearningCurve
from d2rl.arch import Kind
from d2rl.cli import RunConfig, format_config, main, parse_config
from d2rl.errors import ConfigError

TINY = """
# small enough to train in a couple of seconds
hidden_dim = 16
num_layers = 2
total_steps = 300
warmup_steps = 100
eval_interval = 100
eval_episodes = 2
batch_size = 16
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# --- parsing -------------------------------------------------------------------

def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert (cfg.gamma, cfg.batch_size, cfg.hidden_dim, cfg.initial_temperature) == (0.99, 256, 256, 0.1)
    assert (cfg.env, cfg.algo, cfg.arch, cfg.num_layers) == ("pendulum", "sac", "dense", 4)
    assert cfg.eval_episodes == 10 and cfg.tau == 0.005


def test_dense_four_layers_is_the_default_agent():
    agent_cfg = parse_config("arch = dense\nnum_layers = 4").agent_config()
    for t in (agent_cfg.policy_topology, agent_cfg.critic_topology):
        assert t.kind is Kind.DENSE and t.num_hidden_layers == 4 and t.hidden_dim == 256
    assert agent_cfg == parse_config("").agent_config()


def test_per_network_overrides():
    cfg = parse_config("arch = dense\npolicy_arch = vanilla\ncritic_layers = 2")
    a = cfg.agent_config()
    assert a.policy_topology.kind is Kind.VANILLA and a.policy_topology.num_hidden_layers == 4
    assert a.critic_topology.kind is Kind.DENSE and a.critic_topology.num_hidden_layers == 2


@pytest.mark.parametrize("text,fragment", [
    ("gamma = 1.5", "gamma"),
    ("gamma = -0.5", "gamma"),
    ("tau = 0", "tau"),
    ("hidden_dim = 0", "hidden_dim"),
    ("learning_rate = 0.1", "unknown key"),
    ("gamma = 0.9\ngamma = 0.8", "duplicate"),
    ("batch_size = 2.5", "batch_size"),
    ("learn_alpha = yes", "learn_alpha"),
    ("gamma", "expected"),
    ("env = ant", "env"),
    ("arch = wide", "arch"),
    ("seeds = ", "seeds"),
    ("seeds = a, b", "seeds"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_comments_and_whitespace():
    cfg = parse_config("  # header\n\ngamma   =   0.95   # trailing\n\talgo=td3\n")
    assert cfg.gamma == 0.95 and cfg.algo == "td3"


def test_values_typed():
    cfg = parse_config("target_entropy = -2.5\nlearn_alpha = false\nseeds = 3, 4\nsweep_values = dense, vanilla")
    assert cfg.target_entropy == -2.5 and cfg.learn_alpha is False
    assert cfg.seeds == (3, 4) and cfg.sweep_values == ("dense", "vanilla")
    assert parse_config("target_entropy = none").target_entropy is None


def test_resolved_config_reparses_identically():
    cfg = parse_config(TINY + "algo = td3\nseed = 9\npolicy_arch = residual\ntarget_entropy = -1.25")
    text = format_config(cfg)
    assert parse_config(text) == cfg
    assert format_config(parse_config(text)) == text
    # every key is spelled out
    assert len(text.splitlines()) == len(RunConfig.__dataclass_fields__)


@settings(max_examples=60, deadline=None)
@given(gamma=st.floats(0.0, 0.999999), tau=st.floats(1e-6, 1.0), lr=st.floats(1e-7, 1.0),
       hidden=st.integers(1, 512), seed=st.integers(0, 2 ** 31), kind=st.sampled_from(["vanilla", "dense", "residual"]))
def test_resolved_roundtrip_property(gamma, tau, lr, hidden, seed, kind):
    cfg = parse_config(f"gamma = {gamma!r}\ntau = {tau!r}\nlr_actor = {lr!r}\nhidden_dim = {hidden}\n"
                       f"seed = {seed}\narch = {kind}")
    assert parse_config(format_config(cfg)) == cfg


def test_overrides_win():
    cfg = parse_config("seed = 1\ntotal_steps = 10", {"seed": 5, "total_steps": 20})
    assert (cfg.seed, cfg.total_steps) == (5, 20)


# --- commands ---------------------------------------------------------------------

def test_train_then_eval_reproduces_final_row(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", write(tmp_path, TINY), "--out", str(out), "--seed", "3"]) == 0
    for name in ("curve.csv", "config.resolved", "final.ckpt"):
        assert (out / name).exists()
    assert sorted(p.name for p in (out / "checkpoints").iterdir()) == [
        "step_00000100.ckpt", "step_00000200.ckpt", "step_00000300.ckpt"]
    curve = LearningCurve.from_csv((out / "curve.csv").read_text())
    assert [r.env_step for r in curve.rows] == [100, 200, 300]
    assert parse_config((out / "config.resolved").read_text()).seed == 3
    capsys.readouterr()

    assert main(["eval", str(out / "final.ckpt"), "--env", "pendulum", "--episodes", "2", "--seed", "3"]) == 0
    printed = capsys.readouterr().out.split()
    assert float(printed[1]) == curve.rows[-1].eval_return_mean
    assert float(printed[3]) == curve.rows[-1].eval_return_sd


def test_curve_csv_parses_as_rfc4180(tmp_path):
    out = tmp_path / "run"
    main(["train", "--config", write(tmp_path, TINY), "--out", str(out)])
    rows = list(csv.reader(io.StringIO((out / "curve.csv").read_text())))
    assert rows[0] == ["env_step", "eval_return_mean", "eval_return_sd", "critic_loss", "actor_loss", "alpha", "wall_ms"]
    assert all(len(r) == 7 for r in rows)


def test_steps_flag(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", write(tmp_path, TINY), "--out", str(out), "--steps", "150"]) == 0
    curve = LearningCurve.from_csv((out / "curve.csv").read_text())
    assert [r.env_step for r in curve.rows] == [100, 150]


def test_goal_env_writes_success_file(tmp_path):
    out = tmp_path / "run"
    text = TINY + "env = pointmass-goal\nalgo = ddpg\nher_k = 4\n"
    assert main(["train", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    lines = (out / "success.csv").read_text().splitlines()
    assert lines[0] == "env_step,success_rate" and len(lines) == 4


def test_eval_on_other_env_is_dimension_error(tmp_path, capsys):
    out = tmp_path / "run"
    main(["train", "--config", write(tmp_path, TINY), "--out", str(out)])
    assert main(["eval", str(out / "final.ckpt"), "--env", "cartpole-swingup"]) == 3
    assert "expects input" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["train", "--config", write(tmp_path, "gamma = 1.5"), "--out", str(tmp_path / "x")]) == 2
    assert "gamma" in capsys.readouterr().err
    assert main(["train", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_bad_checkpoint_exit_codes(tmp_path):
    assert main(["eval", str(tmp_path / "missing.ckpt")]) == 3
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + bytes(16))
    assert main(["eval", str(bad)]) == 3
    assert main(["probe", str(bad)]) == 3


def test_sweep_two_values_three_seeds(tmp_path, capsys):
    text = TINY + "total_steps = 120\nsweep_axis = topology\nsweep_values = vanilla, dense\nseeds = 0, 1, 2\n"
    text = text.replace("total_steps = 300\n", "")
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    run_dirs = sorted(p.parent for p in Path(out).glob("*/seed_*/curve.csv"))
    assert len(run_dirs) == 6
    agg = list(csv.reader(io.StringIO((out / "aggregate.csv").read_text())))
    assert agg[0] == ["axis_value", "final_return_mean", "final_return_sd", "num_seeds"]
    assert [r[0] for r in agg[1:]] == ["vanilla", "dense"] and all(r[3] == "3" for r in agg[1:])


def test_probe_command(tmp_path, capsys):
    out = tmp_path / "run"
    main(["train", "--config", write(tmp_path, TINY + "arch = dense\n"), "--out", str(out)])
    assert main(["probe", str(out / "final.ckpt"), "--env", "pendulum", "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO((out / "probe.csv").read_text())))
    concat = [r for r in rows if r["representation"] == "concat"]
    assert concat and all(abs(float(r["r2"]) - 1.0) <= 1e-9 for r in concat)
    assert main(["probe", str(out / "final.ckpt"), "--network", "q1", "--out", str(tmp_path / "q")]) == 0
