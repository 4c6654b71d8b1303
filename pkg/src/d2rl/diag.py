"""Ablation sweeps and the linear input-decodability probe."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .algo import AgentConfig, LearningCurve, run_training
from .arch import Kind, Network
from .envs import make_env

FINAL_WINDOW = 5
AGGREGATE_HEADER = ("axis_value", "final_return_mean", "final_return_sd", "num_seeds")
PROBE_HEADER = ("layer", "representation", "width", "mse", "r2", "samples")
RIDGE = 1e-6

AXES = ("num_layers", "topology", "component")
COMPONENTS = ("both", "policy_only", "critic_only", "neither")
# depth of the plain MLP that stands in for the non-dense network in component ablations
VANILLA_BASELINE_LAYERS = 2


@dataclass(frozen=True)
class SweepSpec:
    base: AgentConfig
    axis: str
    values: tuple
    seeds: tuple[int, ...]
    env: str
    total_steps: int

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.values or not self.seeds:
            raise ValueError("a sweep needs at least one axis value and one seed")
        if self.axis == "component":
            bad = [v for v in self.values if v not in COMPONENTS]
            if bad:
                raise ValueError(f"unknown component settings {bad}")
        if self.axis == "topology":
            for v in self.values:
                Kind(v)


def config_for(base: AgentConfig, axis: str, value) -> AgentConfig:
    """The base config with one axis value applied; nothing else changes."""
    pt, ct = base.policy_topology, base.critic_topology
    if axis == "num_layers":
        pt, ct = replace(pt, num_hidden_layers=int(value)), replace(ct, num_hidden_layers=int(value))
    elif axis == "topology":
        pt, ct = replace(pt, kind=Kind(value)), replace(ct, kind=Kind(value))
    else:
        layers = pt.num_hidden_layers
        dense = dict(kind=Kind.DENSE, num_hidden_layers=layers)
        plain = dict(kind=Kind.VANILLA, num_hidden_layers=VANILLA_BASELINE_LAYERS)
        policy_dense = value in ("both", "policy_only")
        critic_dense = value in ("both", "critic_only")
        pt = replace(pt, **(dense if policy_dense else plain))
        ct = replace(ct, **(dense if critic_dense else plain))
    return replace(base, policy_topology=pt, critic_topology=ct)


@dataclass
class RunRecord:
    axis_value: str
    seed: int
    curve: LearningCurve

    @property
    def final_return(self) -> float:
        return self.curve.final_window(FINAL_WINDOW)


@dataclass
class SweepResult:
    runs: list[RunRecord] = field(default_factory=list)

    def aggregate(self, order=None) -> list[tuple[str, float, float, int]]:
        keys = order if order is not None else list(dict.fromkeys(r.axis_value for r in self.runs))
        rows = []
        for key in keys:
            finals = [r.final_return for r in self.runs if r.axis_value == key]
            rows.append((key, float(np.mean(finals)), float(np.std(finals)), len(finals)))
        return rows

    def aggregate_csv(self, order=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(AGGREGATE_HEADER)
        for key, mean, sd, n in self.aggregate(order):
            writer.writerow([key, repr(mean), repr(sd), n])
        return buf.getvalue()


def sweep_jobs(spec: SweepSpec) -> list[tuple[str, int, AgentConfig]]:
    return [(str(v), seed, config_for(spec.base, spec.axis, v)) for v in spec.values for seed in spec.seeds]


def _run_job(job) -> RunRecord:
    label, seed, cfg, env_name, total_steps, out_dir = job
    _, curve = run_training(make_env(env_name), cfg, seed, total_steps)
    if out_dir is not None:
        run_dir = Path(out_dir) / label / f"seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "curve.csv").write_text(curve.to_csv())
    return RunRecord(label, seed, curve)


def run_sweep(spec: SweepSpec, out_dir=None, workers: int = 1, jobs=None) -> SweepResult:
    """One full training run per (axis value, seed); results keyed, never order-dependent.

    With ``out_dir`` each run writes ``<value>/seed_<n>/curve.csv`` and the
    sweep writes ``aggregate.csv``.
    """
    jobs = sweep_jobs(spec) if jobs is None else jobs
    payload = [(label, seed, cfg, spec.env, spec.total_steps, out_dir) for label, seed, cfg in jobs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_job, payload))
    else:
        records = [_run_job(p) for p in payload]
    records.sort(key=lambda r: ([str(v) for v in spec.values].index(r.axis_value), spec.seeds.index(r.seed)))
    result = SweepResult(records)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "aggregate.csv").write_text(result.aggregate_csv([str(v) for v in spec.values]))
    return result


# --- probe ---------------------------------------------------------------

@dataclass
class ProbeRow:
    layer: int
    representation: str  # "output" (h_k) or "concat" (dense layer input [h_(k-1), x])
    width: int
    mse: float
    r2: float
    samples: int


@dataclass
class ProbeReport:
    rows: list[ProbeRow]

    def get(self, layer: int, representation: str = "output") -> ProbeRow:
        for row in self.rows:
            if row.layer == layer and row.representation == representation:
                return row
        raise KeyError((layer, representation))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(PROBE_HEADER)
        for r in self.rows:
            writer.writerow([r.layer, r.representation, r.width, repr(r.mse), repr(r.r2), r.samples])
        return buf.getvalue()


def linear_decode(features: np.ndarray, targets: np.ndarray, ridge: float = RIDGE) -> tuple[float, float]:
    """Ridge-regularised affine fit features -> targets; returns (mse, r2).

    R^2 is ``1 - tr(S_tot^-1 S_res) / d``, the whitened multi-output form,
    which is unchanged by any invertible affine map of the targets.
    """
    h = features - features.mean(axis=0)
    x = targets - targets.mean(axis=0)
    u, s, vt = np.linalg.svd(h, full_matrices=False)
    shrink = s / (s * s + ridge)
    coef = vt.T @ (shrink[:, None] * (u.T @ x))
    resid = x - h @ coef
    mse = float(np.mean(resid * resid))
    s_tot = x.T @ x
    s_res = resid.T @ resid
    r2 = 1.0 - float(np.trace(np.linalg.pinv(s_tot) @ s_res)) / x.shape[1]
    return mse, r2


def input_probe(net: Network, inputs) -> ProbeReport:
    """How linearly recoverable the raw input is from each hidden layer."""
    inputs = np.asarray(inputs, dtype=np.float64)
    reps = net.hidden_representations(inputs)
    dense = net.topology.kind is Kind.DENSE
    probes = []
    for k, rep in enumerate(reps, start=1):
        probes.append((k, "output", rep["output"]))
        if dense and k > 1:
            probes.append((k, "concat", rep["input"]))
    n = inputs.shape[0]
    widest = max(f.shape[1] for _, _, f in probes)
    if n < 10 * widest:
        raise ValueError(f"probe needs at least {10 * widest} samples, got {n}")
    rows = []
    for k, name, feats in probes:
        mse, r2 = linear_decode(feats.astype(np.float64), inputs)
        rows.append(ProbeRow(k, name, feats.shape[1], mse, r2, n))
    return ProbeReport(rows)


def collect_observations(env_name: str, samples: int, seed: int) -> np.ndarray:
    """Observations visited by a uniform-random policy, for probing."""
    env = make_env(env_name)
    rng = np.random.default_rng(seed)
    obs = env.reset(int(rng.integers(2 ** 63 - 1)))
    out = []
    while len(out) < samples:
        out.append(obs)
        action = env.spec.scale_action(rng.uniform(-1.0, 1.0, env.spec.action_dim))
        obs, _, done, info = env.step(action)
        if done or info["truncated"]:
            obs = env.reset(int(rng.integers(2 ** 63 - 1)))
    return np.array(out)
