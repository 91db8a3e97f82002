"""Experiment runner: configs, seeded training runs, evaluation and summaries.

Run directory layout (one per seed)::

    <out>/<env>/<variant>/seed_<n>/
        manifest.json    config, config hash, seed, code version, status
        eval.csv         step,return_mean,return_std,episodes
        bias.csv         step,v_hat,g_hat,bias,variant,env,seed
        metrics.csv      training losses averaged over metrics_interval steps
        checkpoint.npz   final networks and Adam states

Random streams: every seed ``n`` feeds ``SeedSequence(n, spawn_key=(k,))``
with k = 0 init, 1 env, 2 exploration, 3 replay sampling and updates,
4 evaluation (the same start states at every evaluation), 5 probe.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import statistics
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .agents import Agent, HyperConfig
from .envs import make_env
from .neural import load_checkpoint, save_checkpoint
from .probe import BiasWriter, ProbeConfig, probe
from .replay import ReplayBuffer, Transition

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

STREAM_INIT, STREAM_ENV, STREAM_EXPLORE, STREAM_REPLAY, STREAM_EVAL, STREAM_PROBE = range(6)
EVAL_FIELDS = ["step", "return_mean", "return_std", "episodes"]
METRIC_FIELDS = ["step", "critic1_loss", "critic2_loss", "reward_mean", "r1_mean", "r2_mean",
                 "episode_return_mean", "episodes", "event"]


def stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


@dataclass
class RunConfig:
    env: str = "pendulum"
    agent: HyperConfig = field(default_factory=HyperConfig)
    seeds: list = field(default_factory=lambda: [0])
    total_steps: int = 200_000
    eval_interval: int = 5000
    eval_episodes: int = 10
    out_dir: str = "runs"
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    metrics_interval: int = 1000
    max_episode_steps: int | None = None
    checkpoint: bool = True

    def __post_init__(self):
        make_env(self.env)  # validates the name
        if not self.seeds or any(int(s) < 0 for s in self.seeds):
            raise ValueError("seeds must be a non-empty list of nonnegative integers")
        self.seeds = [int(s) for s in self.seeds]
        if self.total_steps < 0:
            raise ValueError("total_steps must be nonnegative")
        if self.eval_interval < 1 or self.eval_episodes < 1 or self.metrics_interval < 1:
            raise ValueError("eval_interval, eval_episodes and metrics_interval must be positive")

    @property
    def variant(self) -> str:
        return self.agent.variant

    def to_dict(self) -> dict:
        return {
            "env": {"name": self.env, "max_episode_steps": self.max_episode_steps},
            "agent": self.agent.to_dict(),
            "run": {"seeds": self.seeds, "total_steps": self.total_steps, "eval_interval": self.eval_interval,
                    "eval_episodes": self.eval_episodes, "out_dir": self.out_dir,
                    "metrics_interval": self.metrics_interval, "checkpoint": self.checkpoint},
            "probe": {"num_states": self.probe.num_states, "rollouts_per_state": self.probe.rollouts_per_state,
                      "interval": self.probe.interval, "tolerance": self.probe.tolerance},
        }

    def hash(self) -> str:
        """Digest of everything that affects results (not seeds or output location)."""
        d = self.to_dict()
        d["run"] = {k: v for k, v in d["run"].items() if k not in ("seeds", "out_dir")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def run_dir(self, seed: int) -> Path:
        return Path(self.out_dir) / self.env / self.variant / f"seed_{seed}"


def _set_dotted(tree: dict, key: str, value):
    parts = key.split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ValueError(f"config key {key!r} collides with a scalar")
    node[parts[-1]] = value


def config_from_dict(tree: dict) -> RunConfig:
    """Build a validated :class:`RunConfig` from ``{env, agent, run, probe}`` tables."""
    tree = {k: dict(v) if isinstance(v, dict) else v for k, v in tree.items()}
    unknown = set(tree) - {"env", "agent", "run", "probe"}
    if unknown:
        raise ValueError(f"unknown config sections {sorted(unknown)}")
    env = tree.get("env", {})
    run = tree.get("run", {})
    extra = set(env) - {"name", "max_episode_steps"}
    extra |= set(run) - {"seeds", "total_steps", "eval_interval", "eval_episodes", "out_dir",
                         "metrics_interval", "checkpoint"}
    if extra:
        raise ValueError(f"unknown config keys {sorted(extra)}")
    return RunConfig(
        env=env.get("name", "pendulum"),
        max_episode_steps=env.get("max_episode_steps"),
        agent=HyperConfig.from_dict(tree.get("agent", {})),
        probe=ProbeConfig(**tree.get("probe", {})),
        **run,
    )


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a TOML config with dotted keys (``agent.beta = 0.019``) and apply
    dotted-key ``overrides`` on top. Everything is validated up front."""
    tree = {}
    if path is not None:
        with open(path, "rb") as fh:
            tree = tomllib.load(fh)
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(tree, key, value)
    return config_from_dict(tree)


# ---------------------------------------------------------------------------
# evaluation


def rollout_episodes(agent, env_name: str, episodes: int, rng, max_episode_steps=None):
    """Noise-free episodes from fresh start states, stepped as one batch.

    Returns ``(undiscounted returns, final raw states)``.
    """
    env = make_env(env_name, max_episode_steps)
    states = np.stack([env.sample_start(rng) for _ in range(episodes)])
    returns = np.zeros(episodes)
    alive = np.ones(episodes, dtype=bool)
    final = states.copy()
    for _ in range(env.max_episode_steps):
        act = env.clip_action(agent.act(env.observe(states), mode="eval"))
        states, reward, terminal = env.dynamics(states, act)
        returns += np.where(alive, reward, 0.0)
        final[alive] = states[alive]
        alive &= ~terminal
        if not alive.any():
            break
    return returns, final


def evaluate(agent, env, episodes: int, rng):
    """Mean and population std of undiscounted returns over ``episodes`` episodes.

    ``env`` may be an environment instance or name; rollouts always run on a
    fresh copy so the caller's environment is untouched.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    name = env if isinstance(env, str) else env.name
    max_steps = None if isinstance(env, str) else env.max_episode_steps
    returns, _ = rollout_episodes(agent, name, episodes, rng, max_steps)
    # pstdev is exact, so identical returns give a std of exactly 0
    return float(np.mean(returns)), statistics.pstdev(returns.tolist())


# ---------------------------------------------------------------------------
# training


def _fmt(x):
    return "" if x is None else repr(float(x))


class _MetricsWindow:
    def __init__(self):
        self.reset()

    def reset(self):
        self.sums = {}
        self.counts = {}
        self.returns = []

    def add(self, m: dict):
        for k, v in m.items():
            if v is not None:
                self.sums[k] = self.sums.get(k, 0.0) + v
                self.counts[k] = self.counts.get(k, 0) + 1

    def row(self, step, event=""):
        mean = {k: self.sums[k] / self.counts[k] for k in self.sums}
        ret = float(np.mean(self.returns)) if self.returns else None
        return [step, _fmt(mean.get("critic1_loss")), _fmt(mean.get("critic2_loss")),
                _fmt(mean.get("reward_mean")), _fmt(mean.get("r1_mean")), _fmt(mean.get("r2_mean")),
                _fmt(ret), len(self.returns), event]


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_seed(cfg: RunConfig, seed: int) -> dict:
    """Train one agent and write its run directory. Returns the final manifest."""
    out = cfg.run_dir(seed)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.to_dict(), "config_hash": cfg.hash(), "seed": seed, "env": cfg.env,
                "variant": cfg.variant, "code_version": __version__, "status": "running"}
    _write_json(out / "manifest.json", manifest)

    env = make_env(cfg.env, cfg.max_episode_steps)
    hc = cfg.agent
    agent = Agent(hc, env.observation_dim, env.action_dim, env.action_low, env.action_high,
                  stream(seed, STREAM_INIT))
    buffer = ReplayBuffer(hc.buffer_capacity, env.observation_dim, env.action_dim, env.state_dim)
    rng_env = stream(seed, STREAM_ENV)
    rng_explore = stream(seed, STREAM_EXPLORE)
    rng_replay = stream(seed, STREAM_REPLAY)
    rng_probe = stream(seed, STREAM_PROBE)
    bias_writer = BiasWriter(out / "bias.csv", cfg.variant, cfg.env, seed)

    eval_fh = open(out / "eval.csv", "w", newline="")
    metrics_fh = open(out / "metrics.csv", "w", newline="")
    eval_csv, metrics_csv = csv.writer(eval_fh), csv.writer(metrics_fh)
    eval_csv.writerow(EVAL_FIELDS)
    metrics_csv.writerow(METRIC_FIELDS)
    window = _MetricsWindow()

    obs = env.reset(rng_env)
    ep_return = 0.0
    status = "completed"
    step = 0
    try:
        for step in range(cfg.total_steps + 1):
            if step % cfg.eval_interval == 0:
                mean, std = evaluate(agent, env, cfg.eval_episodes, stream(seed, STREAM_EVAL))
                eval_csv.writerow([step, repr(mean), repr(std), cfg.eval_episodes])
                eval_fh.flush()
            if cfg.probe.interval and step > 0 and step % cfg.probe.interval == 0:
                rec = probe(agent, buffer, env, cfg.probe, hc.gamma, step, rng_probe)
                if rec is None:
                    log.info("seed %d step %d: buffer too small for the bias probe", seed, step)
                else:
                    bias_writer.write(rec)
            if step == cfg.total_steps:
                break

            action = agent.act(obs, rng_explore, "explore", step)
            env_state = env.state.copy()
            next_obs, reward, terminated, truncated = env.step(action)
            buffer.push(Transition(obs, action, reward, next_obs, terminated), env_state)
            ep_return += reward
            if terminated or truncated:
                window.returns.append(ep_return)
                ep_return = 0.0
                obs = env.reset(rng_env)
            else:
                obs = next_obs

            m = agent.train_step(buffer, rng_replay, step)
            if m is not None:
                window.add(m)
                if not all(math.isfinite(v) for v in m.values() if v is not None):
                    raise FloatingPointError(f"non-finite training metrics at step {step + 1}")
            if (step + 1) % cfg.metrics_interval == 0:
                if not agent.params.all_finite():
                    raise FloatingPointError(f"non-finite parameters at step {step + 1}")
                metrics_csv.writerow(window.row(step + 1))
                window.reset()
    except FloatingPointError as exc:
        status = "aborted"
        metrics_csv.writerow(window.row(step + 1, event=f"abort: {exc}"))
        log.error("seed %d aborted: %s", seed, exc)
    finally:
        eval_fh.close()
        metrics_fh.close()

    if cfg.checkpoint:
        save_checkpoint(out / "checkpoint.npz", agent.params.nets(), agent.params.adam,
                        meta={"variant": cfg.variant, "env": cfg.env, "seed": seed, "step": step})
    manifest.update(status=status, steps_completed=step)
    _write_json(out / "manifest.json", manifest)
    return manifest


def run(cfg: RunConfig, workers: int = 1) -> list:
    """Run every seed of ``cfg``; seeds are independent and may run in parallel."""
    if workers > 1 and len(cfg.seeds) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    return [run_seed(cfg, s) for s in cfg.seeds]


def load_agent(run_dir) -> Agent:
    """Rebuild the final agent of a run directory from its checkpoint."""
    run_dir = Path(run_dir)
    man = json.loads((run_dir / "manifest.json").read_text())
    cfg = config_from_dict(man["config"])
    env = make_env(cfg.env)
    agent = Agent(cfg.agent, env.observation_dim, env.action_dim, env.action_low, env.action_high,
                  np.random.default_rng(0))
    nets, adam, _ = load_checkpoint(run_dir / "checkpoint.npz")
    for name, net in nets.items():
        getattr(agent.params, name).set_params(net.theta)
    agent.params.adam.update(adam)
    return agent


# ---------------------------------------------------------------------------
# summaries


def find_runs(paths) -> list:
    """Run directories (those holding a manifest) under each of ``paths``."""
    found = []
    for p in paths:
        p = Path(p)
        if not p.exists():
            raise FileNotFoundError(f"run directory not found: {p}")
        if (p / "manifest.json").exists():
            found.append(p)
        else:
            found.extend(sorted(m.parent for m in p.rglob("manifest.json")))
    if not found:
        raise FileNotFoundError(f"no completed runs under: {', '.join(str(p) for p in paths)}")
    return found


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class SummaryRow:
    env: str
    variant: str
    mean: float
    std: float
    seeds: int
    flagged: bool  # some seed had fewer evaluations than requested

    def as_list(self):
        return [self.env, self.variant, repr(self.mean), repr(self.std), self.seeds, int(self.flagged)]


def summarize(paths, last: int = 10) -> list:
    """Mean of the last ``last`` evaluations per run, then mean +/- population
    std across seeds for each (env, variant)."""
    groups = {}
    for d in find_runs(paths):
        man = json.loads((d / "manifest.json").read_text())
        rows = read_csv(d / "eval.csv")
        if not rows:
            continue
        tail = rows[-last:]
        final = float(np.mean([float(r["return_mean"]) for r in tail]))
        g = groups.setdefault((man["env"], man["variant"]), {"finals": [], "flag": False})
        g["finals"].append(final)
        g["flag"] |= len(rows) < last
    return [SummaryRow(env, var, float(np.mean(g["finals"])), float(np.std(g["finals"])), len(g["finals"]), g["flag"])
            for (env, var), g in sorted(groups.items())]


def bias_report(paths, last: int = 5) -> list:
    """Mean bias over the last ``last`` probes per run, aggregated over seeds."""
    groups = {}
    for d in find_runs(paths):
        rows = read_csv(d / "bias.csv")
        if not rows:
            continue
        man = json.loads((d / "manifest.json").read_text())
        val = float(np.mean([float(r["bias"]) for r in rows[-last:]]))
        g = groups.setdefault((man["env"], man["variant"]), {"vals": [], "flag": False})
        g["vals"].append(val)
        g["flag"] |= len(rows) < last
    return [SummaryRow(env, var, float(np.mean(g["vals"])), float(np.std(g["vals"])), len(g["vals"]), g["flag"])
            for (env, var), g in sorted(groups.items())]


def write_summary(rows, csv_path=None, value_name="final_return") -> str:
    """Optionally write ``rows`` as CSV; return an aligned text table."""
    header = ["env", "variant", f"{value_name}_mean", f"{value_name}_std", "seeds", "flagged"]
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow(r.as_list())
    table = [["env", "variant", value_name, "seeds"]]
    for r in rows:
        table.append([r.env, r.variant, f"{r.mean:.3f} ± {r.std:.3f}" + (" *" if r.flagged else ""), str(r.seeds)])
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in table]
    if any(r.flagged for r in rows):
        lines.append("* fewer entries than requested; all available entries used")
    return "\n".join(lines)
