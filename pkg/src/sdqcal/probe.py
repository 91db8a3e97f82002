"""Value-estimation bias: critic estimates against Monte Carlo returns.

For states sampled from the replay buffer the probe compares the critics'
value of the evaluation action with the discounted return actually collected
by rolling out the same noise-free policy from those states.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BIAS_FIELDS = ["step", "v_hat", "g_hat", "bias", "variant", "env", "seed"]


@dataclass(frozen=True)
class BiasRecord:
    step: int
    v_hat_mean: float
    g_hat_mean: float
    num_states: int
    num_rollouts_per_state: int

    @property
    def bias(self) -> float:
        return self.v_hat_mean - self.g_hat_mean


@dataclass
class ProbeConfig:
    num_states: int = 200
    rollouts_per_state: int = 3
    interval: int = 10_000
    tolerance: float = 1e-3  # horizon chosen so that gamma ** horizon < tolerance

    def __post_init__(self):
        if self.num_states < 1 or self.rollouts_per_state < 1 or self.interval < 0:
            raise ValueError("bad probe settings")
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must lie in (0, 1)")


def horizon_for(gamma: float, tolerance: float = 1e-3) -> int:
    """Smallest H with ``gamma ** H < tolerance``."""
    if gamma <= 0:
        return 1
    h = math.ceil(math.log(tolerance) / math.log(gamma))
    while gamma ** h >= tolerance:
        h += 1
    return max(h, 1)


def truncation_bound(reward_bound: float, gamma: float, horizon: int) -> float:
    return reward_bound * gamma ** horizon / (1.0 - gamma)


def estimate_vhat(agent, states) -> float:
    """Mean critic value at the evaluation action over ``states``."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or len(states) == 0:
        raise ValueError("need a non-empty batch of states")
    actions = agent.act(states, mode="eval")
    return float(np.mean(agent.value(states, actions)))


def rollout_returns(env, agent, env_states, gamma: float, horizon: int) -> np.ndarray:
    """Discounted noise-free returns from each raw env state, run as one batch.

    Uses the environment's batched transition model, so the result equals
    ``set_state`` followed by single-instance stepping, row by row.
    """
    states = np.array(env_states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != env.state_dim:
        raise ValueError(f"{env.name} states must have shape (N, {env.state_dim}), got {states.shape}")
    n = len(states)
    ret = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    disc = 1.0
    for _ in range(horizon):
        obs = env.observe(states)
        act = env.clip_action(agent.act(obs, mode="eval"))
        states, reward, terminal = env.dynamics(states, act)
        ret += np.where(alive, disc * reward, 0.0)
        alive &= ~terminal
        if not alive.any():
            break
        disc *= gamma
    return ret


def estimate_ghat(env, agent, env_states, gamma: float, horizon: int, rollouts_per_state: int = 1,
                  rng=None) -> float:
    """Mean over states of the mean discounted return of ``rollouts_per_state`` rollouts.

    The toy environments and the evaluation policy are deterministic, so
    repeated rollouts coincide; ``rng`` is accepted for stochastic models.
    """
    if rollouts_per_state < 1:
        raise ValueError("rollouts_per_state must be positive")
    env_states = np.asarray(env_states, dtype=np.float64)
    reps = np.repeat(env_states, rollouts_per_state, axis=0) if env_states.ndim == 2 else env_states
    ret = rollout_returns(env, agent, reps, gamma, horizon)
    per_state = ret.reshape(len(env_states), rollouts_per_state).mean(axis=1)
    return float(np.mean(per_state))


def probe(agent, buffer, env, cfg: ProbeConfig, gamma: float, step: int, rng) -> BiasRecord | None:
    """Sample states from ``buffer`` and measure ``V_hat - G_hat``.

    Returns None (and leaves everything untouched) while the buffer holds
    fewer than ``cfg.num_states`` transitions. ``env`` is only used for its
    transition model; its live state is never modified.
    """
    if len(buffer) < cfg.num_states:
        return None
    if buffer.env_state is None:
        raise ValueError("the probe needs a buffer that records simulator states")
    idx = buffer.sample_indices(cfg.num_states, rng)
    obs = buffer.state[idx]
    horizon = horizon_for(gamma, cfg.tolerance)
    v_hat = estimate_vhat(agent, obs)
    g_hat = estimate_ghat(env, agent, buffer.env_state[idx], gamma, horizon, cfg.rollouts_per_state, rng)
    return BiasRecord(int(step), v_hat, g_hat, cfg.num_states, cfg.rollouts_per_state)


class BiasWriter:
    def __init__(self, path, variant: str, env: str, seed: int):
        self.path = Path(path)
        self.variant, self.env, self.seed = variant, env, seed
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh).writerow(BIAS_FIELDS)

    def write(self, rec: BiasRecord):
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([rec.step, repr(rec.v_hat_mean), repr(rec.g_hat_mean), repr(rec.bias),
                                     self.variant, self.env, self.seed])
