"""Tabular SDQ-CAL with Q-learning and Double Q-learning baselines.

The per-step operations (:func:`cal_reshape_tabular`, :func:`sdq_targets_tabular`,
:func:`sdq_update`, :func:`behavior_action_tabular`) are small readable
functions used by tests and by anyone composing their own loop. Training runs
through :func:`train_tabular`, which hands the whole loop to a compiled kernel
when available and to the pure-Python twin otherwise.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import _tabular_py
from .envs.mdp import DiscreteMdpSpec, sample_from_cdf

log = logging.getLogger(__name__)

try:
    if os.environ.get("SDQCAL_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python kernel requested")
    from . import _tabular_core as _kernel
    KERNEL = "compiled"
except ImportError:
    _kernel = _tabular_py
    KERNEL = "python"

ALGOS = {"Q": _tabular_py.ALGO_Q, "DoubleQ": _tabular_py.ALGO_DOUBLE_Q,
         "SDQ": _tabular_py.ALGO_SDQ_CAL, "SDQ_CAL": _tabular_py.ALGO_SDQ_CAL}


@dataclass
class TabularQPair:
    qa: np.ndarray
    qb: np.ndarray

    @classmethod
    def zeros(cls, num_states: int, num_actions: int) -> "TabularQPair":
        return cls(np.zeros((num_states, num_actions)), np.zeros((num_states, num_actions)))

    def copy(self) -> "TabularQPair":
        return TabularQPair(self.qa.copy(), self.qb.copy())


@dataclass
class TabularConfig:
    """Hyperparameters of one tabular run.

    Exploration is epsilon-greedy on ``qa + qb`` with epsilon decaying
    linearly from ``eps_start`` to ``eps_end`` over ``eps_decay_steps``. The
    step size for a pair visited n times is ``1 / n ** alpha_power``.
    """

    beta: float = 0.0
    gamma: float | None = None  # None: use the MDP's discount
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_decay_steps: int = 50_000
    alpha_power: float = 0.8
    total_steps: int = 200_000
    max_episode_steps: int = 100
    track: bool = True

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if self.gamma is not None and not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.5 < self.alpha_power <= 1.0:
            # Robbins-Monro: sum alpha = inf, sum alpha^2 < inf
            raise ValueError("alpha_power must lie in (0.5, 1]")
        if self.total_steps < 0 or self.max_episode_steps < 1:
            raise ValueError("total_steps must be >= 0 and max_episode_steps >= 1")


@dataclass
class TabularResult:
    pair: TabularQPair
    episode_returns: np.ndarray
    episode_end_steps: np.ndarray
    linf_error: np.ndarray  # after each step; empty when untracked
    mean_action_gap: np.ndarray
    visits_a: np.ndarray
    visits_b: np.ndarray
    algo: str = ""
    kernel: str = field(default=KERNEL)

    def greedy_policy(self) -> np.ndarray:
        return np.argmax(self.pair.qa + self.pair.qb, axis=1)

    def write_trace_csv(self, path):
        """One row per finished episode: step, episode_return, linf_error, mean_action_gap."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "episode_return", "linf_error", "mean_action_gap"])
            tracked = len(self.linf_error) > 0
            for step, ret in zip(self.episode_end_steps, self.episode_returns):
                linf = repr(float(self.linf_error[step - 1])) if tracked else ""
                gap = repr(float(self.mean_action_gap[step - 1])) if tracked else ""
                w.writerow([int(step), repr(float(ret)), linf, gap])


# ---------------------------------------------------------------------------
# single-step operations


def _argmax(row) -> int:
    return int(np.argmax(row))


def cal_reshape_tabular(pair: TabularQPair, s: int, a: int, r: float, beta: float):
    """Conservative advantage-shaped rewards ``(r_a, r_b)`` for one transition."""
    qmin = min(pair.qa[s, a], pair.qb[s, a])
    r_a = r + beta * (qmin - pair.qa[s].max())
    r_b = r + beta * (qmin - pair.qb[s].max())
    return float(r_a), float(r_b)


def sdq_targets_tabular(pair: TabularQPair, r_a: float, r_b: float, s_next: int, done: bool, gamma: float):
    """Cross-evaluated double-estimator targets ``(y_a, y_b)``."""
    if done:
        return float(r_a), float(r_b)
    a_star = _argmax(pair.qa[s_next])
    b_star = _argmax(pair.qb[s_next])
    return float(r_a + gamma * pair.qb[s_next, a_star]), float(r_b + gamma * pair.qa[s_next, b_star])


def sdq_update(pair: TabularQPair, s: int, a: int, y_a: float, y_b: float, alpha: float) -> TabularQPair:
    """Move both estimators toward their targets (in place)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    pair.qa[s, a] += alpha * (y_a - pair.qa[s, a])
    pair.qb[s, a] += alpha * (y_b - pair.qb[s, a])
    return pair


def behavior_action_tabular(pair: TabularQPair, s: int, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy on ``qa + qb``; ties go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    num_actions = pair.qa.shape[1]
    if rng.random() < epsilon:
        return int(rng.integers(num_actions))
    return _argmax(pair.qa[s] + pair.qb[s])


def action_gap(table: np.ndarray, s: int) -> float:
    """Best minus second-best action value in state ``s``."""
    row = np.asarray(table)[s]
    if row.shape[0] < 2:
        raise ValueError("action gap needs at least two actions")
    top2 = np.partition(row, -2)[-2:]
    return float(top2[1] - top2[0])


def mean_action_gap(table: np.ndarray, states) -> float:
    return float(np.mean([action_gap(table, s) for s in states]))


# ---------------------------------------------------------------------------
# training


def train_tabular(spec: DiscreteMdpSpec, cfg: TabularConfig, algo: str, seed: int,
                  q_star: np.ndarray | None = None) -> TabularResult:
    """Run one tabular learner on ``spec`` for ``cfg.total_steps`` steps.

    ``algo`` is one of ``Q``, ``DoubleQ``, ``SDQ`` (SDQ-CAL with beta forced
    to 0) or ``SDQ_CAL``. Q-learning keeps ``qb`` equal to ``qa``. When
    ``q_star`` is given, the max-norm error of both tables and the mean
    action gap of ``qa`` are recorded after every step.
    """
    if algo not in ALGOS:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {sorted(ALGOS)}")
    S, A = spec.num_states, spec.num_actions
    gamma = spec.gamma if cfg.gamma is None else cfg.gamma
    beta = 0.0 if algo == "SDQ" else cfg.beta
    if algo in ("Q", "DoubleQ") and cfg.beta != 0.0:
        log.info("beta=%s ignored by %s", cfg.beta, algo)
    track = cfg.track and q_star is not None
    if q_star is None:
        q_star = np.zeros((S, A))
    q_star = np.ascontiguousarray(q_star, dtype=np.float64)
    if q_star.shape != (S, A):
        raise ValueError(f"q_star must have shape {(S, A)}")

    rng = np.random.default_rng(seed)
    s0 = sample_from_cdf(spec.start_cdf, rng.random())
    T = cfg.total_steps
    uniforms = rng.random((T, 6))

    qa = np.zeros((S, A))
    qb = np.zeros((S, A))
    na = np.zeros((S, A), dtype=np.int64)
    nb = np.zeros((S, A), dtype=np.int64)
    linf = np.zeros(T if track else 0)
    gaps = np.zeros(T if track else 0)
    ep_ret = np.zeros(T)
    ep_end = np.zeros(T, dtype=np.int64)

    n_eps = _kernel.run_tabular_loop(
        np.ascontiguousarray(spec.transition_cdf), np.ascontiguousarray(spec.reward_mean),
        np.ascontiguousarray(spec.noise_kind, dtype=np.int64), np.ascontiguousarray(spec.noise_scale),
        np.ascontiguousarray(spec.terminal_mask, dtype=np.uint8), np.ascontiguousarray(spec.start_cdf),
        float(gamma), float(beta), int(ALGOS[algo]),
        float(cfg.eps_start), float(cfg.eps_end), int(cfg.eps_decay_steps), float(cfg.alpha_power),
        int(cfg.max_episode_steps), int(s0), uniforms, q_star, bool(track),
        qa, qb, na, nb, linf, gaps, ep_ret, ep_end,
    )
    return TabularResult(TabularQPair(qa, qb), ep_ret[:n_eps].copy(), ep_end[:n_eps].copy(),
                         linf, gaps, na, nb, algo=algo)


def linf_error(pair: TabularQPair, q_star: np.ndarray) -> float:
    return float(max(np.abs(pair.qa - q_star).max(), np.abs(pair.qb - q_star).max()))
