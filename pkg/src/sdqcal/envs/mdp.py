"""Finite MDPs: specification, sampling, exact solution and file loading."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NOISE_NONE = 0
NOISE_UNIFORM = 1
NOISE_TWO_POINT = 2

_NOISE_CODES = {"none": NOISE_NONE, "uniform": NOISE_UNIFORM, "two-point": NOISE_TWO_POINT}


def _noise_code(kind):
    if isinstance(kind, str):
        try:
            return _NOISE_CODES[kind]
        except KeyError:
            raise ValueError(f"unknown reward noise kind {kind!r}") from None
    return int(kind)


@dataclass
class DiscreteMdpSpec:
    """A finite MDP with tabular dynamics and optionally noisy rewards.

    ``transition[s, a, s']`` holds P(s'|s, a) and ``reward_mean[s, a]`` the
    expected reward. Observed rewards are ``reward_mean`` plus zero-mean noise
    of kind ``noise_kind[s, a]`` (none, uniform on [-c, c], or +/-c with equal
    probability) where c is ``noise_scale[s, a]``. Entering a terminal state
    ends the episode; terminal states have zero value.
    """

    transition: np.ndarray
    reward_mean: np.ndarray
    gamma: float
    terminal_states: frozenset = frozenset()
    noise_kind: np.ndarray | str = "none"
    noise_scale: np.ndarray | float = 0.0
    start_distribution: np.ndarray | None = None
    name: str = "mdp"
    # derived
    transition_cdf: np.ndarray = field(init=False, repr=False)
    start_cdf: np.ndarray = field(init=False, repr=False)
    terminal_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape [S, A, S], got {P.shape}")
        S, A, _ = P.shape
        if S < 1 or A < 1:
            raise ValueError("need at least one state and one action")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > 1e-12):
            raise ValueError("every transition row must be a probability distribution")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        R = np.asarray(self.reward_mean, dtype=np.float64)
        if R.shape != (S, A):
            raise ValueError(f"reward_mean must have shape {(S, A)}, got {R.shape}")

        if isinstance(self.noise_kind, str):
            kind = np.full((S, A), _noise_code(self.noise_kind), dtype=np.int64)
        else:
            kind = np.vectorize(_noise_code, otypes=[np.int64])(np.asarray(self.noise_kind, dtype=object))
        if kind.shape != (S, A) or not np.isin(kind, list(_NOISE_CODES.values())).all():
            raise ValueError("noise_kind must be a known kind per (s, a)")
        scale = np.broadcast_to(np.asarray(self.noise_scale, dtype=np.float64), (S, A)).copy()
        if np.any(scale < 0):
            raise ValueError("noise_scale must be nonnegative")

        terminal = frozenset(int(t) for t in self.terminal_states)
        if any(t < 0 or t >= S for t in terminal):
            raise ValueError("terminal state index out of range")
        mask = np.zeros(S, dtype=np.uint8)
        mask[list(terminal)] = 1

        if self.start_distribution is None:
            start = np.zeros(S)
            start[0] = 1.0
        else:
            start = np.asarray(self.start_distribution, dtype=np.float64)
            if start.shape != (S,) or np.any(start < 0) or abs(start.sum() - 1.0) > 1e-12:
                raise ValueError("start_distribution must be a distribution over states")

        self.transition = P
        self.reward_mean = R
        self.noise_kind = kind
        self.noise_scale = scale
        self.terminal_states = terminal
        self.terminal_mask = mask
        self.start_distribution = start
        self.transition_cdf = np.cumsum(P, axis=2)
        self.start_cdf = np.cumsum(start)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def nonterminal_states(self) -> list[int]:
        return [s for s in range(self.num_states) if s not in self.terminal_states]


def sample_from_cdf(cdf, u: float) -> int:
    """Index of the first cdf entry strictly above ``u``.

    The last index is returned when rounding leaves ``cdf[-1]`` below ``u``.
    """
    n = len(cdf)
    for i in range(n - 1):
        if u < cdf[i]:
            return i
    return n - 1


def noise_sample(kind: int, scale: float, u: float) -> float:
    if kind == NOISE_TWO_POINT:
        return -scale if u < 0.5 else scale
    if kind == NOISE_UNIFORM:
        return (2.0 * u - 1.0) * scale
    return 0.0


def _check_index(spec: DiscreteMdpSpec, s: int, a: int):
    if not (0 <= s < spec.num_states and 0 <= a < spec.num_actions):
        raise IndexError(f"(s={s}, a={a}) out of range for {spec.num_states}x{spec.num_actions} MDP")


def mdp_step(spec: DiscreteMdpSpec, s: int, a: int, rng: np.random.Generator):
    """Sample one transition; returns ``(next_state, reward, done)``."""
    _check_index(spec, s, a)
    u_next, u_noise = rng.random(2)
    nxt = sample_from_cdf(spec.transition_cdf[s, a], u_next)
    reward = float(spec.reward_mean[s, a]) + noise_sample(
        int(spec.noise_kind[s, a]), float(spec.noise_scale[s, a]), u_noise
    )
    return nxt, reward, bool(spec.terminal_mask[nxt])


def mdp_reset(spec: DiscreteMdpSpec, rng: np.random.Generator) -> int:
    return sample_from_cdf(spec.start_cdf, rng.random())


def bellman_optimality(spec: DiscreteMdpSpec, q: np.ndarray) -> np.ndarray:
    """One synchronous application of the Bellman optimality operator."""
    v = q.max(axis=1)
    v[spec.terminal_mask.astype(bool)] = 0.0
    tq = spec.reward_mean + spec.gamma * (spec.transition @ v)
    tq[spec.terminal_mask.astype(bool)] = 0.0
    return tq


def value_iteration(spec: DiscreteMdpSpec, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Return Q with ``max |T Q - Q| <= tol``. Terminal rows are identically 0."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = np.zeros((spec.num_states, spec.num_actions))
    for _ in range(max_iter):
        tq = bellman_optimality(spec, q)
        if np.max(np.abs(tq - q)) <= tol:
            return q
        q = tq
    raise RuntimeError("value iteration did not converge")  # unreachable for gamma < 1 and sane max_iter


def greedy_policy(q: np.ndarray) -> np.ndarray:
    # np.argmax returns the lowest index among ties
    return np.argmax(q, axis=1)


# --------------------------------------------------------------------------
# testbeds


def chain_mdp(gamma: float = 0.9, slip: float = 0.1) -> DiscreteMdpSpec:
    """Five-state chain. Action 1 moves right, action 0 moves left.

    With probability ``slip`` the move goes the other way. State 4 is
    terminal; stepping right from state 3 pays 1, stepping left at the left
    wall pays a distractor reward of 0.15. Episodes start uniformly in
    states 0..3.
    """
    S, A = 5, 2
    P = np.zeros((S, A, S))
    for s in range(S - 1):
        left, right = max(s - 1, 0), s + 1
        P[s, 0, left] += 1.0 - slip
        P[s, 0, right] += slip
        P[s, 1, right] += 1.0 - slip
        P[s, 1, left] += slip
    P[S - 1, :, S - 1] = 1.0
    R = np.zeros((S, A))
    R[3, 1] = 1.0
    R[0, 0] = 0.15
    start = np.array([0.25, 0.25, 0.25, 0.25, 0.0])
    return DiscreteMdpSpec(P, R, gamma, {4}, start_distribution=start, name="chain5")


def noisy_gridworld(gamma: float = 0.95, step_reward: float = -1.0, goal_reward: float = 5.0,
                    noise: float = 1.0) -> DiscreteMdpSpec:
    """3x3 grid, goal in the top-right corner, rewards perturbed by +/-``noise``.

    States are ``row * 3 + col`` with row 0 on top. Actions are up, right,
    down, left; moves into a wall leave the agent in place. Every step pays
    ``step_reward`` except a step into the goal, which pays ``goal_reward``;
    both carry two-point noise. Episodes start uniformly on non-goal cells.
    """
    n = 3
    S, A = n * n, 4
    goal = n - 1
    moves = [(-1, 0), (0, 1), (1, 0), (0, -1)]
    P = np.zeros((S, A, S))
    R = np.full((S, A), step_reward)
    for s in range(S):
        if s == goal:
            P[s, :, s] = 1.0
            R[s, :] = 0.0
            continue
        r, c = divmod(s, n)
        for a, (dr, dc) in enumerate(moves):
            nr, nc = min(max(r + dr, 0), n - 1), min(max(c + dc, 0), n - 1)
            nxt = nr * n + nc
            P[s, a, nxt] = 1.0
            if nxt == goal:
                R[s, a] = goal_reward
    kind = np.full((S, A), NOISE_TWO_POINT)
    kind[goal, :] = NOISE_NONE
    start = np.full(S, 1.0 / (S - 1))
    start[goal] = 0.0
    start[-1] = 1.0 - start[:-1].sum()
    return DiscreteMdpSpec(P, R, gamma, {goal}, noise_kind=kind, noise_scale=noise,
                           start_distribution=start, name="gridworld3")


def single_state_mdp(reward: float = 1.0, gamma: float = 0.9) -> DiscreteMdpSpec:
    return DiscreteMdpSpec(np.ones((1, 1, 1)), np.full((1, 1), reward), gamma, name="self-loop")


BUILTIN_MDPS = {"chain5": chain_mdp, "gridworld3": noisy_gridworld}


# --------------------------------------------------------------------------
# file format


def load_mdp(path) -> DiscreteMdpSpec:
    """Load an MDP from a JSON document.

    Layout::

        {
          "num_states": 2, "num_actions": 1, "gamma": 0.9,
          "transitions": [[s, a, s_next, prob], ...],
          "rewards": [[s, a, mean], ...],            # unlisted pairs get 0
          "noise": [[s, a, "two-point", 1.0], ...],  # optional
          "terminal_states": [1],                    # optional
          "start_distribution": [1.0, 0.0]           # optional
        }
    """
    doc = json.loads(Path(path).read_text())
    return mdp_from_dict(doc)


def mdp_from_dict(doc: dict) -> DiscreteMdpSpec:
    S, A = int(doc["num_states"]), int(doc["num_actions"])
    P = np.zeros((S, A, S))
    for s, a, nxt, p in doc["transitions"]:
        P[int(s), int(a), int(nxt)] += float(p)
    R = np.zeros((S, A))
    for s, a, r in doc.get("rewards", []):
        R[int(s), int(a)] = float(r)
    kind = np.zeros((S, A), dtype=np.int64)
    scale = np.zeros((S, A))
    for s, a, k, c in doc.get("noise", []):
        kind[int(s), int(a)] = _noise_code(k)
        scale[int(s), int(a)] = float(c)
    return DiscreteMdpSpec(
        P, R, float(doc["gamma"]), set(doc.get("terminal_states", [])),
        noise_kind=kind, noise_scale=scale,
        start_distribution=doc.get("start_distribution"),
        name=doc.get("name", "mdp"),
    )


def mdp_to_dict(spec: DiscreteMdpSpec) -> dict:
    inv = {v: k for k, v in _NOISE_CODES.items()}
    S, A = spec.num_states, spec.num_actions
    return {
        "name": spec.name,
        "num_states": S,
        "num_actions": A,
        "gamma": spec.gamma,
        "transitions": [[s, a, n, float(spec.transition[s, a, n])]
                        for s in range(S) for a in range(A) for n in range(S)
                        if spec.transition[s, a, n] > 0],
        "rewards": [[s, a, float(spec.reward_mean[s, a])] for s in range(S) for a in range(A)],
        "noise": [[s, a, inv[int(spec.noise_kind[s, a])], float(spec.noise_scale[s, a])]
                  for s in range(S) for a in range(A) if spec.noise_kind[s, a] != NOISE_NONE],
        "terminal_states": sorted(spec.terminal_states),
        "start_distribution": spec.start_distribution.tolist(),
    }
