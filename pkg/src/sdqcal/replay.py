"""Fixed-capacity ring buffer with uniform sampling (with replacement)."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Transition(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool  # genuine terminal only; time-limit truncation stays False


class Batch(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    done: np.ndarray  # float 0/1
    env_state: np.ndarray | None = None


class ReplayBuffer:
    """Ring of transitions stored column-wise in preallocated arrays.

    ``env_state_dim`` optionally reserves a column for the simulator state
    that produced each stored observation, so rollouts can be restarted from
    buffered states exactly.
    """

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, env_state_dim: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.state = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, action_dim))
        self.reward = np.zeros(capacity)
        self.next_state = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.env_state = np.zeros((capacity, env_state_dim)) if env_state_dim else None
        self.size = 0
        self.cursor = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition, env_state=None):
        state = np.asarray(t.state, dtype=np.float64)
        action = np.asarray(t.action, dtype=np.float64)
        next_state = np.asarray(t.next_state, dtype=np.float64)
        if state.shape != (self.obs_dim,) or next_state.shape != (self.obs_dim,) or action.shape != (self.action_dim,):
            raise ValueError(
                f"transition shapes {state.shape}/{action.shape}/{next_state.shape} do not match "
                f"buffer dims obs={self.obs_dim} action={self.action_dim}"
            )
        i = self.cursor
        self.state[i] = state
        self.action[i] = action
        self.reward[i] = t.reward
        self.next_state[i] = next_state
        self.done[i] = float(t.done)
        if self.env_state is not None:
            if env_state is None:
                raise ValueError("this buffer records the simulator state of every transition")
            self.env_state[i] = env_state
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < 1:
            raise ValueError("cannot sample from an empty buffer")
        if n < 1:
            raise ValueError("batch size must be positive")
        return rng.integers(0, self.size, size=n)

    def gather(self, idx) -> Batch:
        return Batch(self.state[idx], self.action[idx], self.reward[idx], self.next_state[idx],
                     self.done[idx], None if self.env_state is None else self.env_state[idx])

    def sample_uniform(self, n: int, rng: np.random.Generator) -> Batch:
        return self.gather(self.sample_indices(n, rng))

    def transition(self, i: int) -> Transition:
        return Transition(self.state[i].copy(), self.action[i].copy(), float(self.reward[i]),
                          self.next_state[i].copy(), bool(self.done[i]))
