"""Toy continuous-control environments with settable state.

Each environment is described by a batched, deterministic transition
function over raw states, so a single environment and the batched rollouts of
the bias probe share one code path. All dynamics use semi-implicit Euler with
a fixed step.

=============  ======  ======  =============================================
env            state   action  reward
=============  ======  ======  =============================================
pendulum       2       1       -(angle^2 + 0.1 w^2 + 0.001 u^2), in [-16.27, 0]
point-mass     4       2       -(|p|^2 + 0.1 |v|^2 + 0.01 |a|^2), in [-2.82, 0]
mountain-car   2       1       -0.1 u^2 per step, +100 on reaching the flag
=============  ======  ======  =============================================
"""

from __future__ import annotations

import numpy as np


def _angle_normalize(x):
    return ((x + np.pi) % (2 * np.pi)) - np.pi


class ContinuousEnv:
    """Base class. Subclasses define the batched transition ``dynamics``."""

    name: str
    state_dim: int
    observation_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_episode_steps: int
    # bound on |reward| used for the discounted truncation error
    reward_bound: float

    def __init__(self, max_episode_steps: int | None = None):
        if max_episode_steps is not None:
            if max_episode_steps < 1:
                raise ValueError("max_episode_steps must be positive")
            self.max_episode_steps = int(max_episode_steps)
        self.state = np.zeros(self.state_dim)
        self.step_count = 0

    # batched model -----------------------------------------------------
    def dynamics(self, states: np.ndarray, actions: np.ndarray):
        """Map ``[N, state_dim]`` states and in-bounds actions to
        ``(next_states, rewards, terminal)``."""
        raise NotImplementedError

    def observe(self, states: np.ndarray) -> np.ndarray:
        return states.copy()

    def sample_start(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def clip_action(self, actions):
        return np.clip(actions, self.action_low, self.action_high)

    # single-instance interface ---------------------------------------
    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = np.asarray(self.sample_start(rng), dtype=np.float64)
        self.step_count = 0
        return self.observation()

    def observation(self) -> np.ndarray:
        return self.observe(self.state[None])[0]

    def set_state(self, state) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        if state.shape != (self.state_dim,):
            raise ValueError(f"{self.name} state must have shape ({self.state_dim},), got {state.shape}")
        self.state = state.copy()
        self.step_count = 0
        return self.observation()

    def step(self, action):
        """Advance one step; returns ``(observation, reward, terminated, truncated)``.

        ``terminated`` marks a genuine terminal state, ``truncated`` the
        episode step limit. Only the former stops bootstrapping.
        """
        action = np.asarray(action, dtype=np.float64).reshape(self.action_dim)
        if not np.all(np.isfinite(action)):
            raise ValueError(f"non-finite action {action}")
        action = self.clip_action(action)
        nxt, reward, terminal = self.dynamics(self.state[None], action[None])
        self.state = nxt[0]
        self.step_count += 1
        terminated = bool(terminal[0])
        truncated = not terminated and self.step_count >= self.max_episode_steps
        return self.observation(), float(reward[0]), terminated, truncated

    def clone(self) -> "ContinuousEnv":
        env = type(self)(self.max_episode_steps)
        env.state = self.state.copy()
        env.step_count = self.step_count
        return env

    @property
    def action_half_range(self) -> np.ndarray:
        return (self.action_high - self.action_low) / 2.0


class Pendulum(ContinuousEnv):
    """Torque-limited swing-up. Angle 0 is upright; dt = 0.05.

    Matches the classic gym pendulum (g=10, m=l=1, |u|<=2, |w|<=8) with an
    added viscous damping term ``-damping * w``.
    """

    name = "pendulum"
    state_dim = 2
    observation_dim = 3
    action_dim = 1
    action_low = np.array([-2.0])
    action_high = np.array([2.0])
    max_episode_steps = 200
    reward_bound = np.pi ** 2 + 0.1 * 8.0 ** 2 + 0.001 * 2.0 ** 2

    g, m, l, dt, max_speed, damping = 10.0, 1.0, 1.0, 0.05, 8.0, 0.05

    def dynamics(self, states, actions):
        th, thdot = states[:, 0], states[:, 1]
        u = actions[:, 0]
        cost = _angle_normalize(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2
        acc = 3.0 * self.g / (2.0 * self.l) * np.sin(th) + 3.0 / (self.m * self.l ** 2) * u - self.damping * thdot
        new_thdot = np.clip(thdot + acc * self.dt, -self.max_speed, self.max_speed)
        new_th = _angle_normalize(th + new_thdot * self.dt)
        return np.stack([new_th, new_thdot], axis=1), -cost, np.zeros(len(states), dtype=bool)

    def observe(self, states):
        th = states[:, 0]
        return np.stack([np.cos(th), np.sin(th), states[:, 1]], axis=1)

    def sample_start(self, rng):
        return np.array([rng.uniform(-np.pi, np.pi), rng.uniform(-1.0, 1.0)])

    def energy(self, states=None) -> np.ndarray:
        """Mechanical energy of a uniform rod pivoted at one end."""
        states = self.state[None] if states is None else np.atleast_2d(states)
        inertia = self.m * self.l ** 2 / 3.0
        return 0.5 * inertia * states[:, 1] ** 2 + self.m * self.g * self.l / 2.0 * np.cos(states[:, 0])


class PointMass(ContinuousEnv):
    """Planar double integrator reaching for the origin inside [-1, 1]^2.

    Hitting a wall stops motion along that axis. dt = 0.05, speed <= 2.
    """

    name = "point-mass"
    state_dim = 4
    observation_dim = 4
    action_dim = 2
    action_low = np.array([-1.0, -1.0])
    action_high = np.array([1.0, 1.0])
    max_episode_steps = 200
    reward_bound = 2.0 + 0.1 * 8.0 + 0.01 * 2.0

    dt, gain, max_speed, bound = 0.05, 2.0, 2.0, 1.0

    def dynamics(self, states, actions):
        p, v = states[:, :2], states[:, 2:]
        cost = (p ** 2).sum(axis=1) + 0.1 * (v ** 2).sum(axis=1) + 0.01 * (actions ** 2).sum(axis=1)
        new_v = np.clip(v + self.gain * actions * self.dt, -self.max_speed, self.max_speed)
        new_p = p + new_v * self.dt
        hit = np.abs(new_p) > self.bound
        new_p = np.clip(new_p, -self.bound, self.bound)
        new_v = np.where(hit, 0.0, new_v)
        return np.concatenate([new_p, new_v], axis=1), -cost, np.zeros(len(states), dtype=bool)

    def sample_start(self, rng):
        return np.concatenate([rng.uniform(-0.9, 0.9, size=2), np.zeros(2)])

    @staticmethod
    def distance_to_goal(states) -> np.ndarray:
        states = np.atleast_2d(states)
        return np.sqrt((states[:, :2] ** 2).sum(axis=1))


class MountainCar(ContinuousEnv):
    """Continuous mountain car: an underpowered car must rock up to x >= 0.45."""

    name = "mountain-car"
    state_dim = 2
    observation_dim = 2
    action_dim = 1
    action_low = np.array([-1.0])
    action_high = np.array([1.0])
    max_episode_steps = 500
    reward_bound = 100.0

    min_pos, max_pos, max_speed, goal_pos, power = -1.2, 0.6, 0.07, 0.45, 0.0015

    def dynamics(self, states, actions):
        pos, vel = states[:, 0], states[:, 1]
        force = actions[:, 0]
        vel = np.clip(vel + force * self.power - 0.0025 * np.cos(3.0 * pos), -self.max_speed, self.max_speed)
        pos = np.clip(pos + vel, self.min_pos, self.max_pos)
        vel = np.where((pos == self.min_pos) & (vel < 0), 0.0, vel)
        terminal = pos >= self.goal_pos
        reward = np.where(terminal, 100.0, 0.0) - 0.1 * force ** 2
        return np.stack([pos, vel], axis=1), reward, terminal

    def sample_start(self, rng):
        return np.array([rng.uniform(-0.6, -0.4), 0.0])


ENVS = {cls.name: cls for cls in (Pendulum, PointMass, MountainCar)}


def make_env(name: str, max_episode_steps: int | None = None) -> ContinuousEnv:
    try:
        cls = ENVS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None
    return cls(max_episode_steps)
