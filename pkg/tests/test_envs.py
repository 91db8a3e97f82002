import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdqcal.envs import ENVS, MountainCar, Pendulum, PointMass, make_env


@pytest.mark.parametrize("name", sorted(ENVS))
def test_reset_is_seeded(name):
    a = make_env(name).reset(np.random.default_rng(7))
    b = make_env(name).reset(np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_point_mass_reset_inside_arena(rng):
    env = PointMass()
    for _ in range(200):
        obs = env.reset(rng)
        assert np.all(np.abs(obs[:2]) <= env.bound)
        assert env.step_count == 0


def test_pendulum_observation_on_unit_circle(rng):
    env = Pendulum()
    for _ in range(100):
        obs = env.reset(rng)
        assert abs(obs[0] ** 2 + obs[1] ** 2 - 1.0) < 1e-12


def test_pendulum_upright_rest_is_equilibrium():
    env = Pendulum()
    env.set_state([0.0, 0.0])
    for _ in range(50):
        obs, reward, terminated, truncated = env.step([0.0])
        assert reward == 0.0
        assert not terminated
    assert np.array_equal(env.state, [0.0, 0.0])


def test_point_mass_goal_has_max_reward():
    env = PointMass()
    env.set_state(np.zeros(4))
    _, reward, _, _ = env.step(np.zeros(2))
    assert reward == 0.0  # the cost is a sum of squares, so 0 is the best possible


def test_pendulum_energy_at_rest_hanging_down():
    env = Pendulum()
    env.set_state([np.pi, 0.0])
    energies = [env.energy()[0]]
    for _ in range(100):
        env.step([0.0])
        energies.append(env.energy()[0])
    assert np.all(np.diff(energies) <= 1e-12)


def test_pendulum_damping_dissipates_swinging_energy():
    env = Pendulum()
    env.set_state([np.pi - 0.5, 0.0])  # released half a radian from the bottom
    e0 = env.energy()[0]
    for _ in range(100):
        env.step([0.0])
    assert env.energy()[0] < e0


def test_step_clips_actions():
    env = Pendulum()
    env.set_state([np.pi, 0.0])
    env.step([100.0])
    clipped = Pendulum()
    clipped.set_state([np.pi, 0.0])
    clipped.step([2.0])
    assert np.array_equal(env.state, clipped.state)


@pytest.mark.parametrize("name", sorted(ENVS))
def test_non_finite_action_rejected(name):
    env = make_env(name)
    env.reset(np.random.default_rng(0))
    with pytest.raises(ValueError):
        env.step(np.full(env.action_dim, np.nan))


@pytest.mark.parametrize("name", sorted(ENVS))
def test_set_state_wrong_shape(name):
    with pytest.raises(ValueError):
        make_env(name).set_state(np.zeros(7))


@pytest.mark.parametrize("name", sorted(ENVS))
def test_set_state_reproduces_reset(name):
    env = make_env(name)
    obs = env.reset(np.random.default_rng(3))
    other = make_env(name)
    assert np.array_equal(other.set_state(env.state), obs)
    assert other.step_count == 0


@pytest.mark.parametrize("name", sorted(ENVS))
def test_rollout_from_set_state_matches_live(name, rng):
    env = make_env(name)
    env.reset(rng)
    actions = rng.uniform(env.action_low, env.action_high, size=(60, env.action_dim))
    for a in actions[:30]:
        env.step(a)
    replica = make_env(name)
    replica.set_state(env.state)
    for a in actions[30:]:
        live = env.step(a)
        copy = replica.step(a)
        assert np.array_equal(live[0], copy[0]) and live[1] == copy[1]


def test_truncation_is_not_termination():
    env = PointMass(max_episode_steps=5)
    env.reset(np.random.default_rng(0))
    flags = [env.step(np.zeros(2))[2:] for _ in range(5)]
    assert flags[-1] == (False, True)
    assert all(f == (False, False) for f in flags[:-1])
    assert env.step_count <= env.max_episode_steps


def test_mountain_car_terminates_at_flag():
    env = MountainCar()
    env.set_state([0.449, 0.05])
    _, reward, terminated, _ = env.step([1.0])
    assert terminated
    assert reward == pytest.approx(100.0 - 0.1)


def test_batched_dynamics_match_single_steps(rng):
    env = Pendulum()
    states = np.stack([env.sample_start(rng) for _ in range(8)])
    actions = rng.uniform(-2, 2, size=(8, 1))
    nxt, rew, _ = env.dynamics(states, actions)
    for i in range(8):
        env.set_state(states[i])
        obs, r, _, _ = env.step(actions[i])
        assert np.array_equal(env.state, nxt[i]) and r == rew[i]


def test_unknown_env():
    with pytest.raises(ValueError, match="unknown environment"):
        make_env("cartpole")


@settings(max_examples=60, deadline=None)
@given(name=st.sampled_from(sorted(ENVS)), seed=st.integers(0, 2 ** 31), steps=st.integers(1, 300))
def test_fuzz_dynamics_stay_finite(name, seed, steps):
    env = make_env(name)
    r = np.random.default_rng(seed)
    obs = env.reset(r)
    for _ in range(steps):
        obs, reward, terminated, _ = env.step(r.uniform(env.action_low, env.action_high))
        assert np.all(np.isfinite(obs)) and np.isfinite(reward)
        assert abs(reward) <= env.reward_bound
        if terminated:
            obs = env.reset(r)
