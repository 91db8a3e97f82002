import csv

import numpy as np
import pytest
from conftest import const_net, make_agent

from sdqcal.envs import PointMass, make_env
from sdqcal.envs.continuous import ContinuousEnv
from sdqcal.neural import AdamState, adam_step, mlp_backward, mlp_forward
from sdqcal.probe import (
    BIAS_FIELDS,
    BiasRecord,
    BiasWriter,
    ProbeConfig,
    estimate_ghat,
    estimate_vhat,
    horizon_for,
    probe,
    rollout_returns,
    truncation_bound,
)
from sdqcal.replay import ReplayBuffer, Transition


class ConstantRewardEnv(ContinuousEnv):
    """One-dimensional drift with a fixed reward and no terminal state."""

    name = "constant"
    state_dim = observation_dim = action_dim = 1
    action_low, action_high = np.array([-1.0]), np.array([1.0])
    max_episode_steps = 1000
    reward_bound = 1.0

    def __init__(self, reward=1.0):
        super().__init__()
        self.reward = reward

    def dynamics(self, states, actions):
        return states + 0.1 * actions, np.full(len(states), self.reward), np.zeros(len(states), dtype=bool)

    def sample_start(self, rng):
        return rng.uniform(-1, 1, size=1)


def buffer_with_states(env, n, rng):
    buf = ReplayBuffer(n, env.observation_dim, env.action_dim, env.state_dim)
    for _ in range(n):
        s = env.sample_start(rng)
        obs = env.observe(s[None])[0]
        buf.push(Transition(obs, np.zeros(env.action_dim), 0.0, obs, False), s)
    return buf


# ---------------------------------------------------------------- V hat


def test_vhat_constant_critics():
    agent = make_agent(obs_dim=1)
    agent.params.critic1 = agent.params.critic2 = const_net(2, 7.0)
    assert estimate_vhat(agent, np.random.default_rng(0).normal(size=(9, 1))) == 7.0
    agent.params.critic1, agent.params.critic2 = const_net(2, 4.0), const_net(2, 6.0)
    assert estimate_vhat(agent, np.zeros((3, 1))) == 5.0


def test_vhat_single_critic():
    agent = make_agent("DDPG", obs_dim=1)
    agent.params.critic1 = const_net(2, 3.0)
    assert estimate_vhat(agent, np.zeros((3, 1))) == 3.0


def test_vhat_empty_states():
    with pytest.raises(ValueError):
        estimate_vhat(make_agent(obs_dim=1), np.zeros((0, 1)))


# ---------------------------------------------------------------- G hat


def test_ghat_zero_reward():
    agent = make_agent(obs_dim=1)
    assert estimate_ghat(ConstantRewardEnv(0.0), agent, np.zeros((4, 1)), 0.98, 50) == 0.0


def test_ghat_geometric_sum():
    agent = make_agent(obs_dim=1)
    H = horizon_for(0.98)
    g = estimate_ghat(ConstantRewardEnv(1.0), agent, np.random.default_rng(0).normal(size=(5, 1)), 0.98, H)
    assert abs(g - (1 - 0.98 ** H) / 0.02) < 1e-9


def test_ghat_deterministic_rollouts_agree():
    env = make_env("pendulum")
    agent = make_agent(obs_dim=3, seed=4)
    states = np.stack([env.sample_start(np.random.default_rng(i)) for i in range(6)])
    one = estimate_ghat(env, agent, states, 0.98, 100, 1)
    five = estimate_ghat(env, agent, states, 0.98, 100, 5)
    assert one == five


def test_ghat_dimension_mismatch():
    with pytest.raises(ValueError):
        estimate_ghat(make_env("pendulum"), make_agent(obs_dim=3), np.zeros((2, 3)), 0.98, 10)


def test_batched_rollout_matches_single_env():
    env = PointMass()
    agent = make_agent(obs_dim=4, action_dim=2, seed=1)
    rng = np.random.default_rng(2)
    states = np.stack([env.sample_start(rng) for _ in range(3)])
    batched = rollout_returns(env, agent, states, 0.9, 40)
    for i, s in enumerate(states):
        single = PointMass()
        obs = single.set_state(s)
        ret, disc = 0.0, 1.0
        for _ in range(40):
            obs, r, _, _ = single.step(agent.act(obs, mode="eval"))
            ret += disc * r
            disc *= 0.9
        assert ret == pytest.approx(batched[i], rel=1e-12)


def test_rollouts_stop_at_terminal():
    env = make_env("mountain-car")
    agent = make_agent(obs_dim=2, seed=0)
    ret = rollout_returns(env, agent, np.array([[0.449, 0.07]]), 0.98, 100)
    a = env.clip_action(agent.act(np.array([0.449, 0.07]), mode="eval"))
    assert ret[0] == pytest.approx(100.0 - 0.1 * a[0] ** 2)


def test_horizon_and_truncation_bound():
    for gamma in (0.9, 0.98, 0.99):
        H = horizon_for(gamma)
        assert gamma ** H < 1e-3 <= gamma ** (H - 1)
    H = horizon_for(0.98)
    env = ConstantRewardEnv(1.0)
    full = 1 / 0.02
    g = estimate_ghat(env, make_agent(obs_dim=1), np.zeros((1, 1)), 0.98, H)
    assert full - g <= truncation_bound(env.reward_bound, 0.98, H) + 1e-12


# ---------------------------------------------------------------- probe


def test_probe_skips_underfilled_buffer(rng):
    env = ConstantRewardEnv()
    buf = buffer_with_states(env, 5, rng)
    assert probe(make_agent(obs_dim=1), buf, env, ProbeConfig(num_states=10), 0.98, 100, rng) is None


def test_untrained_zero_critics_underestimate_positive_rewards(rng):
    env = ConstantRewardEnv(1.0)
    agent = make_agent(obs_dim=1)
    agent.params.critic1 = agent.params.critic2 = const_net(2, 0.0)
    rec = probe(agent, buffer_with_states(env, 50, rng), env, ProbeConfig(num_states=20), 0.98, 1, rng)
    assert rec.v_hat_mean == 0.0 and rec.g_hat_mean > 0
    assert rec.bias < 0


def test_record_bias_definition():
    rec = BiasRecord(10, 3.25, -1.5, 200, 3)
    assert rec.bias == 3.25 - -1.5


def test_probe_leaves_env_untouched(rng):
    env = make_env("pendulum")
    env.reset(rng)
    env.step([0.5])
    state, count = env.state.copy(), env.step_count
    buf = buffer_with_states(env, 30, rng)
    probe(make_agent(obs_dim=3), buf, env, ProbeConfig(num_states=10, rollouts_per_state=1), 0.98, 1, rng)
    assert np.array_equal(env.state, state) and env.step_count == count


def test_fitted_critics_have_small_bias():
    """Critics regressed onto the Monte Carlo returns of a frozen policy."""
    rng = np.random.default_rng(0)
    env = PointMass()
    agent = make_agent(obs_dim=4, action_dim=2, seed=5)
    buf = buffer_with_states(env, 100, rng)
    states, obs = buf.env_state[:100], buf.state[:100]
    gamma, H = 0.9, horizon_for(0.9)
    targets = rollout_returns(env, agent, states, gamma, H)
    sa = np.concatenate([obs, agent.act(obs, mode="eval")], axis=1)
    for critic in (agent.params.critic1, agent.params.critic2):
        adam = AdamState.for_net(critic)
        for _ in range(3000):
            q, cache = mlp_forward(critic, sa)
            grads, _ = mlp_backward(critic, cache, (q[:, 0] - targets)[:, None] / len(targets))
            adam_step(critic, grads, adam, 3e-3)
    rec = probe(agent, buf, env, ProbeConfig(num_states=100, rollouts_per_state=1), gamma, 0, rng)
    assert abs(rec.bias) < 0.01 * abs(rec.g_hat_mean)


def test_bias_writer(tmp_path):
    path = tmp_path / "bias.csv"
    w = BiasWriter(path, "SDQ_CAL", "pendulum", 3)
    w.write(BiasRecord(10000, 2.0, 1.5, 200, 3))
    rows = list(csv.reader(open(path)))
    assert rows[0] == BIAS_FIELDS
    assert rows[1] == ["10000", "2.0", "1.5", "0.5", "SDQ_CAL", "pendulum", "3"]


def test_probe_config_validation():
    with pytest.raises(ValueError):
        ProbeConfig(num_states=0)
    with pytest.raises(ValueError):
        ProbeConfig(tolerance=1.0)
