import numpy as np
import pytest

from sdqcal.agents import Agent, HyperConfig
from sdqcal.neural import MlpNet


def const_net(in_dim, value, hidden=4):
    """Critic-shaped net whose output is ``value`` for every input."""
    net = MlpNet([in_dim, hidden, 1], rng=np.random.default_rng(0))
    net.theta[...] = 0.0
    net.biases[-1][...] = value
    return net


def linear_net(weights, bias=0.0):
    """Single affine layer ``x @ weights + bias`` with one output."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    net = MlpNet([w.shape[0], 1], rng=np.random.default_rng(0))
    net.weights[0][...] = w
    net.biases[0][...] = bias
    return net


def const_actor(obs_dim, action, scale=1.0):
    """Tanh actor that always outputs ``action`` (must lie strictly inside the bound)."""
    action = np.atleast_1d(np.asarray(action, dtype=np.float64))
    net = MlpNet([obs_dim, 4, len(action)], output="tanh", output_scale=scale, rng=np.random.default_rng(0))
    net.theta[...] = 0.0
    net.biases[-1][...] = np.arctanh(action / scale)
    return net


def make_agent(variant="SDQ_CAL", obs_dim=3, action_dim=1, seed=0, **kw):
    cfg = HyperConfig(variant=variant, hidden=(16, 16), **kw)
    bound = np.ones(action_dim)
    return Agent(cfg, obs_dim, action_dim, -bound, bound, np.random.default_rng(seed))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(RESULTS):
        ok, detail = RESULTS[criterion]
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")
