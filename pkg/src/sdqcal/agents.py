"""Actor-critic agents: SDQ-CAL, its ablations, and the DDPG / TD3 baselines.

Variants
--------
SDQ_CAL  two actors, two critics updated simultaneously, conservative
         advantage-shaped rewards, double-action selection (DAS).
SDQ      SDQ_CAL with beta forced to 0.
SDQ_AL   plain advantage learning: each critic uses its own estimate of
         Q(s, a) instead of the minimum of both.
DQ_CAL   SDQ_CAL that updates one randomly chosen critic per step.
SDQ_PI1  SDQ_CAL acting with the first actor only.
DDPG     one actor, one critic, target actor and target critic.
TD3      clipped double Q, target policy smoothing, delayed actor updates.
TD3_DAS  TD3 acting by DAS over the online and target actors.

The SDQ family has no target actors: bootstrap actions come from the online
actors, and only the critics have delayed copies.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .neural import AdamState, MlpNet, adam_step, mlp_backward, mlp_forward, polyak_update

VARIANTS = ("SDQ_CAL", "SDQ", "SDQ_AL", "DQ_CAL", "SDQ_PI1", "DDPG", "TD3", "TD3_DAS")
SDQ_FAMILY = frozenset({"SDQ_CAL", "SDQ", "SDQ_AL", "DQ_CAL", "SDQ_PI1"})
TD3_FAMILY = frozenset({"TD3", "TD3_DAS"})
DAS_VARIANTS = frozenset({"SDQ_CAL", "SDQ", "SDQ_AL", "DQ_CAL", "TD3_DAS"})
# beta used when the config leaves it unset
DEFAULT_BETA = {"SDQ_CAL": 0.019, "SDQ_AL": 0.009, "DQ_CAL": 0.019, "SDQ_PI1": 0.019}


@dataclass
class HyperConfig:
    variant: str = "SDQ_CAL"
    beta: float | None = None
    gamma: float = 0.98
    tau: float = 0.005
    sigma: float = 0.1  # exploration std as a fraction of the action half-range
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    batch_size: int = 128
    start_steps: int = 1000
    hidden: tuple = (64, 64)
    buffer_capacity: int = 200_000
    policy_delay: int = 2  # TD3 family
    target_noise: float = 0.2  # TD3 family, fraction of half-range
    noise_clip: float = 0.5  # TD3 family, fraction of half-range

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.beta is not None and not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1 or self.start_steps < 0 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be positive, start_steps nonnegative")
        if self.policy_delay < 1 or self.target_noise < 0 or self.noise_clip < 0:
            raise ValueError("bad TD3 settings")

    @property
    def effective_beta(self) -> float:
        if self.variant == "SDQ" or self.variant not in DEFAULT_BETA:
            return 0.0
        return DEFAULT_BETA[self.variant] if self.beta is None else self.beta

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HyperConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown agent settings {sorted(unknown)}")
        return cls(**d)


@dataclass
class AgentParams:
    actor1: MlpNet
    critic1: MlpNet
    target_critic1: MlpNet
    actor2: MlpNet | None = None
    critic2: MlpNet | None = None
    target_critic2: MlpNet | None = None
    target_actor: MlpNet | None = None
    adam: dict = field(default_factory=dict)

    def nets(self) -> dict:
        names = ("actor1", "actor2", "critic1", "critic2", "target_critic1", "target_critic2", "target_actor")
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(net.theta)) for net in self.nets().values())


def make_params(variant: str, obs_dim: int, action_dim: int, action_bound, hidden, rng) -> AgentParams:
    """Randomly initialised networks for ``variant``; targets start as copies."""
    bound = np.broadcast_to(np.asarray(action_bound, dtype=np.float64), (action_dim,)).copy()

    def actor():
        return MlpNet([obs_dim, *hidden, action_dim], output="tanh", output_scale=bound, rng=rng)

    def critic():
        return MlpNet([obs_dim + action_dim, *hidden, 1], rng=rng)

    two_actors = variant in SDQ_FAMILY
    two_critics = variant != "DDPG"
    a1 = actor()
    a2 = actor() if two_actors else None
    c1 = critic()
    c2 = critic() if two_critics else None
    p = AgentParams(
        actor1=a1, critic1=c1, target_critic1=c1.copy(),
        actor2=a2, critic2=c2, target_critic2=c2.copy() if c2 is not None else None,
        target_actor=None if two_actors else a1.copy(),
    )
    for name in ("actor1", "actor2", "critic1", "critic2"):
        net = getattr(p, name)
        if net is not None:
            p.adam[name] = AdamState.for_net(net)
    return p


def _q(critic: MlpNet, obs, act):
    return mlp_forward(critic, np.concatenate([obs, act], axis=-1), keep_cache=False)[0][..., 0]


# ---------------------------------------------------------------------------
# acting


def das_select(params: AgentParams, obs, candidates=None):
    """Double-action selection: of two candidate actions keep the one with
    the larger ``Q1 + Q2`` under the online critics; ties keep the first.

    Candidates default to the two actors' outputs. Works on one observation
    or a batch.
    """
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 1
    o = obs[None] if single else obs
    if candidates is None:
        if params.actor2 is None:
            raise ValueError("double-action selection needs two actors")
        candidates = (params.actor1, params.actor2)
    a1 = candidates[0](o)
    a2 = candidates[1](o)
    n = len(o)
    oo = np.concatenate([o, o], axis=0)
    aa = np.concatenate([a1, a2], axis=0)
    score = _q(params.critic1, oo, aa) + _q(params.critic2, oo, aa)
    pick2 = score[n:] > score[:n]
    out = np.where(pick2[:, None], a2, a1)
    return out[0] if single else out


def explore_action(action, sigma: float, low, high, rng: np.random.Generator):
    """Add N(0, sigma * half_range) per dimension and clip to the bounds."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    action = np.asarray(action, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    half = (high - low) / 2.0
    noisy = action + rng.normal(0.0, 1.0, size=action.shape) * (sigma * half)
    return np.clip(noisy, low, high)


def greedy_action(params: AgentParams, obs, variant: str):
    """Noise-free action of ``variant``; single observation or batch."""
    if variant in DAS_VARIANTS:
        if variant == "TD3_DAS":
            return das_select(params, obs, (params.actor1, params.target_actor))
        return das_select(params, obs)
    return params.actor1(obs)


def act_for_variant(params: AgentParams, obs, cfg: HyperConfig, rng, mode: str = "eval",
                    low=None, high=None, global_step: int | None = None):
    """Behaviour (``explore``) or evaluation (``eval``) action.

    In explore mode the first ``cfg.start_steps`` steps draw uniform random
    actions; afterwards Gaussian noise is added to the greedy action.
    """
    if mode == "eval":
        return greedy_action(params, obs, cfg.variant)
    if mode != "explore":
        raise ValueError(f"unknown mode {mode!r}")
    if low is None or high is None:
        raise ValueError("explore mode needs action bounds")
    if global_step is not None and global_step < cfg.start_steps:
        return rng.uniform(low, high)
    return explore_action(greedy_action(params, obs, cfg.variant), cfg.sigma, low, high, rng)


# ---------------------------------------------------------------------------
# learning


def cal_reshape_deep(params: AgentParams, batch, beta: float, variant: str = "SDQ_CAL"):
    """Advantage-shaped rewards ``(r1, r2)`` from target critics and online actors.

    For the conservative form the sampled pair is valued by
    ``min(Q'1(s, a), Q'2(s, a))``; SDQ_AL uses each critic's own value.
    """
    r = batch.reward
    if beta == 0.0:
        return r.copy(), r.copy()
    s, a = batch.state, batch.action
    n = len(s)
    pi1 = params.actor1(s)
    pi2 = params.actor2(s)
    ss = np.concatenate([s, s], axis=0)
    q1 = _q(params.target_critic1, ss, np.concatenate([a, pi1], axis=0))
    q2 = _q(params.target_critic2, ss, np.concatenate([a, pi2], axis=0))
    q1_sa, q1_pi = q1[:n], q1[n:]
    q2_sa, q2_pi = q2[:n], q2[n:]
    if variant == "SDQ_AL":
        return r + beta * (q1_sa - q1_pi), r + beta * (q2_sa - q2_pi)
    q_min = np.minimum(q1_sa, q2_sa)
    return r + beta * (q_min - q1_pi), r + beta * (q_min - q2_pi)


def critic_targets(params: AgentParams, batch, gamma: float, r1, r2):
    """Cross-wired targets: actor 1 is valued by target critic 2 and vice versa."""
    s2 = batch.next_state
    mask = 1.0 - batch.done
    y1 = r1 + gamma * _q(params.target_critic2, s2, params.actor1(s2)) * mask
    y2 = r2 + gamma * _q(params.target_critic1, s2, params.actor2(s2)) * mask
    return y1, y2


def td3_target(params: AgentParams, batch, gamma: float, cfg: HyperConfig, half_range, rng):
    """Clipped double-Q target at the smoothed target-policy action."""
    s2 = batch.next_state
    a2 = params.target_actor(s2)
    noise = np.clip(rng.normal(0.0, 1.0, size=a2.shape) * (cfg.target_noise * half_range),
                    -cfg.noise_clip * half_range, cfg.noise_clip * half_range)
    a2 = np.clip(a2 + noise, -half_range, half_range)
    q = np.minimum(_q(params.target_critic1, s2, a2), _q(params.target_critic2, s2, a2))
    return batch.reward + gamma * q * (1.0 - batch.done)


def ddpg_target(params: AgentParams, batch, gamma: float):
    s2 = batch.next_state
    return batch.reward + gamma * _q(params.target_critic1, s2, params.target_actor(s2)) * (1.0 - batch.done)


def _critic_step(critic: MlpNet, adam: AdamState, sa, y, lr: float) -> float:
    q, cache = mlp_forward(critic, sa)
    err = q[:, 0] - y
    loss = 0.5 * float(np.mean(err * err))
    grads, _ = mlp_backward(critic, cache, (err / len(y))[:, None])
    adam_step(critic, grads, adam, lr)
    return loss


def critic_update(params: AgentParams, batch, y1, y2, lr: float, variant: str = "SDQ_CAL", rng=None):
    """One Adam step on ``0.5 * mean((y_i - Q_i(s, a))^2)`` per updated critic.

    Returns ``(loss1, loss2)``; a critic that was not stepped reports None.
    DQ_CAL steps one critic chosen by a fair coin from ``rng``.
    """
    sa = np.concatenate([batch.state, batch.action], axis=1)
    update1 = update2 = True
    if variant == "DDPG":
        update2 = False
    elif variant == "DQ_CAL":
        if rng is None:
            raise ValueError("DQ_CAL needs an rng for its critic coin")
        update1 = bool(rng.random() < 0.5)
        update2 = not update1
    loss1 = _critic_step(params.critic1, params.adam["critic1"], sa, y1, lr) if update1 else None
    loss2 = _critic_step(params.critic2, params.adam["critic2"], sa, y2, lr) if update2 else None
    return loss1, loss2


def _actor_step(actor: MlpNet, critic: MlpNet, adam: AdamState, s, lr: float) -> float:
    a, a_cache = mlp_forward(actor, s)
    q, q_cache = mlp_forward(critic, np.concatenate([s, a], axis=1))
    n = len(s)
    # ascend mean Q: d(-mean Q)/dQ = -1/n
    _, d_in = mlp_backward(critic, q_cache, np.full((n, 1), -1.0 / n), param_grads=False)
    grads, _ = mlp_backward(actor, a_cache, d_in[:, s.shape[1]:])
    adam_step(actor, grads, adam, lr)
    return float(np.mean(q))


def actor_update(params: AgentParams, batch, lr: float, variant: str = "SDQ_CAL"):
    """Deterministic policy gradient step: actor i ascends Q_i(s, pi_i(s)).

    Returns the mean critic value of the pre-update actions per actor.
    """
    s = batch.state
    q1 = _actor_step(params.actor1, params.critic1, params.adam["actor1"], s, lr)
    q2 = None
    if params.actor2 is not None:
        q2 = _actor_step(params.actor2, params.critic2, params.adam["actor2"], s, lr)
    return q1, q2


def train_step(params: AgentParams, buffer, cfg: HyperConfig, rng, global_step: int):
    """One gradient pass of the variant's update rule on a uniform minibatch.

    Returns a metrics dict, or None when the buffer holds fewer than
    ``cfg.batch_size`` transitions.
    """
    if len(buffer) < cfg.batch_size:
        return None
    batch = buffer.sample_uniform(cfg.batch_size, rng)
    v = cfg.variant
    metrics = {"reward_mean": float(np.mean(batch.reward))}
    if v in SDQ_FAMILY:
        r1, r2 = cal_reshape_deep(params, batch, cfg.effective_beta, v)
        y1, y2 = critic_targets(params, batch, cfg.gamma, r1, r2)
        l1, l2 = critic_update(params, batch, y1, y2, cfg.critic_lr, v, rng)
        actor_update(params, batch, cfg.actor_lr, v)
        polyak_update(params.target_critic1, params.critic1, cfg.tau)
        polyak_update(params.target_critic2, params.critic2, cfg.tau)
        metrics.update(r1_mean=float(np.mean(r1)), r2_mean=float(np.mean(r2)))
    elif v in TD3_FAMILY:
        half = _half_range(params)
        y = td3_target(params, batch, cfg.gamma, cfg, half, rng)
        l1, l2 = critic_update(params, batch, y, y, cfg.critic_lr, v)
        if global_step % cfg.policy_delay == 0:
            actor_update(params, batch, cfg.actor_lr, v)
            polyak_update(params.target_critic1, params.critic1, cfg.tau)
            polyak_update(params.target_critic2, params.critic2, cfg.tau)
            polyak_update(params.target_actor, params.actor1, cfg.tau)
    else:
        y = ddpg_target(params, batch, cfg.gamma)
        l1, l2 = critic_update(params, batch, y, y, cfg.critic_lr, v)
        actor_update(params, batch, cfg.actor_lr, v)
        polyak_update(params.target_critic1, params.critic1, cfg.tau)
        polyak_update(params.target_actor, params.actor1, cfg.tau)
    metrics["critic1_loss"] = l1
    metrics["critic2_loss"] = l2
    return metrics


def _half_range(params: AgentParams) -> np.ndarray:
    # actors squash to +/- output_scale, which is the action half-range
    return params.actor1.output_scale


class Agent:
    """Networks, config and action bounds bundled for the training loop."""

    def __init__(self, cfg: HyperConfig, obs_dim: int, action_dim: int, action_low, action_high, rng):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.low = np.asarray(action_low, dtype=np.float64)
        self.high = np.asarray(action_high, dtype=np.float64)
        if not np.allclose(self.low, -self.high):
            raise ValueError("actors assume action bounds symmetric about zero")
        self.params = make_params(cfg.variant, obs_dim, action_dim, self.high, cfg.hidden, rng)
        self.updates = 0

    @property
    def variant(self) -> str:
        return self.cfg.variant

    def act(self, obs, rng=None, mode: str = "eval", global_step: int | None = None):
        return act_for_variant(self.params, obs, self.cfg, rng, mode, self.low, self.high, global_step)

    def train_step(self, buffer, rng, global_step: int):
        m = train_step(self.params, buffer, self.cfg, rng, global_step)
        if m is not None:
            self.updates += 1
        return m

    def value(self, obs, actions):
        """Critic estimate at ``(obs, actions)``: mean of the available critics."""
        q = _q(self.params.critic1, obs, actions)
        if self.params.critic2 is not None:
            q = 0.5 * (q + _q(self.params.critic2, obs, actions))
        return q
