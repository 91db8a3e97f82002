from .continuous import ENVS, ContinuousEnv, MountainCar, Pendulum, PointMass, make_env
from .mdp import (
    BUILTIN_MDPS,
    DiscreteMdpSpec,
    bellman_optimality,
    chain_mdp,
    greedy_policy,
    load_mdp,
    mdp_from_dict,
    mdp_reset,
    mdp_step,
    mdp_to_dict,
    noisy_gridworld,
    single_state_mdp,
    value_iteration,
)

__all__ = [
    "BUILTIN_MDPS", "ContinuousEnv", "DiscreteMdpSpec", "ENVS", "MountainCar", "Pendulum", "PointMass",
    "bellman_optimality", "chain_mdp", "greedy_policy", "load_mdp", "make_env", "mdp_from_dict",
    "mdp_reset", "mdp_step", "mdp_to_dict", "noisy_gridworld", "single_state_mdp", "value_iteration",
]
