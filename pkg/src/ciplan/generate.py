"""Seeded random model generation for tests and demos."""

from __future__ import annotations

import numpy as np

from .model import DecPomdpModel, validate


def random_model(
    seed: int,
    num_agents: int = 2,
    num_states: int = 2,
    action_sizes: tuple[int, ...] | None = None,
    num_common_obs: int = 1,
    private_obs_sizes: tuple[int, ...] | None = None,
    horizon: int = 2,
    reward_scale: float = 1.0,
) -> DecPomdpModel:
    """A fully random model with Dirichlet rows and uniform rewards.

    Deterministic in ``seed``; rewards lie in ``[-reward_scale, reward_scale]``
    and the reward bound is the exact maximum magnitude.
    """
    rng = np.random.default_rng(seed)
    action_sizes = action_sizes or (2,) * num_agents
    private_obs_sizes = private_obs_sizes or (1,) * num_agents
    S = num_states
    A = int(np.prod(action_sizes))
    O = num_common_obs * int(np.prod(private_obs_sizes))

    transition = rng.dirichlet(np.ones(S), size=(S, A))
    observation = rng.dirichlet(np.ones(O), size=S)
    reward = rng.uniform(-reward_scale, reward_scale, size=(S, A))
    initial = rng.dirichlet(np.ones(S))

    model = DecPomdpModel(
        num_agents=num_agents,
        states=tuple(f"s{i}" for i in range(S)),
        actions=tuple(
            tuple(f"a{n}_{i}" for i in range(k)) for n, k in enumerate(action_sizes)
        ),
        common_obs=tuple(f"c{i}" for i in range(num_common_obs)),
        private_obs=tuple(
            tuple(f"o{n}_{i}" for i in range(k))
            for n, k in enumerate(private_obs_sizes)
        ),
        transition=transition,
        observation=observation,
        reward=reward,
        initial=initial,
        horizon=horizon,
        reward_bound=float(np.abs(reward).max()),
    )
    validate(model)
    return model
