"""Dec-POMDP model container, validation, and one-step stochastic kernels.

The model is a finite tuple: states, per-agent action sets, a common
observation alphabet plus per-agent private alphabets, a transition kernel
``P(s' | s, joint action)``, an observation kernel ``P(o0, o1..oN | s)``
that depends on the current state only, an expected-reward table, a horizon,
and an initial state distribution.

Joint actions and joint observations are flattened to single indices
internally (row-major over the per-agent alphabets); all tensors are numpy
arrays indexed by those flat indices.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

#: Distribution rows must sum to one within this tolerance.
SUM_TOL = 1e-9
#: Probabilities at or below this threshold are treated as unreachable.
ADMISSIBILITY_THRESHOLD = 1e-12


class ModelFormatError(ValueError):
    """Raised when a model document cannot be parsed into the expected shape."""


class ModelValidationError(ValueError):
    """Raised when a structurally well-formed model violates its invariants.

    Carries the full list of violations, not just the first one found.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("model validation failed:\n" + "\n".join(self.violations))


class JointAction(NamedTuple):
    """Per-agent action indices ``(a1, ..., aN)``."""

    indices: tuple[int, ...]


class JointObservation(NamedTuple):
    """Common observation index plus per-agent private indices."""

    common: int
    private: tuple[int, ...]


@dataclass(frozen=True)
class DecPomdpModel:
    """Immutable Dec-POMDP tuple with flattened kernels.

    Attributes
    ----------
    states, actions, common_obs, private_obs
        Label sets; ``actions`` and ``private_obs`` hold one tuple per agent.
    transition
        Array of shape ``(S, A, S)`` where ``A`` is the joint-action count.
    observation
        Array of shape ``(S, O)`` where ``O = |O0| * prod(|On|)``; the joint
        observation index is row-major over ``(o0, o1, ..., oN)``.
    reward
        Expected-reward array of shape ``(S, A)``.
    initial
        Initial state distribution of shape ``(S,)``.
    """

    num_agents: int
    states: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    common_obs: tuple[str, ...]
    private_obs: tuple[tuple[str, ...], ...]
    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    initial: np.ndarray
    horizon: int
    reward_bound: float

    def __post_init__(self):
        for name in ("transition", "observation", "reward", "initial"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    # -- index arithmetic -------------------------------------------------

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def action_sizes(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.actions)

    @property
    def private_obs_sizes(self) -> tuple[int, ...]:
        return tuple(len(o) for o in self.private_obs)

    @property
    def num_joint_actions(self) -> int:
        return int(np.prod(self.action_sizes))

    @property
    def num_joint_obs(self) -> int:
        return len(self.common_obs) * int(np.prod(self.private_obs_sizes))

    def joint_action_index(self, a: tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(a, self.action_sizes))

    def joint_obs_index(self, o0: int, opriv: tuple[int, ...]) -> int:
        dims = (len(self.common_obs),) + self.private_obs_sizes
        return int(np.ravel_multi_index((o0,) + tuple(opriv), dims))

    def iter_joint_actions(self) -> Iterator[tuple[int, ...]]:
        yield from itertools.product(*(range(k) for k in self.action_sizes))

    def iter_joint_obs(self) -> Iterator[JointObservation]:
        for o0 in range(len(self.common_obs)):
            for opriv in itertools.product(*(range(k) for k in self.private_obs_sizes)):
                yield JointObservation(o0, opriv)


def validate(model: DecPomdpModel) -> None:
    """Check every model invariant, raising with the full violation list."""
    violations: list[str] = []
    if model.num_agents < 1:
        violations.append("num_agents must be >= 1")
    if model.horizon < 1:
        violations.append("horizon must be >= 1")
    for name, labels in [("states", model.states), ("common_obs", model.common_obs)]:
        if len(labels) == 0:
            violations.append(f"{name} must be nonempty")
    if len(model.actions) != model.num_agents:
        violations.append("actions must list one alphabet per agent")
    if len(model.private_obs) != model.num_agents:
        violations.append("private_obs must list one alphabet per agent")
    for n, alpha in enumerate(model.actions):
        if len(alpha) == 0:
            violations.append(f"actions[{n}] must be nonempty")
    for n, alpha in enumerate(model.private_obs):
        if len(alpha) == 0:
            violations.append(f"private_obs[{n}] must be nonempty")
    if violations:
        raise ModelValidationError(violations)

    S, A, O = model.num_states, model.num_joint_actions, model.num_joint_obs
    if model.transition.shape != (S, A, S):
        violations.append(
            f"transition has shape {model.transition.shape}, expected {(S, A, S)}"
        )
    if model.observation.shape != (S, O):
        violations.append(
            f"observation has shape {model.observation.shape}, expected {(S, O)}"
        )
    if model.reward.shape != (S, A):
        violations.append(f"reward has shape {model.reward.shape}, expected {(S, A)}")
    if model.initial.shape != (S,):
        violations.append(f"initial has shape {model.initial.shape}, expected {(S,)}")
    if violations:
        raise ModelValidationError(violations)

    def check_rows(arr: np.ndarray, what: str):
        rows = arr.reshape(-1, arr.shape[-1])
        for i, row in enumerate(rows):
            idx = np.unravel_index(i, arr.shape[:-1]) if arr.ndim > 1 else ()
            locus = f"{what}{list(idx)}" if idx else what
            if (row < 0).any():
                violations.append(f"{locus} has a negative entry")
            total = float(row.sum())
            if abs(total - 1.0) > SUM_TOL:
                violations.append(f"{locus} sums to {total:.12g}, expected 1")

    check_rows(model.transition, "transition")
    check_rows(model.observation, "observation")
    check_rows(model.initial[None, :], "initial")
    if model.reward_bound < 0:
        violations.append("reward_bound must be nonnegative")
    else:
        worst = float(np.abs(model.reward).max()) if model.reward.size else 0.0
        if worst > model.reward_bound + SUM_TOL:
            violations.append(
                f"reward magnitude {worst:.12g} exceeds reward_bound {model.reward_bound:.12g}"
            )
    if violations:
        raise ModelValidationError(violations)


def _nested_to_flat_actions(model_dims: tuple[int, ...], nested, what: str) -> np.ndarray:
    arr = np.asarray(nested, dtype=float)
    expected_ndim = len(model_dims)
    if arr.ndim != expected_ndim:
        raise ModelFormatError(
            f"{what}: expected {expected_ndim} nested levels, got {arr.ndim}"
        )
    return arr


def from_dict(doc: dict) -> DecPomdpModel:
    """Build and validate a model from a parsed document dictionary."""
    try:
        num_agents = int(doc["num_agents"])
        states = tuple(doc["states"])
        actions = tuple(tuple(a) for a in doc["actions"])
        common_obs = tuple(doc["common_obs"])
        private_obs = tuple(tuple(o) for o in doc["private_obs"])
        horizon = int(doc["horizon"])
    except KeyError as exc:
        raise ModelFormatError(f"missing field {exc.args[0]!r}") from exc

    S = len(states)
    act_sizes = tuple(len(a) for a in actions)
    obs_sizes = tuple(len(o) for o in private_obs)
    try:
        transition = _nested_to_flat_actions(
            (S,) + act_sizes + (S,), doc["transition"], "transition"
        ).reshape(S, -1, S)
        observation = _nested_to_flat_actions(
            (S, len(common_obs)) + obs_sizes, doc["observation"], "observation"
        ).reshape(S, -1)
        reward = _nested_to_flat_actions(
            (S,) + act_sizes, doc["reward"], "reward"
        ).reshape(S, -1)
        initial = np.asarray(doc["initial"], dtype=float)
    except KeyError as exc:
        raise ModelFormatError(f"missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed tensor: {exc}") from exc

    reward_bound = doc.get("reward_bound")
    if reward_bound is None:
        reward_bound = float(np.abs(reward).max()) if reward.size else 0.0
    model = DecPomdpModel(
        num_agents=num_agents,
        states=states,
        actions=actions,
        common_obs=common_obs,
        private_obs=private_obs,
        transition=transition,
        observation=observation,
        reward=reward,
        initial=initial,
        horizon=horizon,
        reward_bound=float(reward_bound),
    )
    validate(model)
    return model


def load_model(text: str) -> DecPomdpModel:
    """Parse a JSON model document and validate it.

    Raises
    ------
    ModelFormatError
        On malformed JSON or missing/misshapen fields.
    ModelValidationError
        When the parsed model violates any invariant; all violations are listed.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    return from_dict(doc)


def to_dict(model: DecPomdpModel) -> dict:
    """Canonical document form; inverse of :func:`from_dict`."""
    S = model.num_states
    act_sizes = model.action_sizes
    obs_sizes = model.private_obs_sizes
    return {
        "num_agents": model.num_agents,
        "states": list(model.states),
        "actions": [list(a) for a in model.actions],
        "common_obs": list(model.common_obs),
        "private_obs": [list(o) for o in model.private_obs],
        "transition": model.transition.reshape((S,) + act_sizes + (S,)).tolist(),
        "observation": model.observation.reshape(
            (S, len(model.common_obs)) + obs_sizes
        ).tolist(),
        "reward": model.reward.reshape((S,) + act_sizes).tolist(),
        "initial": model.initial.tolist(),
        "horizon": model.horizon,
        "reward_bound": model.reward_bound,
    }


def serialize(model: DecPomdpModel) -> str:
    return json.dumps(to_dict(model), indent=2, sort_keys=True)


def next_joint_distribution(
    model: DecPomdpModel, s: int, a: JointAction | tuple[int, ...]
) -> dict[tuple[int, JointObservation], float]:
    """One-step law ``P(s', o) = P_T(s' | s, a) * P_O(o | s')``.

    Returns only atoms above the admissibility threshold; they sum to one
    within :data:`SUM_TOL` up to the pruned mass.
    """
    a_idx = _action_index(model, a)
    if not (0 <= s < model.num_states):
        raise IndexError(f"state index {s} out of range")
    out: dict[tuple[int, JointObservation], float] = {}
    for s_next in range(model.num_states):
        p_trans = float(model.transition[s, a_idx, s_next])
        if p_trans <= ADMISSIBILITY_THRESHOLD:
            continue
        for obs in model.iter_joint_obs():
            p = p_trans * float(
                model.observation[s_next, model.joint_obs_index(obs.common, obs.private)]
            )
            if p > ADMISSIBILITY_THRESHOLD:
                out[(s_next, obs)] = out.get((s_next, obs), 0.0) + p
    return out


def expected_reward(model: DecPomdpModel, s: int, a: JointAction | tuple[int, ...]) -> float:
    """Mean reward for ``(s, a)``; the only reward statistic the DPs use."""
    a_idx = _action_index(model, a)
    if not (0 <= s < model.num_states):
        raise IndexError(f"state index {s} out of range")
    return float(model.reward[s, a_idx])


def _action_index(model: DecPomdpModel, a) -> int:
    if isinstance(a, JointAction):
        a = a.indices
    a = tuple(a)
    if len(a) != model.num_agents:
        raise IndexError(f"joint action {a} has wrong arity")
    for n, (idx, size) in enumerate(zip(a, model.action_sizes)):
        if not (0 <= idx < size):
            raise IndexError(f"action index {idx} out of range for agent {n}")
    return model.joint_action_index(a)
