"""Exact backward dynamic program over coordinator histories, the omniscient
evaluator's Q function, and a brute-force policy-enumeration oracle.

The backward sweep and its compressed variants share one generic solver:
callers can relabel each agent's private states (compressed prescription
domains) and re-key the per-time value entries (e.g. by belief fingerprint)
without touching the recursion.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .histories import (
    ADMISSIBILITY_THRESHOLD,
    FcsKey,
    FcsNode,
    FcsTree,
    JointHist,
    Prescription,
    enumerate_prescriptions,
)
from .model import DecPomdpModel

DEFAULT_BUDGET = 10**7
VALUE_TOL = 1e-9


class BudgetExceededError(RuntimeError):
    """The configured cap on Q evaluations (or enumerated policies) was hit."""

    def __init__(self, locus, budget: int):
        self.locus = locus
        self.budget = budget
        super().__init__(f"budget of {budget} exceeded at {locus!r}")


class InadmissibleHistoryError(ValueError):
    """A joint private history with zero conditional probability was supplied."""


@dataclass
class ValueEntry:
    value: float
    argmax_index: int
    argmax_key: tuple
    q_values: tuple[float, ...]


@dataclass
class ValueTable:
    """Per-time, per-state-key values of one backward sweep."""

    horizon: int
    entries: dict[tuple[int, object], ValueEntry] = field(default_factory=dict)
    overall_value: float = 0.0

    def value(self, t: int, key) -> float:
        return self.entries[(t, key)].value


@dataclass
class CoordinatorPolicy:
    """Map from coordinator history to the prescription chosen there.

    Prescriptions are stored in history-domain form (compressed solves store
    the extension), so the policy can always be replayed on the real tree.
    """

    prescriptions: dict[FcsKey, Prescription] = field(default_factory=dict)

    def at(self, seq: FcsKey) -> Prescription:
        return self.prescriptions[seq]


def _identity_setup(tree: FcsTree, node: FcsNode):
    prescs = enumerate_prescriptions(tree.model, tree.agent_domains(node))
    return [(p, p) for p in prescs]


def generic_solve(
    model: DecPomdpModel,
    tree: FcsTree | None = None,
    *,
    prescription_pairs=None,
    key_fn=None,
    budget: int = DEFAULT_BUDGET,
) -> tuple[ValueTable, CoordinatorPolicy]:
    """Backward sweep shared by the exact and compressed dynamic programs.

    Parameters
    ----------
    prescription_pairs
        Callable ``node -> [(action_prescription, history_prescription), ...]``
        in canonical order.  The first element is the coordinator's action as
        recorded in value entries; the second is its history-domain form used
        to drive the dynamics.  Defaults to the uncompressed space where the
        two coincide.
    key_fn
        Callable ``node -> hashable`` keying value entries per time step;
        defaults to the node sequence itself.
    """
    tree = tree or FcsTree(model)
    if prescription_pairs is None:
        prescription_pairs = lambda node: _identity_setup(tree, node)
    if key_fn is None:
        key_fn = lambda node: node.seq
    table = ValueTable(horizon=model.horizon)
    policy = CoordinatorPolicy()
    evals = [0]

    def solve(node: FcsNode) -> float:
        key = key_fn(node)
        if (node.t, key) in table.entries:
            return table.entries[(node.t, key)].value
        pairs = prescription_pairs(node)
        best_val = None
        best_idx = -1
        best_key = None
        best_gamma = None
        qs = []
        for idx, (action_presc, gamma) in enumerate(pairs):
            evals[0] += 1
            if evals[0] > budget:
                raise BudgetExceededError(node.seq, budget)
            q = 0.0
            for (s, hjoint), w in node.weights:
                q += w * float(model.reward[s, model.joint_action_index(gamma.act(hjoint))])
            if node.t < model.horizon:
                for _o0, child, p in tree.expand(node, gamma):
                    q += p * solve(child)
            qs.append(q)
            # Strict improvement only: ties resolve to the smallest canonical index.
            if best_val is None or q > best_val:
                best_val = q
                best_idx = idx
                best_key = action_presc.key
                best_gamma = gamma
        table.entries[(node.t, key)] = ValueEntry(
            value=best_val,
            argmax_index=best_idx,
            argmax_key=best_key,
            q_values=tuple(qs),
        )
        policy.prescriptions.setdefault(node.seq, best_gamma)
        return best_val

    overall = 0.0
    for _o0, root, p_root in tree.roots():
        overall += p_root * solve(root)
    table.overall_value = overall
    return table, policy


def solve_fcs_fps(
    model: DecPomdpModel,
    tree: FcsTree | None = None,
    budget: int = DEFAULT_BUDGET,
) -> tuple[ValueTable, CoordinatorPolicy]:
    """Exact sweep over the full coordinator tree with uncompressed prescriptions.

    Value entries are keyed ``(t, node sequence)``; the returned table's
    ``overall_value`` is the common-observation-weighted root value.
    """
    return generic_solve(model, tree, budget=budget)


def supervisor_q(
    model: DecPomdpModel,
    tree: FcsTree,
    node: FcsNode,
    hjoint: JointHist,
    gamma: Prescription,
    policy: CoordinatorPolicy,
) -> float:
    """Expected remaining reward given the full joint history, one prescription
    now, and the optimal continuation policy afterwards.

    Computed by exact forward trajectory enumeration; rejects joint histories
    that are inadmissible at ``node``.
    """
    sdist: dict[int, float] = {}
    mass = 0.0
    for (s, h), w in node.weights:
        if h == hjoint:
            sdist[s] = sdist.get(s, 0.0) + w
            mass += w
    if mass <= ADMISSIBILITY_THRESHOLD:
        raise InadmissibleHistoryError(
            f"history {hjoint!r} is inadmissible at node {node.seq!r}"
        )
    sdist = {s: w / mass for s, w in sdist.items()}
    return _supervisor_recurse(model, tree, node, hjoint, sdist, gamma, policy)


def _supervisor_recurse(model, tree, node, hjoint, sdist, gamma, policy) -> float:
    a = gamma.act(hjoint)
    a_idx = model.joint_action_index(a)
    total = sum(w * float(model.reward[s, a_idx]) for s, w in sorted(sdist.items()))
    if node.t >= model.horizon:
        return total
    branches: dict[tuple[int, tuple[int, ...]], dict[int, float]] = {}
    for s, w in sorted(sdist.items()):
        for s_next in range(model.num_states):
            p_trans = float(model.transition[s, a_idx, s_next])
            if p_trans <= ADMISSIBILITY_THRESHOLD:
                continue
            for obs in model.iter_joint_obs():
                p = w * p_trans * float(
                    model.observation[s_next, model.joint_obs_index(obs.common, obs.private)]
                )
                if p <= ADMISSIBILITY_THRESHOLD:
                    continue
                acc = branches.setdefault((obs.common, obs.private), {})
                acc[s_next] = acc.get(s_next, 0.0) + p
    for (o0, opriv), srow in sorted(branches.items()):
        p_branch = sum(srow.values())
        child = tree.node(node.seq + (gamma.key, o0))
        h_next = tuple(h + (an, on) for h, an, on in zip(hjoint, a, opriv))
        sdist_next = {s: w / p_branch for s, w in srow.items()}
        total += p_branch * _supervisor_recurse(
            model, tree, child, h_next, sdist_next, policy.at(child.seq), policy
        )
    return total


# -- brute-force oracle ---------------------------------------------------


def _count_policies(model, tree, node) -> int:
    prescs = enumerate_prescriptions(model, tree.agent_domains(node))
    if node.t >= model.horizon:
        return len(prescs)
    total = 0
    for gamma in prescs:
        prod = 1
        for _o0, child, _p in tree.expand(node, gamma):
            prod *= _count_policies(model, tree, child)
        total += prod
    return total


def _iter_policies(model, tree, node):
    prescs = enumerate_prescriptions(model, tree.agent_domains(node))
    for gamma in prescs:
        if node.t >= model.horizon:
            yield {node.seq: gamma}
            continue
        children = [child for _o0, child, _p in tree.expand(node, gamma)]
        for combo in itertools.product(
            *(list(_iter_policies(model, tree, child)) for child in children)
        ):
            out = {node.seq: gamma}
            for sub in combo:
                out.update(sub)
            yield out


def _evaluate_policy_forward(model: DecPomdpModel, o0_root: int, policy: dict) -> float:
    """Expected cumulative reward contribution of one root branch, computed by
    raw trajectory enumeration straight from the model tensors."""
    items: dict[tuple[FcsKey, int, JointHist], float] = {}
    for s in range(model.num_states):
        p_init = float(model.initial[s])
        if p_init <= ADMISSIBILITY_THRESHOLD:
            continue
        for obs in model.iter_joint_obs():
            if obs.common != o0_root:
                continue
            p = p_init * float(
                model.observation[s, model.joint_obs_index(obs.common, obs.private)]
            )
            if p <= ADMISSIBILITY_THRESHOLD:
                continue
            key = ((o0_root,), s, tuple((o,) for o in obs.private))
            items[key] = items.get(key, 0.0) + p
    total = 0.0
    for t in range(1, model.horizon + 1):
        nxt: dict[tuple[FcsKey, int, JointHist], float] = {}
        for (seq, s, hjoint), p in sorted(items.items()):
            gamma = policy[seq]
            a = gamma.act(hjoint)
            a_idx = model.joint_action_index(a)
            total += p * float(model.reward[s, a_idx])
            if t == model.horizon:
                continue
            for s_next in range(model.num_states):
                p_trans = float(model.transition[s, a_idx, s_next])
                if p_trans <= ADMISSIBILITY_THRESHOLD:
                    continue
                for obs in model.iter_joint_obs():
                    p2 = p * p_trans * float(
                        model.observation[
                            s_next, model.joint_obs_index(obs.common, obs.private)
                        ]
                    )
                    if p2 <= ADMISSIBILITY_THRESHOLD:
                        continue
                    h_next = tuple(
                        h + (an, on) for h, an, on in zip(hjoint, a, obs.private)
                    )
                    key = (seq + (gamma.key, obs.common), s_next, h_next)
                    nxt[key] = nxt.get(key, 0.0) + p2
        items = nxt
    return total


class _TrajectoryCache:
    """Unnormalized (state, joint history) items per coordinator sequence,
    built from the raw model tensors only, plus per-(sequence, prescription)
    expected-reward contributions.  Shared across enumerated policies."""

    def __init__(self, model: DecPomdpModel):
        self.model = model
        self.items: dict[FcsKey, dict] = {}
        self.contrib: dict[tuple, float] = {}

    def items_at(self, seq: FcsKey) -> dict:
        if seq in self.items:
            return self.items[seq]
        m = self.model
        out: dict = {}
        if len(seq) == 1:
            for s in range(m.num_states):
                p_init = float(m.initial[s])
                if p_init <= ADMISSIBILITY_THRESHOLD:
                    continue
                for obs in m.iter_joint_obs():
                    if obs.common != seq[0]:
                        continue
                    p = p_init * float(
                        m.observation[s, m.joint_obs_index(obs.common, obs.private)]
                    )
                    if p > ADMISSIBILITY_THRESHOLD:
                        key = (s, tuple((o,) for o in obs.private))
                        out[key] = out.get(key, 0.0) + p
        else:
            parent = self.items_at(seq[:-2])
            gamma, o0 = Prescription(seq[-2]), seq[-1]
            for (s, hjoint), p in parent.items():
                a = gamma.act(hjoint)
                a_idx = m.joint_action_index(a)
                for s_next in range(m.num_states):
                    p2 = p * float(m.transition[s, a_idx, s_next])
                    if p2 <= ADMISSIBILITY_THRESHOLD:
                        continue
                    for obs in m.iter_joint_obs():
                        if obs.common != o0:
                            continue
                        p3 = p2 * float(
                            m.observation[
                                s_next, m.joint_obs_index(obs.common, obs.private)
                            ]
                        )
                        if p3 <= ADMISSIBILITY_THRESHOLD:
                            continue
                        h_next = tuple(
                            h + (an, on)
                            for h, an, on in zip(hjoint, a, obs.private)
                        )
                        key = (s_next, h_next)
                        out[key] = out.get(key, 0.0) + p3
        self.items[seq] = out
        return out

    def contribution(self, seq: FcsKey, gamma: Prescription) -> float:
        key = (seq, gamma.key)
        if key not in self.contrib:
            m = self.model
            self.contrib[key] = sum(
                p * float(m.reward[s, m.joint_action_index(gamma.act(hjoint))])
                for (s, hjoint), p in self.items_at(seq).items()
            )
        return self.contrib[key]


def brute_force_value(model: DecPomdpModel, budget: int = DEFAULT_BUDGET) -> float:
    """Maximum expected cumulative reward over every deterministic coordinator
    policy, evaluated by forward trajectory enumeration from the raw tensors.

    The per-root policy choices are independent, so the maximization splits
    across root branches; within a branch every complete prescription
    assignment is enumerated explicitly, with per-edge expected rewards
    cached across policies sharing a prefix.
    """
    tree = FcsTree(model)
    total_policies = 0
    for _o0, root, _p in tree.roots():
        total_policies += _count_policies(model, tree, root)
        if total_policies > budget:
            raise BudgetExceededError(root.seq, budget)
    cache = _TrajectoryCache(model)
    value = 0.0
    for _o0, root, _p in tree.roots():
        best = None
        for assignment in _iter_policies(model, tree, root):
            v = sum(
                cache.contribution(seq, gamma) for seq, gamma in assignment.items()
            )
            if best is None or v > best:
                best = v
        value += best
    return value


def evaluate_coordinator_policy(model: DecPomdpModel, policy: CoordinatorPolicy) -> float:
    """Expected cumulative reward of replaying a fixed policy on the real tree."""
    total = 0.0
    for o0, _root, _p in FcsTree(model).roots():
        total += _evaluate_policy_forward(model, o0, policy.prescriptions)
    return total


def solve_report(table: ValueTable, algorithm: str) -> dict:
    """Structured solve summary: per-time value entries plus the overall value."""
    rows = []
    for (t, key), entry in sorted(table.entries.items(), key=lambda kv: (kv[0][0], repr(kv[0][1]))):
        rows.append(
            {
                "t": t,
                "state_key": repr(key),
                "value": entry.value,
                "argmax_index": entry.argmax_index,
            }
        )
    return {"algorithm": algorithm, "overall_value": table.overall_value, "rows": rows}
