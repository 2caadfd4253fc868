"""Belief common states, Bayesian updates, belief-keyed dynamic programs, and
sufficient-private-information condition checking.

A belief state is the conditional distribution over (system state, joint
private history) given a coordinator history; re-keying the backward sweep by
a rounded fingerprint of this distribution merges coordinator histories that
carry the same decision-relevant information.  The private-side analogue
relabels each agent's history through a sufficiency map and is accepted only
when the four sufficiency conditions verify exhaustively.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .exact_dp import (
    DEFAULT_BUDGET,
    CoordinatorPolicy,
    ValueTable,
    generic_solve,
)
from .histories import (
    FcsKey,
    FcsNode,
    FcsTree,
    Hist,
    JointHist,
    Prescription,
    enumerate_prescriptions,
    extend_by_labels,
    level_nodes,
)
from .model import ADMISSIBILITY_THRESHOLD, DecPomdpModel

FINGERPRINT_DECIMALS = 9
CHECK_TOL = 1e-9


class ZeroProbabilityBranchError(ValueError):
    """Bayes update requested along a common observation of zero probability."""


class SpiConditionError(ValueError):
    """A sufficiency map failing its condition check was passed to the DP."""


@dataclass(frozen=True)
class BeliefState:
    """Distribution over (state, per-agent private keys) at one time step."""

    t: int
    atoms: tuple[tuple[tuple[int, tuple], float], ...]

    def atom_map(self) -> dict:
        return dict(self.atoms)

    @property
    def fingerprint(self) -> tuple:
        return (
            self.t,
            tuple((k, round(p, FINGERPRINT_DECIMALS)) for k, p in self.atoms),
        )


def _belief_from_raw(t: int, raw: dict) -> BeliefState:
    total = sum(raw.values())
    return BeliefState(
        t=t, atoms=tuple(sorted((k, p / total) for k, p in raw.items()))
    )


def compute_bcs(tree: FcsTree, node: FcsNode, label_of=None) -> BeliefState:
    """Belief over (state, joint private history) at a coordinator node.

    With ``label_of(agent, hist) -> key`` the private coordinates are mapped
    through a compression before aggregation.
    """
    raw: dict = {}
    for (s, hjoint), w in node.weights:
        if label_of is None:
            key = (s, hjoint)
        else:
            key = (s, tuple(label_of(n, h) for n, h in enumerate(hjoint)))
        raw[key] = raw.get(key, 0.0) + w
    return _belief_from_raw(node.t, raw)


def _belief_successors(
    model: DecPomdpModel, belief: BeliefState, gamma: Prescription
) -> dict[int, dict]:
    """Unnormalized successor weights per common observation branch."""
    per_o0: dict[int, dict] = {}
    for (s, hjoint), w in belief.atoms:
        a = gamma.act(hjoint)
        a_idx = model.joint_action_index(a)
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
                h_next = tuple(
                    h + (an, on) for h, an, on in zip(hjoint, a, obs.private)
                )
                acc = per_o0.setdefault(obs.common, {})
                acc[(s_next, h_next)] = acc.get((s_next, h_next), 0.0) + p
    return per_o0


def branch_probabilities(
    model: DecPomdpModel, belief: BeliefState, gamma: Prescription
) -> dict[int, float]:
    return {
        o0: sum(raw.values())
        for o0, raw in sorted(_belief_successors(model, belief, gamma).items())
    }


def bayes_update(
    model: DecPomdpModel, belief: BeliefState, gamma: Prescription, o0: int
) -> BeliefState:
    """Posterior belief after prescribing ``gamma`` and observing ``o0``.

    Matches the direct computation on the child coordinator node atom-for-atom.
    """
    per_o0 = _belief_successors(model, belief, gamma)
    raw = per_o0.get(o0)
    if raw is None or sum(raw.values()) <= ADMISSIBILITY_THRESHOLD:
        raise ZeroProbabilityBranchError(
            f"common observation {o0} has zero probability under this belief"
        )
    return _belief_from_raw(belief.t + 1, raw)


def solve_bcs_fps(
    model: DecPomdpModel,
    tree: FcsTree | None = None,
    budget: int = DEFAULT_BUDGET,
) -> tuple[ValueTable, CoordinatorPolicy]:
    """Backward sweep keyed by belief fingerprint instead of the raw history.

    Coordinator histories with equal (rounded) beliefs share one value entry.
    """
    tree = tree or FcsTree(model)
    return generic_solve(
        model,
        tree,
        key_fn=lambda node: compute_bcs(tree, node).fingerprint,
        budget=budget,
    )


# -- sufficient private information ---------------------------------------


@dataclass
class SpiMap:
    """Tabular per-agent relabeling of private histories, per coordinator node.

    ``labels[(t, fcs_key, agent, hist)]`` is the compressed private state.
    """

    labels: dict[tuple[int, FcsKey, int, Hist], object] = field(default_factory=dict)

    def label(self, t: int, fcs_key: FcsKey, agent: int, hist: Hist):
        return self.labels[(t, fcs_key, agent, hist)]

    def label_domains(self, node: FcsNode, hist_domains) -> tuple[tuple, ...]:
        out = []
        for n, domain in enumerate(hist_domains):
            out.append(tuple(sorted({self.label(node.t, node.seq, n, h) for h in domain})))
        return tuple(out)


def identity_spi(model: DecPomdpModel, tree: FcsTree | None = None) -> SpiMap:
    """The lossless map: every private history is its own label."""
    tree = tree or FcsTree(model)
    spi = SpiMap()
    for t in range(1, model.horizon + 1):
        for node in level_nodes(tree, t):
            for n, domain in enumerate(tree.agent_domains(node)):
                for h in domain:
                    spi.labels[(t, node.seq, n, h)] = h
    return spi


def constant_spi(model: DecPomdpModel, tree: FcsTree | None = None) -> SpiMap:
    """Maps every private history of every agent to a single label."""
    tree = tree or FcsTree(model)
    spi = SpiMap()
    for t in range(1, model.horizon + 1):
        for node in level_nodes(tree, t):
            for n, domain in enumerate(tree.agent_domains(node)):
                for h in domain:
                    spi.labels[(t, node.seq, n, h)] = 0
    return spi


@dataclass
class ConditionResult:
    condition: str
    passed: bool
    max_violation: float
    witness: object | None
    note: str = ""


@dataclass
class ConditionReport:
    results: list[ConditionResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def result(self, condition: str) -> ConditionResult:
        for r in self.results:
            if r.condition == condition:
                return r
        raise KeyError(condition)

    def to_jsonable(self) -> dict:
        return {
            "passed": self.passed,
            "results": [
                {
                    "condition": r.condition,
                    "passed": r.passed,
                    "max_violation": r.max_violation,
                    "witness": repr(r.witness),
                    "note": r.note,
                }
                for r in self.results
            ],
        }


def _tv(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _state_conditional(node: FcsNode, predicate) -> dict[int, float]:
    """P(s | node, predicate over joint history), normalized."""
    raw: dict[int, float] = {}
    for (s, hjoint), w in node.weights:
        if predicate(hjoint):
            raw[s] = raw.get(s, 0.0) + w
    total = sum(raw.values())
    return {s: w / total for s, w in raw.items()}


def _next_obs_distribution(
    model: DecPomdpModel, sdist: dict[int, float], a_idx: int
) -> dict[tuple[int, tuple[int, ...]], float]:
    """P(o0', o1..N' | state mixture, joint action)."""
    out: dict = {}
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
                key = (obs.common, obs.private)
                out[key] = out.get(key, 0.0) + p
    return out


def check_spi(
    model: DecPomdpModel, spi: SpiMap, tree: FcsTree | None = None
) -> ConditionReport:
    """Exhaustively evaluate the four sufficiency conditions at desk scale.

    The third condition conditions jointly on a prescription and an action;
    only consistent pairs (the action the prescription actually chooses for
    the evaluated history) are enumerated, which is recorded in the report.
    """
    tree = tree or FcsTree(model)
    report = ConditionReport()

    # Condition 1: well-defined recursive update.  Tuples with equal
    # (node, label, prescription, increments) must share a successor label.
    viol1, wit1 = 0.0, None
    seen_updates: dict[tuple, object] = {}
    for t in range(1, model.horizon):
        for node in level_nodes(tree, t):
            hist_domains = tree.agent_domains(node)
            for gamma in enumerate_prescriptions(model, hist_domains):
                for _o0, child, _p in tree.expand(node, gamma):
                    for n, domain in enumerate(hist_domains):
                        for h in domain:
                            an = gamma.action_for(n, h)
                            for on in range(model.private_obs_sizes[n]):
                                h_next = h + (an, on)
                                key_next = (t + 1, child.seq, n, h_next)
                                if key_next not in spi.labels:
                                    continue
                                z = spi.label(t, node.seq, n, h)
                                upd_key = (node.seq, n, z, gamma.key, child.last_common_obs, an, on)
                                z_next = spi.labels[key_next]
                                prev = seen_updates.setdefault(upd_key, z_next)
                                if prev != z_next and viol1 == 0.0:
                                    viol1 = 1.0
                                    wit1 = (node.seq, n, h, h_next, prev, z_next)
    report.results.append(
        ConditionResult("SPI1", viol1 <= CHECK_TOL, viol1, wit1)
    )

    viol2, wit2 = 0.0, None
    viol3, wit3 = 0.0, None
    viol4, wit4 = 0.0, None
    for t in range(1, model.horizon + 1):
        for node in level_nodes(tree, t):
            hist_domains = tree.agent_domains(node)
            wmap = node.weight_map()

            # Per-agent marginals and label groupings.
            for n, domain in enumerate(hist_domains):
                groups: dict[object, list[Hist]] = {}
                hist_prob: dict[Hist, float] = {}
                for (s, hjoint), w in node.weights:
                    hist_prob[hjoint[n]] = hist_prob.get(hjoint[n], 0.0) + w
                for h in domain:
                    groups.setdefault(spi.label(t, node.seq, n, h), []).append(h)

                for h in domain:
                    z = spi.label(t, node.seq, n, h)
                    pre = groups[z]
                    sdist_h = _state_conditional(node, lambda hj: hj[n] == h)
                    sdist_z = _state_conditional(node, lambda hj: hj[n] in pre)
                    # Condition 2: reward sufficiency for every joint action.
                    for a in model.iter_joint_actions():
                        a_idx = model.joint_action_index(a)
                        e_h = sum(w * float(model.reward[s, a_idx]) for s, w in sdist_h.items())
                        e_z = sum(w * float(model.reward[s, a_idx]) for s, w in sdist_z.items())
                        d = abs(e_h - e_z)
                        if d > viol2:
                            viol2, wit2 = d, (node.seq, n, h, a)
                    # Condition 4: predicting the other agents' labels.
                    def other_labels(hj):
                        return tuple(
                            spi.label(t, node.seq, m, hj[m])
                            for m in range(model.num_agents)
                            if m != n
                        )

                    dist_h: dict = {}
                    dist_z: dict = {}
                    for (s, hjoint), w in node.weights:
                        if hjoint[n] == h:
                            dist_h[other_labels(hjoint)] = (
                                dist_h.get(other_labels(hjoint), 0.0) + w
                            )
                        if hjoint[n] in pre:
                            dist_z[other_labels(hjoint)] = (
                                dist_z.get(other_labels(hjoint), 0.0) + w
                            )
                    mass_h = sum(dist_h.values())
                    mass_z = sum(dist_z.values())
                    d = _tv(
                        {k: v / mass_h for k, v in dist_h.items()},
                        {k: v / mass_z for k, v in dist_z.items()},
                    )
                    if d > viol4:
                        viol4, wit4 = d, (node.seq, n, h)

            # Condition 3: predicting the next joint labels and the common
            # observation, under consistent (prescription, action) pairs.
            if t < model.horizon:
                fps = tree.reachable_fps(node)
                joint_label = {
                    f.histories: tuple(
                        spi.label(t, node.seq, m, f.histories[m])
                        for m in range(model.num_agents)
                    )
                    for f in fps
                }
                fps_prob = {f.histories: f.probability for f in fps}
                for gamma in enumerate_prescriptions(model, hist_domains):
                    children = {
                        o0: child for o0, child, _p in tree.expand(node, gamma)
                    }

                    def future_dist(hjoint, a):
                        sdist = _state_conditional(node, lambda hj: hj == hjoint)
                        obs_dist = _next_obs_distribution(
                            model, sdist, model.joint_action_index(a)
                        )
                        out: dict = {}
                        for (o0, opriv), p in obs_dist.items():
                            child = children.get(o0)
                            if child is None:
                                key = (("unreachable", o0), o0)
                            else:
                                z_next = tuple(
                                    spi.labels.get(
                                        (t + 1, child.seq, m, hjoint[m] + (a[m], opriv[m]))
                                    )
                                    for m in range(model.num_agents)
                                )
                                key = (z_next, o0)
                            out[key] = out.get(key, 0.0) + p
                        return out

                    for f in fps:
                        h = f.histories
                        a = gamma.act(h)
                        dist_h = future_dist(h, a)
                        z = joint_label[h]
                        # Conditioning on both the prescription and the action
                        # restricts the preimage to histories the prescription
                        # maps to that action.
                        pre = [
                            g
                            for g in joint_label
                            if joint_label[g] == z and gamma.act(g) == a
                        ]
                        mass = sum(fps_prob[g] for g in pre)
                        dist_z: dict = {}
                        for g in pre:
                            dg = future_dist(g, a)
                            for k, p in dg.items():
                                dist_z[k] = dist_z.get(k, 0.0) + fps_prob[g] / mass * p
                        d = _tv(dist_h, dist_z)
                        if d > viol3:
                            viol3, wit3 = d, (node.seq, h, gamma.key, a)

    report.results.append(ConditionResult("SPI2", viol2 <= CHECK_TOL, viol2, wit2))
    report.results.append(
        ConditionResult(
            "SPI3",
            viol3 <= CHECK_TOL,
            viol3,
            wit3,
            note="evaluated only at consistent (prescription, action) pairs",
        )
    )
    report.results.append(ConditionResult("SPI4", viol4 <= CHECK_TOL, viol4, wit4))
    report.results.sort(key=lambda r: r.condition)
    return report


def solve_bcs_spi(
    model: DecPomdpModel,
    spi: SpiMap,
    tree: FcsTree | None = None,
    budget: int = DEFAULT_BUDGET,
) -> tuple[ValueTable, CoordinatorPolicy]:
    """Belief-keyed sweep with prescriptions over compressed private labels.

    Rejects maps that fail :func:`check_spi`; with a passing map the overall
    value matches the uncompressed sweep exactly.
    """
    tree = tree or FcsTree(model)
    report = check_spi(model, spi, tree)
    if not report.passed:
        failed = [r.condition for r in report.results if not r.passed]
        raise SpiConditionError(f"sufficiency conditions failed: {', '.join(failed)}")

    def pairs(node: FcsNode):
        hist_domains = tree.agent_domains(node)
        label_domains = spi.label_domains(node, hist_domains)
        out = []
        for lam in enumerate_prescriptions(model, label_domains):
            gamma = extend_by_labels(
                hist_domains,
                lambda n, h: spi.label(node.t, node.seq, n, h),
                lam,
            )
            out.append((lam, gamma))
        return out

    def key_fn(node: FcsNode):
        return compute_bcs(
            tree, node, label_of=lambda n, h: spi.label(node.t, node.seq, n, h)
        ).fingerprint

    return generic_solve(
        model, tree, prescription_pairs=pairs, key_fn=key_fn, budget=budget
    )


def verify_propositions(model: DecPomdpModel, compressions) -> ConditionReport:
    """Check the implication structure among the sufficiency condition sets.

    For each supplied private compression: when the policy-independent
    recursive update and exact observation-prediction hold (premises at
    1e-9), the joint label/observation prediction condition must hold too;
    and when exact reward sufficiency plus cross-agent label prediction
    hold, per-agent reward sufficiency must follow (conclusions at 1e-6).
    Also verifies that the belief common state measures as an exact common
    compression.
    """
    from . import compression as comp

    tree = FcsTree(model)
    report = ConditionReport()

    pc_identity = comp.identity_private(model, tree)
    cc_bcs = comp.bcs_common(model, pc_identity, tree)
    mc = comp.measure_common(model, pc_identity, cc_bcs, tree=tree)
    report.results.append(
        ConditionResult(
            "bcs_is_exact_common",
            mc.eps_c <= CHECK_TOL and mc.delta_c <= CHECK_TOL,
            max(mc.eps_c, mc.delta_c),
            None,
            note="belief common state measured as zero-error compression",
        )
    )

    for i, pc in enumerate(compressions):
        rec = comp.check_recursive(model, pc, tree=tree)
        mp = comp.measure_private(model, pc, tree=tree, check=False)
        spi = spi_from_private(pc)
        spi_report = check_spi(model, spi, tree)

        sps1 = rec.passed
        sps2 = mp.eps_p <= 4 * CHECK_TOL
        sps3 = mp.delta_p <= 8 * CHECK_TOL
        spi4 = spi_report.result("SPI4").max_violation <= CHECK_TOL

        if sps1 and sps3:
            v = spi_report.result("SPI3").max_violation
            report.results.append(
                ConditionResult(
                    f"implication_recursive_obs_to_joint_prediction[{i}]",
                    v <= 1e-6,
                    v,
                    spi_report.result("SPI3").witness,
                )
            )
        if sps2 and spi4:
            v = spi_report.result("SPI2").max_violation
            report.results.append(
                ConditionResult(
                    f"implication_reward_crossagent_to_agent_reward[{i}]",
                    v <= 1e-6,
                    v,
                    spi_report.result("SPI2").witness,
                )
            )
    return report


def spi_from_private(pc) -> SpiMap:
    """View a tabular private compression as a sufficiency map (labels only)."""
    spi = SpiMap()
    spi.labels = dict(pc.theta)
    return spi
