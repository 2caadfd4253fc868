"""Private and common state compressions: representation, construction,
measurement, and serialization.

A private compression relabels each agent's private histories per coordinator
node with globally meaningful labels whose evolution is policy-independent
(the recursive update table is keyed by label, prescription id, and the new
observations only).  A common compression additionally merges coordinator
nodes.  Measurement computes the reward- and observation-prediction error of
each compression as exact suprema, folded by the conventional constant
factors so the results plug directly into the optimality-gap bound formulas.
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass, field

import numpy as np

from .belief import (
    ConditionReport,
    ConditionResult,
    _next_obs_distribution,
    _tv,
    compute_bcs,
)
from .histories import (
    FcsKey,
    FcsNode,
    FcsTree,
    Hist,
    Prescription,
    enumerate_prescriptions,
    extend_by_labels,
    level_nodes,
)
from .model import ADMISSIBILITY_THRESHOLD, DecPomdpModel

_MAX_REFINEMENT_ROUNDS = 10_000


class RecursiveCheckError(ValueError):
    """A compression failing its recursive-update check was passed downstream."""


class CompressionFormatError(ValueError):
    """Malformed serialized compression."""


def tv_distance(p, q) -> float:
    """Total variation distance, ½ Σ|p − q|.

    Accepts two mappings over a shared key universe or two equal-length
    sequences; mismatched sequence lengths are an error.
    """
    if isinstance(p, dict) or isinstance(q, dict):
        keys = set(p) | set(q)
        return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"mismatched universes: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


@dataclass
class PrivateCompression:
    """Per-agent relabeling of private histories with a recursive update.

    ``theta[(t, fcs_key, agent, hist)]`` is the label; ``phi[(agent, t,
    label, prescription_key, o0, obs)]`` gives the successor label.  Labels
    are shared across coordinator nodes, which is what makes ``phi``
    policy-independent.
    """

    num_agents: int
    horizon: int
    theta: dict = field(default_factory=dict)
    phi: dict = field(default_factory=dict)

    def label_of(self, t: int, seq: FcsKey, agent: int, hist: Hist):
        return self.theta[(t, seq, agent, hist)]

    def label_domains(self, node: FcsNode, hist_domains) -> tuple[tuple, ...]:
        return tuple(
            tuple(sorted({self.label_of(node.t, node.seq, n, h) for h in domain}))
            for n, domain in enumerate(hist_domains)
        )

    def alphabet(self, agent: int, t: int) -> tuple:
        return tuple(
            sorted(
                {
                    lab
                    for (tt, _seq, n, _h), lab in self.theta.items()
                    if tt == t and n == agent
                }
            )
        )


@dataclass
class CommonCompression:
    """Relabeling of coordinator nodes with a recursive update over labels."""

    horizon: int
    mu_id: str = "uniform"
    theta0: dict = field(default_factory=dict)
    phi0: dict = field(default_factory=dict)

    def label_of(self, t: int, seq: FcsKey):
        return self.theta0[(t, seq)]

    def alphabet(self, t: int) -> tuple:
        return tuple(sorted({lab for (tt, _s), lab in self.theta0.items() if tt == t}, key=repr))


@dataclass
class MeasuredParams:
    """Folded compression-error parameters with the witnesses attaining them.

    The supremum deviations are multiplied by 4 (private reward), 8 (private
    observation), 1 (common reward) and 2 (common observation) so the values
    feed the gap-bound formulas without further constants.
    """

    eps_p: float = 0.0
    delta_p: float = 0.0
    eps_c: float = 0.0
    delta_c: float = 0.0
    witnesses: dict = field(default_factory=dict)

    def merged(self, other: "MeasuredParams") -> "MeasuredParams":
        return MeasuredParams(
            eps_p=max(self.eps_p, other.eps_p),
            delta_p=max(self.delta_p, other.delta_p),
            eps_c=max(self.eps_c, other.eps_c),
            delta_c=max(self.delta_c, other.delta_c),
            witnesses={**self.witnesses, **other.witnesses},
        )


# -- tree traversal helpers ------------------------------------------------


def full_levels(model: DecPomdpModel, tree: FcsTree) -> list[list[FcsNode]]:
    """Reachable nodes per time step under every prescription."""
    return [level_nodes(tree, t) for t in range(1, model.horizon + 1)]


def extension(
    tree: FcsTree, node: FcsNode, pc: PrivateCompression, lam: Prescription
) -> Prescription:
    """Lift a label-domain prescription to this node's history domains."""
    return extend_by_labels(
        tree.agent_domains(node),
        lambda n, h: pc.label_of(node.t, node.seq, n, h),
        lam,
    )


def compressed_prescriptions(
    model: DecPomdpModel, tree: FcsTree, node: FcsNode, pc: PrivateCompression
) -> list[tuple[Prescription, Prescription]]:
    """All (label prescription, extension) pairs at a node, canonical order."""
    domains = pc.label_domains(node, tree.agent_domains(node))
    return [
        (lam, extension(tree, node, pc, lam))
        for lam in enumerate_prescriptions(model, domains)
    ]


def subtree_levels(
    model: DecPomdpModel, tree: FcsTree, pc: PrivateCompression
) -> list[list[FcsNode]]:
    """Nodes per time step reachable using only compressed prescriptions."""
    levels = [[node for _o0, node, _p in tree.roots()]]
    for _t in range(1, model.horizon):
        nxt, seen = [], set()
        for node in levels[-1]:
            for _lam, gamma in compressed_prescriptions(model, tree, node, pc):
                for _o0, child, _p in tree.expand(node, gamma):
                    if child.seq not in seen:
                        seen.add(child.seq)
                        nxt.append(child)
        levels.append(nxt)
    return levels


def mu_levels(
    model: DecPomdpModel, tree: FcsTree, pc: PrivateCompression, mu: str = "uniform"
) -> list[dict[FcsKey, float]]:
    """Forward law over the compressed-prescription subtree.

    The ``uniform`` reference measure draws the label prescription uniformly
    at every node; each level's masses sum to one.
    """
    if mu != "uniform":
        raise ValueError(f"unknown reference measure {mu!r}")
    masses = [{node.seq: p for _o0, node, p in tree.roots()}]
    for _t in range(1, model.horizon):
        nxt: dict[FcsKey, float] = {}
        for node_seq, mass in masses[-1].items():
            node = tree.node(node_seq)
            pairs = compressed_prescriptions(model, tree, node, pc)
            share = mass / len(pairs)
            for _lam, gamma in pairs:
                for _o0, child, p in tree.expand(node, gamma):
                    nxt[child.seq] = nxt.get(child.seq, 0.0) + share * p
        masses.append(nxt)
    return masses


# -- recursive-update checking --------------------------------------------


def check_recursive(
    model: DecPomdpModel,
    compression,
    pc: PrivateCompression | None = None,
    tree: FcsTree | None = None,
) -> ConditionReport:
    """Verify that the label tables factor through the recursive update on
    every reachable edge.  Violating edges become report content, not errors.
    """
    tree = tree or FcsTree(model)
    report = ConditionReport()
    if isinstance(compression, PrivateCompression):
        violations = []
        for t in range(1, model.horizon):
            for node in level_nodes(tree, t):
                hist_domains = tree.agent_domains(node)
                for lam, gamma in compressed_prescriptions(model, tree, node, compression):
                    for o0, child, _p in tree.expand(node, gamma):
                        for n, domain in enumerate(hist_domains):
                            for h in domain:
                                z = compression.label_of(t, node.seq, n, h)
                                a = lam.action_for(n, z)
                                for on in range(model.private_obs_sizes[n]):
                                    h_next = h + (a, on)
                                    tk = (t + 1, child.seq, n, h_next)
                                    if tk not in compression.theta:
                                        continue
                                    expected = compression.theta[tk]
                                    got = compression.phi.get((n, t, z, lam.key, o0, on))
                                    if got != expected:
                                        violations.append(
                                            (node.seq, n, h, o0, on, got, expected)
                                        )
        report.results.append(
            ConditionResult(
                "ASPS1",
                not violations,
                float(len(violations)),
                violations[0] if violations else None,
                note=f"{len(violations)} violating edges",
            )
        )
        return report
    if isinstance(compression, CommonCompression):
        if pc is None:
            raise ValueError("checking a common compression requires the private one")
        violations = []
        levels = subtree_levels(model, tree, pc)
        for t in range(1, model.horizon):
            for node in levels[t - 1]:
                z0 = compression.theta0.get((t, node.seq))
                for lam, gamma in compressed_prescriptions(model, tree, node, pc):
                    for o0, child, _p in tree.expand(node, gamma):
                        expected = compression.theta0.get((t + 1, child.seq))
                        got = compression.phi0.get((t, z0, lam.key, o0))
                        if got != expected:
                            violations.append((node.seq, o0, got, expected))
        report.results.append(
            ConditionResult(
                "ASCS1",
                not violations,
                float(len(violations)),
                violations[0] if violations else None,
                note=f"{len(violations)} violating edges",
            )
        )
        return report
    raise TypeError(f"not a compression: {type(compression).__name__}")


# -- measurement -----------------------------------------------------------


def _joint_reward(model: DecPomdpModel, sdist: dict[int, float], a_idx: int) -> float:
    return sum(w * float(model.reward[s, a_idx]) for s, w in sdist.items())


def measure_private(
    model: DecPomdpModel,
    pc: PrivateCompression,
    tree: FcsTree | None = None,
    check: bool = True,
) -> MeasuredParams:
    """Exact folded (ε_p, δ_p) of a private compression.

    The reward parameter is four times the largest discrepancy between the
    true conditional expected reward of a joint private history and that of
    its same-node label-preimage mixture, over every reachable node, history
    and joint action; the observation parameter is eight times the analogous
    supremum of total variation over next observations.
    """
    tree = tree or FcsTree(model)
    if check:
        rep = check_recursive(model, pc, tree=tree)
        if not rep.passed:
            raise RecursiveCheckError("recursive private update check failed")
    sup_r, sup_o = 0.0, 0.0
    wit: dict = {}
    for t in range(1, model.horizon + 1):
        for node in level_nodes(tree, t):
            fps = tree.reachable_fps(node)
            jlabel = {
                f.histories: tuple(
                    pc.label_of(t, node.seq, n, h)
                    for n, h in enumerate(f.histories)
                )
                for f in fps
            }
            classes: dict = {}
            for f in fps:
                classes.setdefault(jlabel[f.histories], []).append(f)
            for f in fps:
                pre = classes[jlabel[f.histories]]
                mass = sum(g.probability for g in pre)
                sdist_h = {
                    s: p / f.probability
                    for s, p in enumerate(f.state_probabilities)
                    if p > ADMISSIBILITY_THRESHOLD
                }
                sdist_z: dict[int, float] = {}
                for g in pre:
                    for s, p in enumerate(g.state_probabilities):
                        if p > ADMISSIBILITY_THRESHOLD:
                            sdist_z[s] = sdist_z.get(s, 0.0) + p / mass
                for a in model.iter_joint_actions():
                    a_idx = model.joint_action_index(a)
                    d = abs(
                        _joint_reward(model, sdist_h, a_idx)
                        - _joint_reward(model, sdist_z, a_idx)
                    )
                    if d > sup_r:
                        sup_r = d
                        wit["eps_p"] = ("eps_p", t, node.seq, f.histories, a)
                    if t < model.horizon:
                        d = _tv(
                            _next_obs_distribution(model, sdist_h, a_idx),
                            _next_obs_distribution(model, sdist_z, a_idx),
                        )
                        if d > sup_o:
                            sup_o = d
                            wit["delta_p"] = ("delta_p", t, node.seq, f.histories, a)
    return MeasuredParams(eps_p=4.0 * sup_r, delta_p=8.0 * sup_o, witnesses=wit)


def reevaluate_private_witness(
    model: DecPomdpModel,
    pc: PrivateCompression,
    witness,
    tree: FcsTree | None = None,
) -> float:
    """Recompute the folded value a private-measurement witness attains."""
    kind, t, seq, hjoint, a = witness
    tree = tree or FcsTree(model)
    node = tree.node(seq)
    fps = tree.reachable_fps(node)
    target = next(f for f in fps if f.histories == hjoint)
    jl = tuple(pc.label_of(t, seq, n, h) for n, h in enumerate(hjoint))
    pre = [
        f
        for f in fps
        if tuple(pc.label_of(t, seq, n, h) for n, h in enumerate(f.histories)) == jl
    ]
    mass = sum(f.probability for f in pre)
    sdist_h = {
        s: p / target.probability
        for s, p in enumerate(target.state_probabilities)
        if p > ADMISSIBILITY_THRESHOLD
    }
    sdist_z: dict[int, float] = {}
    for f in pre:
        for s, p in enumerate(f.state_probabilities):
            if p > ADMISSIBILITY_THRESHOLD:
                sdist_z[s] = sdist_z.get(s, 0.0) + p / mass
    a_idx = model.joint_action_index(a)
    if kind == "eps_p":
        return 4.0 * abs(
            _joint_reward(model, sdist_h, a_idx) - _joint_reward(model, sdist_z, a_idx)
        )
    if kind == "delta_p":
        return 8.0 * _tv(
            _next_obs_distribution(model, sdist_h, a_idx),
            _next_obs_distribution(model, sdist_z, a_idx),
        )
    raise ValueError(f"unknown witness kind {kind!r}")


def _node_reward_and_branches(model, node, gamma):
    """Immediate expected reward and next-common-observation law at a node."""
    r = 0.0
    obs: dict[int, float] = {}
    for (s, hjoint), w in node.weights:
        a = gamma.act(hjoint)
        a_idx = model.joint_action_index(a)
        r += w * float(model.reward[s, a_idx])
        for key, p in _next_obs_distribution(model, {s: w}, a_idx).items():
            obs[key[0]] = obs.get(key[0], 0.0) + p
    return r, obs


def measure_common(
    model: DecPomdpModel,
    pc: PrivateCompression,
    cc: CommonCompression,
    mu: str = "uniform",
    tree: FcsTree | None = None,
    check: bool = True,
) -> MeasuredParams:
    """Exact folded (ε_c, δ_c) of a common compression.

    Conditioning on a common label mixes its preimage nodes under the
    reference measure; the reward parameter is the largest per-node deviation
    of the immediate expected reward from the class mixture over every label
    prescription, and the observation parameter is twice the analogous total
    variation over the next common observation.
    """
    tree = tree or FcsTree(model)
    if check:
        rep = check_recursive(model, cc, pc=pc, tree=tree)
        if not rep.passed:
            raise RecursiveCheckError("recursive common update check failed")
    levels = subtree_levels(model, tree, pc)
    masses = mu_levels(model, tree, pc, mu)
    sup_r, sup_o = 0.0, 0.0
    wit: dict = {}
    for t in range(1, model.horizon + 1):
        classes: dict = {}
        for node in levels[t - 1]:
            classes.setdefault(cc.label_of(t, node.seq), []).append(node)
        for z0, members in classes.items():
            total = sum(masses[t - 1][n.seq] for n in members)
            mu_w = {n.seq: masses[t - 1][n.seq] / total for n in members}
            domains0 = pc.label_domains(members[0], tree.agent_domains(members[0]))
            for node in members[1:]:
                if pc.label_domains(node, tree.agent_domains(node)) != domains0:
                    raise ValueError(
                        f"common label {z0!r} merges nodes with different "
                        "private label domains"
                    )
            for lam in enumerate_prescriptions(model, domains0):
                per_node = {
                    node.seq: _node_reward_and_branches(
                        model, node, extension(tree, node, pc, lam)
                    )
                    for node in members
                }
                mix_r = sum(mu_w[seq] * r for seq, (r, _b) in per_node.items())
                mix_obs: dict[int, float] = {}
                for seq, (_r, branches) in per_node.items():
                    for o0, p in branches.items():
                        mix_obs[o0] = mix_obs.get(o0, 0.0) + mu_w[seq] * p
                for node in members:
                    r, branches = per_node[node.seq]
                    d = abs(r - mix_r)
                    if d > sup_r:
                        sup_r = d
                        wit["eps_c"] = ("eps_c", t, node.seq, lam.key)
                    if t < model.horizon:
                        d = _tv(branches, mix_obs)
                        if d > sup_o:
                            sup_o = d
                            wit["delta_c"] = ("delta_c", t, node.seq, lam.key)
    return MeasuredParams(eps_c=sup_r, delta_c=2.0 * sup_o, witnesses=wit)


def reevaluate_common_witness(
    model: DecPomdpModel,
    pc: PrivateCompression,
    cc: CommonCompression,
    witness,
    mu: str = "uniform",
    tree: FcsTree | None = None,
) -> float:
    """Recompute the folded value a common-measurement witness attains."""
    kind, t, seq, lam_key = witness
    tree = tree or FcsTree(model)
    levels = subtree_levels(model, tree, pc)
    masses = mu_levels(model, tree, pc, mu)
    z0 = cc.label_of(t, seq)
    members = [n for n in levels[t - 1] if cc.label_of(t, n.seq) == z0]
    total = sum(masses[t - 1][n.seq] for n in members)
    lam = Prescription(lam_key)
    per_node = {
        n.seq: _node_reward_and_branches(model, n, extension(tree, n, pc, lam))
        for n in members
    }
    mix_r = sum(masses[t - 1][s] / total * r for s, (r, _b) in per_node.items())
    mix_obs: dict[int, float] = {}
    for s, (_r, branches) in per_node.items():
        for o0, p in branches.items():
            mix_obs[o0] = mix_obs.get(o0, 0.0) + masses[t - 1][s] / total * p
    r, branches = per_node[seq]
    if kind == "eps_c":
        return abs(r - mix_r)
    if kind == "delta_c":
        return 2.0 * _tv(branches, mix_obs)
    raise ValueError(f"unknown witness kind {kind!r}")


# -- construction ----------------------------------------------------------


def identity_private(model: DecPomdpModel, tree: FcsTree | None = None) -> PrivateCompression:
    """The lossless private compression: each history is its own label."""
    tree = tree or FcsTree(model)
    pc = PrivateCompression(num_agents=model.num_agents, horizon=model.horizon)
    for t in range(1, model.horizon + 1):
        for node in level_nodes(tree, t):
            for n, domain in enumerate(tree.agent_domains(node)):
                for h in domain:
                    pc.theta[(t, node.seq, n, h)] = h
    _emit_phi(model, tree, pc)
    return pc


def _emit_phi(model: DecPomdpModel, tree: FcsTree, pc: PrivateCompression) -> None:
    """Fill the recursive update table from the labeled reachable edges."""
    pc.phi.clear()
    for t in range(1, model.horizon):
        for node in level_nodes(tree, t):
            hist_domains = tree.agent_domains(node)
            for lam, gamma in compressed_prescriptions(model, tree, node, pc):
                for o0, child, _p in tree.expand(node, gamma):
                    for n, domain in enumerate(hist_domains):
                        for h in domain:
                            z = pc.label_of(t, node.seq, n, h)
                            a = lam.action_for(n, z)
                            for on in range(model.private_obs_sizes[n]):
                                tk = (t + 1, child.seq, n, h + (a, on))
                                if tk in pc.theta:
                                    pc.phi[(n, t, z, lam.key, o0, on)] = pc.theta[tk]


def _greedy_partition(items, compatible, separated):
    """Agglomerate ``items`` in order; join the first class whose every member
    is pairwise compatible and not explicitly separated."""
    classes: list[list] = []
    for item in items:
        placed = False
        for cls in classes:
            if all(
                frozenset((item, other)) not in separated and compatible(item, other)
                for other in cls
            ):
                cls.append(item)
                placed = True
                break
        if not placed:
            classes.append([item])
    return classes


def build_greedy(
    model: DecPomdpModel,
    tol_r: float = 0.0,
    tol_o: float = 0.0,
    tree: FcsTree | None = None,
) -> PrivateCompression:
    """Greedy agglomerative private compression with recursive-closure repair.

    Pairs of (node, history) items merge when their per-agent one-step reward
    profiles differ at most ``tol_r`` and their observation profiles at most
    ``tol_o`` in total variation, scanning in canonical order.  The partition
    is then repaired to a fixed point: any two items whose merged label would
    make the recursive update multivalued are forced apart and the
    agglomeration rerun.  At zero tolerance the repair additionally splits
    classes until the measured parameters are exactly zero, so this partition
    doubles as the exact construction.
    """
    tree = tree or FcsTree(model)
    levels = full_levels(model, tree)

    # Per-item one-step statistics, used by the pairwise merge criterion.
    stats: dict = {}
    for t in range(1, model.horizon + 1):
        for node in levels[t - 1]:
            for n, domain in enumerate(tree.agent_domains(node)):
                for h in domain:
                    raw: dict[int, float] = {}
                    for (s, hjoint), w in node.weights:
                        if hjoint[n] == h:
                            raw[s] = raw.get(s, 0.0) + w
                    mass = sum(raw.values())
                    sdist = {s: w / mass for s, w in raw.items()}
                    rew, obs = {}, {}
                    for a in model.iter_joint_actions():
                        a_idx = model.joint_action_index(a)
                        rew[a] = _joint_reward(model, sdist, a_idx)
                        if t < model.horizon:
                            obs[a] = _next_obs_distribution(model, sdist, a_idx)
                    stats[(t, node.seq, n, h)] = (rew, obs)

    def compatible(i1, i2):
        rew1, obs1 = stats[i1]
        rew2, obs2 = stats[i2]
        for a in rew1:
            if abs(rew1[a] - rew2[a]) > tol_r:
                return False
            if a in obs1 and _tv(obs1[a], obs2[a]) > tol_o:
                return False
        return True

    exact = tol_r == 0.0 and tol_o == 0.0
    separated: set[frozenset] = set()
    for _round in range(_MAX_REFINEMENT_ROUNDS):
        pc = PrivateCompression(num_agents=model.num_agents, horizon=model.horizon)
        for t in range(1, model.horizon + 1):
            for n in range(model.num_agents):
                items = [
                    (t, node.seq, n, h)
                    for node in levels[t - 1]
                    for h in tree.agent_domains(node)[n]
                ]
                for idx, cls in enumerate(_greedy_partition(items, compatible, separated)):
                    for item in cls:
                        pc.theta[item] = idx

        conflict = _closure_conflict(model, tree, pc)
        if conflict is not None:
            separated.add(conflict)
            continue
        if exact:
            split = _exactness_split(model, tree, pc)
            if split:
                separated.update(split)
                continue
        _emit_phi(model, tree, pc)
        return pc
    raise RuntimeError("partition refinement did not reach a fixed point")


def _closure_conflict(model, tree, pc):
    """First pair of items forcing a multivalued recursive update, if any."""
    phi_src: dict = {}
    for t in range(1, model.horizon):
        for node in level_nodes(tree, t):
            hist_domains = tree.agent_domains(node)
            for lam, gamma in compressed_prescriptions(model, tree, node, pc):
                for o0, child, _p in tree.expand(node, gamma):
                    for n, domain in enumerate(hist_domains):
                        for h in domain:
                            z = pc.label_of(t, node.seq, n, h)
                            a = lam.action_for(n, z)
                            for on in range(model.private_obs_sizes[n]):
                                tk = (t + 1, child.seq, n, h + (a, on))
                                if tk not in pc.theta:
                                    continue
                                key = (n, t, z, lam.key, o0, on)
                                entry = (pc.theta[tk], (t, node.seq, n, h))
                                prev = phi_src.setdefault(key, entry)
                                if prev[0] != entry[0]:
                                    return frozenset((prev[1], entry[1]))
    return None


def _exactness_split(model, tree, pc):
    """Separations needed to zero the measured parameters, from one witness."""
    mp = measure_private(model, pc, tree=tree, check=False)
    for kind in ("eps_p", "delta_p"):
        value = getattr(mp, kind)
        if value > ADMISSIBILITY_THRESHOLD:
            _k, t, seq, hjoint, _a = mp.witnesses[kind]
            node = tree.node(seq)
            for n, h in enumerate(hjoint):
                z = pc.label_of(t, seq, n, h)
                mates = [
                    g
                    for g in tree.agent_domains(node)[n]
                    if g != h and pc.label_of(t, seq, n, g) == z
                ]
                if mates:
                    return {
                        frozenset(((t, seq, n, h), (t, seq, n, g))) for g in mates
                    }
    return set()


def build_exact_private(model: DecPomdpModel, tree: FcsTree | None = None) -> PrivateCompression:
    """Lossless private compression by partition refinement: the greedy
    agglomeration at zero tolerance, split to closure and exactness."""
    return build_greedy(model, 0.0, 0.0, tree=tree)


def identity_common(
    model: DecPomdpModel, pc: PrivateCompression, tree: FcsTree | None = None
) -> CommonCompression:
    """Each coordinator node of the compressed subtree is its own label."""
    tree = tree or FcsTree(model)
    cc = CommonCompression(horizon=model.horizon)
    levels = subtree_levels(model, tree, pc)
    for t in range(1, model.horizon + 1):
        for node in levels[t - 1]:
            cc.theta0[(t, node.seq)] = node.seq
    _emit_phi0(model, tree, pc, cc, levels)
    return cc


def _emit_phi0(model, tree, pc, cc, levels) -> None:
    cc.phi0.clear()
    for t in range(1, model.horizon):
        for node in levels[t - 1]:
            z0 = cc.theta0[(t, node.seq)]
            for lam, gamma in compressed_prescriptions(model, tree, node, pc):
                for o0, child, _p in tree.expand(node, gamma):
                    cc.phi0[(t, z0, lam.key, o0)] = cc.theta0[(t + 1, child.seq)]


def bcs_common(
    model: DecPomdpModel, pc: PrivateCompression, tree: FcsTree | None = None
) -> CommonCompression:
    """Label each node by the fingerprint of its belief over compressed states.

    Nodes whose beliefs over (state, private labels) agree to nine decimals
    merge; the recursive update is read off the subtree edges and must be
    single-valued, which the Bayesian-update recursion guarantees.
    """
    tree = tree or FcsTree(model)
    cc = CommonCompression(horizon=model.horizon)
    levels = subtree_levels(model, tree, pc)
    for t in range(1, model.horizon + 1):
        for node in levels[t - 1]:
            fp = compute_bcs(
                tree, node, label_of=lambda n, h: pc.label_of(t, node.seq, n, h)
            ).fingerprint
            cc.theta0[(t, node.seq)] = fp
    for t in range(1, model.horizon):
        for node in levels[t - 1]:
            z0 = cc.theta0[(t, node.seq)]
            for lam, gamma in compressed_prescriptions(model, tree, node, pc):
                for o0, child, _p in tree.expand(node, gamma):
                    key = (t, z0, lam.key, o0)
                    z_next = cc.theta0[(t + 1, child.seq)]
                    prev = cc.phi0.setdefault(key, z_next)
                    if prev != z_next:
                        raise ValueError(
                            "belief fingerprints do not evolve recursively; "
                            f"conflict at {key!r}"
                        )
    return cc


def build_common_greedy(
    model: DecPomdpModel,
    pc: PrivateCompression,
    tol_r: float = 0.0,
    tol_o: float = 0.0,
    mu: str = "uniform",
    tree: FcsTree | None = None,
) -> CommonCompression:
    """Greedy node-merging common compression with closure repair.

    Two nodes merge when they expose the same private label domains and, for
    every label prescription, their immediate expected rewards differ at most
    ``tol_r`` and their next-common-observation laws at most ``tol_o`` in
    total variation.
    """
    tree = tree or FcsTree(model)
    levels = subtree_levels(model, tree, pc)

    stats: dict = {}
    for t in range(1, model.horizon + 1):
        for node in levels[t - 1]:
            domains = pc.label_domains(node, tree.agent_domains(node))
            profile = {}
            for lam in enumerate_prescriptions(model, domains):
                profile[lam.key] = _node_reward_and_branches(
                    model, node, extension(tree, node, pc, lam)
                )
            stats[(t, node.seq)] = (domains, profile)

    def compatible(i1, i2):
        d1, p1 = stats[i1]
        d2, p2 = stats[i2]
        if d1 != d2:
            return False
        for lam_key, (r1, obs1) in p1.items():
            r2, obs2 = p2[lam_key]
            if abs(r1 - r2) > tol_r:
                return False
            if i1[0] < model.horizon and _tv(obs1, obs2) > tol_o:
                return False
        return True

    separated: set[frozenset] = set()
    for _round in range(_MAX_REFINEMENT_ROUNDS):
        cc = CommonCompression(horizon=model.horizon, mu_id=mu)
        for t in range(1, model.horizon + 1):
            items = [(t, node.seq) for node in levels[t - 1]]
            for idx, cls in enumerate(_greedy_partition(items, compatible, separated)):
                for item in cls:
                    cc.theta0[item] = idx
        conflict = _common_closure_conflict(model, tree, pc, cc, levels)
        if conflict is None:
            _emit_phi0(model, tree, pc, cc, levels)
            return cc
        separated.add(conflict)
    raise RuntimeError("common refinement did not reach a fixed point")


def _common_closure_conflict(model, tree, pc, cc, levels):
    phi_src: dict = {}
    for t in range(1, model.horizon):
        for node in levels[t - 1]:
            z0 = cc.theta0[(t, node.seq)]
            for lam, gamma in compressed_prescriptions(model, tree, node, pc):
                for o0, child, _p in tree.expand(node, gamma):
                    key = (t, z0, lam.key, o0)
                    entry = (cc.theta0[(t + 1, child.seq)], (t, node.seq))
                    prev = phi_src.setdefault(key, entry)
                    if prev[0] != entry[0]:
                        return frozenset((prev[1], entry[1]))
    return None


# -- serialization ---------------------------------------------------------


def _enc(obj) -> str:
    return repr(obj)


def _dec(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise CompressionFormatError(f"unparseable entry {text!r}") from exc


def serialize_compression(compression, measured: MeasuredParams | None = None) -> str:
    """Lossless structured-text form of a compression (JSON with literal keys)."""
    if isinstance(compression, PrivateCompression):
        doc = {
            "kind": "private",
            "num_agents": compression.num_agents,
            "horizon": compression.horizon,
            "theta": [[_enc(k), _enc(v)] for k, v in sorted(compression.theta.items(), key=repr)],
            "phi": [[_enc(k), _enc(v)] for k, v in sorted(compression.phi.items(), key=repr)],
        }
    elif isinstance(compression, CommonCompression):
        doc = {
            "kind": "common",
            "horizon": compression.horizon,
            "mu": compression.mu_id,
            "theta0": [[_enc(k), _enc(v)] for k, v in sorted(compression.theta0.items(), key=repr)],
            "phi0": [[_enc(k), _enc(v)] for k, v in sorted(compression.phi0.items(), key=repr)],
        }
    else:
        raise TypeError(f"not a compression: {type(compression).__name__}")
    if measured is not None:
        doc["measured"] = {
            "eps_p": measured.eps_p,
            "delta_p": measured.delta_p,
            "eps_c": measured.eps_c,
            "delta_c": measured.delta_c,
            "witnesses": {k: _enc(v) for k, v in sorted(measured.witnesses.items())},
        }
    return json.dumps(doc, indent=2, sort_keys=True)


def load_compression(text: str):
    """Inverse of :func:`serialize_compression`; round-trips exactly."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CompressionFormatError(str(exc)) from exc
    kind = doc.get("kind")
    if kind == "private":
        pc = PrivateCompression(
            num_agents=int(doc["num_agents"]), horizon=int(doc["horizon"])
        )
        pc.theta = {_dec(k): _dec(v) for k, v in doc["theta"]}
        pc.phi = {_dec(k): _dec(v) for k, v in doc["phi"]}
        return pc
    if kind == "common":
        cc = CommonCompression(horizon=int(doc["horizon"]), mu_id=doc.get("mu", "uniform"))
        cc.theta0 = {_dec(k): _dec(v) for k, v in doc["theta0"]}
        cc.phi0 = {_dec(k): _dec(v) for k, v in doc["phi0"]}
        return cc
    raise CompressionFormatError(f"unknown compression kind {kind!r}")
