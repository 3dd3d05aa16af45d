"""Per-state deception costs and their discounted planning form.

All four costs depend on the state only; ``discount_field`` spreads a raw
per-state cost over the actions of each state as
``g(s, a) = gamma_a ** hops(s0, s) * raw(s)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInterventionSetError, InvalidModelError
from .graph_mdp import Mdp, hop_array
from .observer import BeliefTable
from .softmax_solver import CostMatrix

KINDS = ("exaggeration", "ambiguity", "vob_observer", "vob_agent")

TIE_TOL = 1e-12


@dataclass(frozen=True)
class DeceptionCostField:
    kind: str
    raw: np.ndarray          # per state
    discounted: np.ndarray   # per action of the MDP
    gamma_a: float
    hops: np.ndarray
    chosen: np.ndarray | None = None  # observer's pick per state (VoB kinds)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidModelError(f"unknown cost kind {self.kind!r}")


def exaggeration_cost(beliefs: BeliefTable, true_goal) -> np.ndarray:
    """``1 + P(G*|s) - max over decoys P(G|s)``; lies in [0, 2]."""
    if len(beliefs.goals) < 2:
        raise InvalidModelError("exaggeration needs at least one decoy goal")
    col = beliefs.goals.index(true_goal)
    post = beliefs.posterior
    decoys = np.delete(post, col, axis=1)
    # rounding can leave -1e-16 where the decoy is certain; negative cycles make the LP unbounded
    return np.clip(1.0 + post[:, col] - decoys.max(axis=1), 0.0, 2.0)


def ambiguity_cost(beliefs: BeliefTable, goals=None) -> np.ndarray:
    """Sum of ``|P(G|s) - P(G'|s)|`` over ordered goal pairs; zero at goal states."""
    post = beliefs.posterior
    raw = np.abs(post[:, :, None] - post[:, None, :]).sum(axis=(1, 2))
    for g in (beliefs.goals if goals is None else goals):
        raw[beliefs.index[g]] = 0.0
    return raw


def _aligned_damage(beliefs: BeliefTable, costs: CostMatrix) -> np.ndarray:
    if costs.n_interventions == 0:
        raise EmptyInterventionSetError("value-of-belief costs need at least one intervention")
    missing = set(beliefs.goals) - set(costs.goals)
    if missing:
        raise InvalidModelError(f"cost matrix lacks goals {sorted(map(repr, missing))}")
    cols = [costs.goal_column(g) for g in beliefs.goals]
    return costs.damage_matrix()[:, cols]  # (k, n_goals), belief goal order


def expected_damage(beliefs: BeliefTable, costs: CostMatrix) -> np.ndarray:
    """``E_b[damage(i, G)]`` for every state (rows) and intervention (columns)."""
    return beliefs.posterior @ _aligned_damage(beliefs, costs).T


def observer_choice(expected: np.ndarray, feasible: np.ndarray | None = None) -> np.ndarray:
    """Row-wise argmax, lowest index among near-ties; ``-1`` where nothing is feasible."""
    vals = np.array(expected, dtype=float, copy=True)
    if feasible is not None:
        vals[~feasible] = -np.inf
    best = vals.max(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        near = vals >= best - TIE_TOL * (1.0 + np.abs(best))
    choice = np.argmax(near, axis=1)
    choice[~np.isfinite(best[:, 0])] = -1
    return choice


def _no_intervention(beliefs, costs):
    cols = [costs.goal_column(g) for g in beliefs.goals]
    return costs.base_damage()[cols]


def vob_observer_cost(beliefs: BeliefTable, costs: CostMatrix, feasible=None) -> np.ndarray:
    """Observer value of belief: the best expected damage it can inflict from each state.

    ``feasible`` optionally masks (state, intervention) pairs the observer
    cannot use; a state with no usable intervention is charged the expected
    unintervened cost.
    """
    exp = expected_damage(beliefs, costs)
    if feasible is not None:
        exp = np.where(feasible, exp, -np.inf)
    raw = exp.max(axis=1)
    none = ~np.isfinite(raw)
    if none.any():
        raw[none] = beliefs.posterior[none] @ _no_intervention(beliefs, costs)
    return raw


def vob_agent_cost(beliefs: BeliefTable, costs: CostMatrix, true_goal, feasible=None):
    """Agent value of belief: damage to the true goal from the intervention the belief induces.

    Returns ``(raw, chosen)`` where ``chosen[s]`` is the observer's pick at
    ``s`` (``-1`` if none is usable, in which case the unintervened cost is
    charged).
    """
    exp = expected_damage(beliefs, costs)
    chosen = observer_choice(exp, feasible)
    col = costs.goal_column(true_goal)
    dmg = costs.damage_matrix()[:, col]
    raw = np.where(chosen >= 0, dmg[np.maximum(chosen, 0)], costs.base_damage()[col])
    return raw, chosen


def discount_field(raw: np.ndarray, hops: np.ndarray, gamma_a: float, mdp: Mdp) -> np.ndarray:
    """Per-action cost ``gamma_a ** hops[s] * raw[s]``; zero at unreachable states."""
    if not 0.0 < gamma_a <= 1.0:
        raise InvalidModelError(f"gamma_a must lie in (0, 1], got {gamma_a}")
    raw = np.asarray(raw, dtype=float)
    hops = np.asarray(hops, dtype=float)
    reach = np.isfinite(hops)
    per_state = np.zeros_like(raw)
    per_state[reach] = np.power(gamma_a, hops[reach]) * raw[reach]
    return per_state[mdp.act_src]


def feasibility_mask(mdp: Mdp, interventions) -> np.ndarray:
    """``mask[s, i]`` is False when intervention ``i`` would remove the agent's own cell."""
    mask = np.ones((mdp.n_states, len(interventions)), dtype=bool)
    for i, iv in enumerate(interventions):
        for s in iv.removed_states(mdp.graph):
            mask[mdp.index[s], i] = False
    return mask


def build_cost_field(kind: str, mdp: Mdp, beliefs: BeliefTable, gamma_a: float,
                     costs: CostMatrix | None = None, interventions=None) -> DeceptionCostField:
    hops = hop_array(mdp)
    chosen = None
    feasible = None if interventions is None else feasibility_mask(mdp, interventions)
    if kind == "exaggeration":
        raw = exaggeration_cost(beliefs, mdp.true_goal)
    elif kind == "ambiguity":
        raw = ambiguity_cost(beliefs, mdp.goals)
    elif kind in ("vob_observer", "vob_agent"):
        if costs is None:
            raise InvalidModelError(f"{kind} needs a cost matrix")
        if kind == "vob_observer":
            raw = vob_observer_cost(beliefs, costs, feasible)
            chosen = observer_choice(expected_damage(beliefs, costs), feasible)
        else:
            raw, chosen = vob_agent_cost(beliefs, costs, mdp.true_goal, feasible)
    else:
        raise InvalidModelError(f"unknown cost kind {kind!r}")
    g = discount_field(raw, hops, gamma_a, mdp)
    return DeceptionCostField(kind, raw, g, float(gamma_a), hops, chosen)
