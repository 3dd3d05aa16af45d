"""Maximum-entropy observer: posterior over candidate goals given the current state.

The posterior depends on the trajectory only through its last state::

    P(G | s) ∝ exp(V_G(s) - V_G(s0)) * P(G)

where ``V_G`` are soft value tables on the unintervened MDP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidModelError, ObserverError


@dataclass(frozen=True)
class BeliefTable:
    goals: tuple
    prior: np.ndarray
    posterior: np.ndarray  # (n_states, n_goals)
    states: tuple
    index: dict

    def __post_init__(self):
        self.prior.setflags(write=False)
        self.posterior.setflags(write=False)

    def row(self, s) -> np.ndarray:
        try:
            return self.posterior[self.index[s]]
        except KeyError:
            raise InvalidModelError(f"state {s!r} is not in the belief table") from None

    def prob(self, goal, s) -> float:
        return float(self.row(s)[self.goals.index(goal)])


def uniform_prior(goals) -> dict:
    goals = tuple(goals)
    return {g: 1.0 / len(goals) for g in goals}


def build_belief_table(base_values: dict, prior: dict | None = None, start=None,
                       temperature: float = 1.0) -> BeliefTable:
    """Tabulate the observer posterior at every state.

    ``base_values`` maps each goal to its ``ValueTable`` on the base MDP and
    ``start`` is the state whose values anchor the exponents. Goals with zero prior mass
    keep an all-zero column and do not enter the normalization.
    ``temperature`` divides the exponent and is 1 unless a sensitivity study
    asks otherwise.
    """
    goals = tuple(base_values)
    if not goals:
        raise InvalidModelError("no goal value tables given")
    if start is None:
        raise InvalidModelError("start state is required")
    if temperature <= 0.0:
        raise InvalidModelError("temperature must be positive")
    tables = [base_values[g] for g in goals]
    states = tables[0].states
    for t in tables[1:]:
        if t.states != states:
            raise InvalidModelError("value tables do not share one state set")
    if prior is None:
        prior = uniform_prior(goals)
    p = np.array([float(prior.get(g, 0.0)) for g in goals])
    if set(prior) - set(goals):
        raise InvalidModelError(f"prior mentions unknown goals {sorted(map(repr, set(prior) - set(goals)))}")
    if (p < 0).any() or p.sum() <= 0 or not np.isfinite(p).all():
        raise InvalidModelError("prior must be nonnegative with positive total mass")
    p = p / p.sum()
    live = p > 0

    index = dict(tables[0].index) or {s: i for i, s in enumerate(states)}
    s0 = index[start]
    V = np.stack([t.values for t in tables], axis=1)  # (n, n_goals)
    with np.errstate(invalid="ignore"):
        logits = (V[:, live] - V[s0, live]) / temperature + np.log(p[live])
    shift = logits.max(axis=1, keepdims=True)
    bad = ~np.isfinite(shift[:, 0])
    if bad.any():
        s = states[int(np.flatnonzero(bad)[0])]
        raise ObserverError(f"posterior at state {s!r} cannot be normalized (all exponents -inf)")
    w = np.exp(logits - shift)
    post = np.zeros((len(states), len(goals)))
    post[:, live] = w / w.sum(axis=1, keepdims=True)
    # every exponent vanishes at the start, so the row is the prior itself
    post[s0] = p
    return BeliefTable(goals, p, post, states, index)


def belief_along_trajectory(table: BeliefTable, trajectory) -> list:
    """Posterior row after each state of ``trajectory``."""
    return [table.row(s) for s in trajectory]
