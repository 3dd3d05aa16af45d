"""Conservative path planning: worst case over the observer's single intervention.

The game state is ``(s, I)`` where ``I`` records, per candidate intervention,
whether it is known absent (0), performed (1) or still unknown (?). At most one
flag may be 1. The observer may, before any agent move, perform an unknown
intervention (all other unknowns become 0) or reveal one as absent; the agent
then moves under the dynamics ``I`` implies. Values are worst-case discounted
costs and are solved layer by layer on the number of unknown flags::

    V(s, I) = max( min_a c(s, a) + gamma * E[V(s', I)],  max_{I' in Succ(I)} V(s, I') )

Actions at decoy goals carry a large penalty so the policy heads for the true
goal; states that cannot reach the true goal under ``I`` are worth ``+inf``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import _kernels
from .errors import ConvergenceError, InvalidModelError
from .graph_mdp import Mdp, build_induced_mdp, can_reach
from .softmax_solver import default_max_iters


class Flag(IntEnum):
    ABSENT = 0
    PRESENT = 1
    UNKNOWN = 2


_SYMBOL = {Flag.ABSENT: "0", Flag.PRESENT: "1", Flag.UNKNOWN: "?"}


@dataclass(frozen=True)
class InfoSet:
    flags: tuple

    def __post_init__(self):
        flags = tuple(Flag(f) for f in self.flags)
        object.__setattr__(self, "flags", flags)
        if sum(f == Flag.PRESENT for f in flags) > 1:
            raise InvalidModelError(f"information set {self} has more than one performed intervention")

    @classmethod
    def all_unknown(cls, k: int) -> "InfoSet":
        return cls((Flag.UNKNOWN,) * k)

    @classmethod
    def parse(cls, text: str) -> "InfoSet":
        lookup = {v: k for k, v in _SYMBOL.items()}
        return cls(tuple(lookup[c] for c in text))

    @property
    def n_unknown(self) -> int:
        return sum(f == Flag.UNKNOWN for f in self.flags)

    @property
    def present(self) -> int | None:
        for i, f in enumerate(self.flags):
            if f == Flag.PRESENT:
                return i
        return None

    def __str__(self):
        return "".join(_SYMBOL[f] for f in self.flags)


def successors(info: InfoSet, i: int) -> list:
    """Information sets the observer can move to through intervention ``i``.

    ``[performed, revealed_absent]``; empty once an intervention has been spent.
    """
    if info.present is not None:
        return []
    if info.flags[i] != Flag.UNKNOWN:
        raise InvalidModelError(f"flag {i} of {info} is already resolved")
    perform = tuple(Flag.PRESENT if j == i else
                    (Flag.ABSENT if f == Flag.UNKNOWN else f) for j, f in enumerate(info.flags))
    reveal = tuple(Flag.ABSENT if j == i else f for j, f in enumerate(info.flags))
    return [InfoSet(perform), InfoSet(reveal)]


def all_successors(info: InfoSet) -> list:
    out = []
    for i, f in enumerate(info.flags):
        if f == Flag.UNKNOWN:
            out.extend(successors(info, i))
    return out


def reachable_infosets(k: int) -> list:
    """Every information set reachable from all-unknown, fewest unknowns first."""
    sets = [InfoSet(tuple(Flag.PRESENT if j == i else Flag.ABSENT for j in range(k))) for i in range(k)]
    for combo in itertools.product((Flag.ABSENT, Flag.UNKNOWN), repeat=k):
        sets.append(InfoSet(combo))
    return sorted(sets, key=lambda s: (s.n_unknown, str(s)))


@dataclass
class Dynamics:
    """One MDP's kernel arrays lifted into the base MDP's state/action indexing."""

    state_ptr: np.ndarray
    cost: np.ndarray          # includes decoy penalty
    edge_cost: np.ndarray     # plain edge costs
    trans_ptr: np.ndarray
    trans_next: np.ndarray
    trans_prob: np.ndarray
    action_map: np.ndarray    # local action -> base action index
    kept: np.ndarray          # bool per base state
    alive: np.ndarray         # bool per base state: can still reach the true goal


def _lift(base: Mdp, mdp: Mdp, penalty: float) -> Dynamics:
    if mdp is base:
        to_base = np.arange(base.n_states)
    else:
        to_base = mdp.base_index
    n = base.n_states
    state_ptr = np.zeros(n + 1, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    counts[to_base] = np.diff(mdp.state_ptr)
    state_ptr[1:] = np.cumsum(counts)
    # induced states keep base order, so local actions are already grouped by base state
    action_map = np.array([base.action_index[a] for a in mdp.actions], dtype=np.int64)
    decoys = np.zeros(mdp.n_states, dtype=bool)
    for g in mdp.goals:
        if g != mdp.true_goal:
            decoys[mdp.index[g]] = True
    edge_cost = np.asarray(mdp.action_cost, dtype=float)
    cost = edge_cost + np.where(decoys[mdp.act_src], penalty, 0.0)
    kept = np.zeros(n, dtype=bool)
    kept[to_base] = True
    alive = np.zeros(n, dtype=bool)
    alive[to_base] = can_reach(mdp, mdp.true_goal_index)
    return Dynamics(state_ptr, cost, edge_cost, np.asarray(mdp.trans_ptr),
                    to_base[mdp.trans_next].astype(np.int64), np.asarray(mdp.trans_prob),
                    action_map, kept, alive)


@dataclass
class GameValue:
    values: dict              # InfoSet -> array over base states
    policy: dict              # InfoSet -> base action index per base state (-1: none)
    mdp: Mdp = field(repr=False)
    dynamics: dict = field(repr=False)   # None (base) or intervention index -> Dynamics
    gamma: float = 0.95
    decoy_penalty: float = 0.0
    k: int = 0

    def value(self, s, info: InfoSet | str | None = None) -> float:
        info = self._info(info)
        return float(self.values[info][self.mdp.index[s]])

    def action(self, s, info: InfoSet | str | None = None):
        info = self._info(info)
        a = int(self.policy[info][self.mdp.index[s]])
        return None if a < 0 else self.mdp.actions[a]

    def _info(self, info):
        if info is None:
            return InfoSet.all_unknown(self.k)
        return InfoSet.parse(info) if isinstance(info, str) else info

    def dynamics_for(self, info: InfoSet) -> Dynamics:
        return self.dynamics[info.present]

    def observer_options(self, s_index: int, info: InfoSet) -> list:
        """Successor sets the observer may move to at base state ``s_index``."""
        out = []
        for i, f in enumerate(info.flags):
            if f != Flag.UNKNOWN or info.present is not None:
                continue
            perform, reveal = successors(info, i)
            if self.dynamics[i].kept[s_index]:
                out.append(perform)
            out.append(reveal)
        return out


def default_decoy_penalty(mdp: Mdp) -> float:
    return 1e6 * float(np.max(mdp.action_cost, initial=1.0)) * mdp.n_states


def minimax_value_iteration(base: Mdp, interventions, decoy_penalty: float | None = None,
                            tol: float = 1e-10, max_iters: int | None = None,
                            *, induced=None, kernels=None) -> GameValue:
    """Layered minimax value iteration over (state, information set)."""
    k_ = kernels or _kernels
    interventions = list(interventions)
    k = len(interventions)
    if decoy_penalty is None:
        decoy_penalty = default_decoy_penalty(base)
    if max_iters is None:
        max_iters = 20 * default_max_iters(base.gamma, tol) + 10 * base.n_states
    if induced is None:
        induced = [build_induced_mdp(base, iv) for iv in interventions]
    dyn = {None: _lift(base, base, decoy_penalty)}
    for i, m in enumerate(induced):
        dyn[i] = _lift(base, m, decoy_penalty)

    n = base.n_states
    goal = base.true_goal_index
    values, policy = {}, {}
    gv = GameValue(values, policy, base, dyn, base.gamma, decoy_penalty, k)
    for info in reachable_infosets(k):
        d = dyn[info.present]
        v = np.zeros(n)
        dead = ~(d.kept & d.alive)
        v[dead] = np.inf
        terminal = dead.copy()
        terminal[goal] = True
        v[goal] = 0.0
        floor = np.full(n, -np.inf)
        for s in range(n):
            if terminal[s]:
                continue
            for nxt in gv.observer_options(s, info):
                floor[s] = max(floor[s], values[nxt][s])
        local_policy = np.full(n, -1, dtype=np.int64)
        it, residual, ok = k_.minimax_vi(d.state_ptr, d.cost, d.trans_ptr, d.trans_next,
                                         d.trans_prob, terminal.astype(np.uint8), floor, v,
                                         local_policy, base.gamma, tol, max_iters)
        if not ok:
            raise ConvergenceError(f"minimax value iteration did not converge for I={info} "
                                   f"(residual {residual:.3g})", residual, it)
        values[info] = v
        policy[info] = np.where(local_policy >= 0, d.action_map[np.maximum(local_policy, 0)], -1)
    return gv


@dataclass(frozen=True)
class RolloutResult:
    trajectory: tuple
    info_sets: tuple
    cost: float               # plain edge costs, undiscounted
    discounted_cost: float    # game cost (decoy penalties included), discounted
    reached: bool


def _parse_schedule(schedule) -> dict:
    events = {}
    if schedule is None:
        return events
    if isinstance(schedule, dict):
        schedule = [(t, kind, i) for t, evs in schedule.items() for kind, i in evs]
    for t, kind, i in schedule:
        if kind not in ("perform", "reveal"):
            raise InvalidModelError(f"unknown observer move {kind!r}")
        events.setdefault(int(t), []).append((kind, int(i)))
    return events


def cpp_policy_rollout(gv: GameValue, schedule=None, *, rng=None, max_steps: int | None = None,
                       start=None) -> RolloutResult:
    """Run the game policy against a concrete observer schedule.

    ``schedule`` lists ``(t, "perform" | "reveal", i)`` events applied when the
    agent stands at ``s_t``, before it moves. Each flag may be resolved once and
    only one intervention may ever be performed.
    """
    mdp = gv.mdp
    events = _parse_schedule(schedule)
    rng = rng or np.random.default_rng(0)
    max_steps = max_steps or 50 * mdp.n_states
    info = InfoSet.all_unknown(gv.k)
    s = mdp.index[mdp.start if start is None else start]
    goal = mdp.true_goal_index
    traj, infos = [mdp.states[s]], [info]
    cost = disc = 0.0
    t = 0
    while s != goal and t < max_steps:
        for kind, i in events.get(t, ()):
            if not 0 <= i < gv.k:
                raise InvalidModelError(f"intervention index {i} out of range")
            if info.present is not None or info.flags[i] != Flag.UNKNOWN:
                raise InvalidModelError(f"schedule resolves flag {i} twice or after an intervention (t={t})")
            perform, reveal = successors(info, i)
            if kind == "perform":
                if not gv.dynamics[i].kept[s]:
                    raise InvalidModelError(f"intervention {i} would remove the agent's cell at t={t}")
                info = perform
            else:
                info = reveal
            infos[-1] = info
        d = gv.dynamics_for(info)
        a = int(gv.policy[info][s])
        if a < 0:
            break
        local = int(np.searchsorted(d.action_map, a)) if d.action_map.size else -1
        # action_map is sorted in base order, so searchsorted locates the local action
        lo, hi = d.trans_ptr[local], d.trans_ptr[local + 1]
        nxt, prob = d.trans_next[lo:hi], d.trans_prob[lo:hi]
        s_next = int(nxt[0]) if nxt.size == 1 else int(rng.choice(nxt, p=prob))
        cost += d.edge_cost[local]
        disc += gv.gamma ** t * d.cost[local]
        s = s_next
        t += 1
        traj.append(mdp.states[s])
        infos.append(info)
    return RolloutResult(tuple(traj), tuple(infos), float(cost), float(disc), s == goal)


def enumerate_schedules(gv: GameValue, max_events: int | None = None):
    """Yield every observer schedule along the paths the policy actually takes.

    Events are generated in time order at the states the agent visits; each
    yielded item is ``(schedule, RolloutResult)``. With deterministic dynamics
    this covers every adversary the game allows.
    """
    max_events = gv.k if max_events is None else max_events

    def extend(sched, t_min):
        result = cpp_policy_rollout(gv, sched)
        yield list(sched), result
        if len(sched) >= max_events:
            return
        mdp = gv.mdp
        for t in range(t_min, len(result.trajectory) - 1):
            info = result.info_sets[t]
            # events already placed at this step are reflected in info
            s = mdp.index[result.trajectory[t]]
            for i, f in enumerate(info.flags):
                if f != Flag.UNKNOWN or info.present is not None:
                    continue
                if gv.dynamics[i].kept[s]:
                    yield from extend(sched + [(t, "perform", i)], t)
                yield from extend(sched + [(t, "reveal", i)], t)

    yield from extend([], 0)


def worst_case_rollout(gv: GameValue, max_events: int | None = None):
    """Adversary schedule with the largest discounted game cost, by enumeration."""
    worst = None
    for sched, r in enumerate_schedules(gv, max_events):
        key = (not r.reached, r.discounted_cost)
        if worst is None or key > worst[0]:
            worst = (key, r, sched)
    return worst[1], worst[2]
