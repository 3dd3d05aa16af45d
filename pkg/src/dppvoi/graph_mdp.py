"""Weighted graphs, their goal-reaching MDPs, and intervention-induced MDPs.

States are arbitrary hashable node identifiers kept in a fixed order; every
array below is indexed by that order. An undirected edge ``{u, v}`` exposes two
directed actions ``(u, v)`` and ``(v, u)`` sharing one cost (a declared
self-loop exposes the single action ``(s, s)``).
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Hashable, Iterable, Mapping

import numpy as np

from . import _kernels
from .errors import ConvergenceError, InvalidModelError

State = Hashable
UNREACHABLE = math.inf

PROB_TOL = 1e-12


def _frozen(arr, dtype):
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.setflags(write=False)
    return out


class WeightedGraph:
    """Undirected graph with finite edge costs."""

    def __init__(self, states: Iterable[State], edges: Iterable[tuple], edge_cost=None,
                 *, default_cost: float = 1.0, allow_self_loops: bool = False):
        self.states = tuple(states)
        self.index = {s: i for i, s in enumerate(self.states)}
        if len(self.index) != len(self.states):
            raise InvalidModelError("duplicate state identifiers")
        given = dict(edge_cost or {})
        used = set()
        costs = {}
        for u, v in edges:
            if u not in self.index or v not in self.index:
                raise InvalidModelError(f"edge ({u!r}, {v!r}) has an endpoint outside the state set")
            if u == v and not allow_self_loops:
                raise InvalidModelError(f"self-loop at {u!r} not declared (allow_self_loops=False)")
            e = self.canonical(u, v)
            key = (u, v) if (u, v) in given else (v, u)
            c = float(given.get(key, default_cost))
            used.add(key)
            if not math.isfinite(c):
                raise InvalidModelError(f"edge {e!r} has non-finite cost {c}")
            if e in costs and costs[e] != c:
                raise InvalidModelError(f"edge {e!r} listed twice with different costs")
            costs[e] = c
        stray = set(given) - used
        if stray:
            raise InvalidModelError(f"costs given for unknown edges: {sorted(map(repr, stray))[:3]}")
        order = sorted(costs, key=lambda e: (self.index[e[0]], self.index[e[1]]))
        self.edge_cost = MappingProxyType({e: costs[e] for e in order})
        self.edges = frozenset(order)
        incident: dict = {s: [] for s in self.states}
        for e in order:
            incident[e[0]].append(e)
            if e[1] != e[0]:
                incident[e[1]].append(e)
        self._incident = {s: tuple(sorted(es, key=lambda e: self.index[self.other(e, s)]))
                          for s, es in incident.items()}

    def canonical(self, u, v) -> tuple:
        return (u, v) if self.index[u] <= self.index[v] else (v, u)

    @staticmethod
    def other(edge, s):
        return edge[1] if edge[0] == s else edge[0]

    def incident(self, s) -> tuple:
        """Edges having ``s`` as an endpoint, ordered by the opposite endpoint."""
        return self._incident[s]

    def neighbors(self, s) -> tuple:
        return tuple(self.other(e, s) for e in self._incident[s])

    def cost(self, u, v) -> float:
        return self.edge_cost[self.canonical(u, v)]

    def __len__(self):
        return len(self.states)

    def __repr__(self):
        return f"WeightedGraph({len(self.states)} states, {len(self.edges)} edges)"


def deterministic_kernel(graph: WeightedGraph, slip: float = 0.0):
    """Transition map for moves along edges, optionally slipping.

    With probability ``slip`` the move lands uniformly on the target of one of
    the other actions available at the state.
    """
    if not 0.0 <= slip < 1.0:
        raise InvalidModelError(f"slip must lie in [0, 1), got {slip}")
    out = {}
    for s in graph.states:
        targets = graph.neighbors(s)
        for t in targets:
            others = [o for o in targets if o != t]
            if slip == 0.0 or not others:
                out[(s, (s, t))] = {t: 1.0}
                continue
            dist = {t: 1.0 - slip}
            for o in others:
                dist[o] = dist.get(o, 0.0) + slip / len(others)
            out[(s, (s, t))] = dist
    return out


class Mdp:
    """Discounted MDP over a weighted graph with a set of candidate goals.

    ``transition`` maps ``(state, action)`` to ``{next_state: probability}``;
    pairs left out default to deterministic moves (perturbed by ``slip``).
    """

    def __init__(self, graph: WeightedGraph, start, goals, true_goal, gamma: float = 0.95,
                 *, transition: Mapping | None = None, slip: float = 0.0):
        self.graph = graph
        self.states = graph.states
        self.index = graph.index
        goals = tuple(goals)
        if not goals:
            raise InvalidModelError("goal set is empty")
        if true_goal not in goals:
            raise InvalidModelError(f"true goal {true_goal!r} is not a candidate goal")
        for g in (start, *goals):
            if g not in self.index:
                raise InvalidModelError(f"{g!r} is not a state")
        if start in goals:
            raise InvalidModelError("start state must not be a candidate goal")
        if len(set(goals)) != len(goals):
            raise InvalidModelError("duplicate candidate goals")
        if not 0.0 < gamma < 1.0:
            raise InvalidModelError(f"discount must lie in (0, 1), got {gamma}")
        self.start = start
        self.goals = goals
        self.true_goal = true_goal
        self.gamma = float(gamma)
        self.slip = slip

        kernel = deterministic_kernel(graph, slip)
        if transition:
            kernel.update(transition)
        self._build(kernel)

    def _build(self, kernel):
        actions, state_ptr, dists = [], [0], []
        for s in self.states:
            for t in self.graph.neighbors(s):
                a = (s, t)
                if (s, a) not in kernel:
                    raise InvalidModelError(f"no transition distribution for action {a!r}")
                dist = self._check_dist(s, a, kernel[(s, a)])
                actions.append(a)
                dists.append(dist)
            state_ptr.append(len(actions))
        extra = set(kernel) - {(a[0], a) for a in actions}
        if extra:
            raise InvalidModelError(f"transition given for unknown state-action pairs: {sorted(map(repr, extra))[:3]}")
        self.actions = tuple(actions)
        self.action_index = {a: i for i, a in enumerate(actions)}
        self._dists = tuple(MappingProxyType(d) for d in dists)

        trans_ptr, nxt, prob = [0], [], []
        for d in dists:
            for t in sorted(d, key=self.index.__getitem__):
                nxt.append(self.index[t])
                prob.append(d[t])
            trans_ptr.append(len(nxt))
        self.state_ptr = _frozen(state_ptr, np.int64)
        self.act_src = _frozen([self.index[a[0]] for a in actions], np.int64)
        self.act_dst = _frozen([self.index[a[1]] for a in actions], np.int64)
        self.action_cost = _frozen([self.graph.cost(*a) for a in actions], np.float64)
        self.trans_ptr = _frozen(trans_ptr, np.int64)
        self.trans_next = _frozen(nxt, np.int64)
        self.trans_prob = _frozen(prob, np.float64)

    def _check_dist(self, s, a, dist):
        dist = {t: float(p) for t, p in dist.items() if p != 0.0}
        allowed = set(self.graph.neighbors(s)) | {s}
        for t, p in dist.items():
            if p < 0.0 or not math.isfinite(p):
                raise InvalidModelError(f"invalid probability {p} in p(.|{s!r}, {a!r})")
            if t not in allowed:
                raise InvalidModelError(f"p(.|{s!r}, {a!r}) puts mass on non-adjacent state {t!r}")
        total = math.fsum(dist.values())
        if abs(total - 1.0) > PROB_TOL:
            raise InvalidModelError(f"p(.|{s!r}, {a!r}) sums to {total!r}")
        return dist

    # --- accessors -----------------------------------------------------------
    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def start_index(self) -> int:
        return self.index[self.start]

    @property
    def goal_indices(self) -> np.ndarray:
        return np.array([self.index[g] for g in self.goals], dtype=np.int64)

    @property
    def true_goal_index(self) -> int:
        return self.index[self.true_goal]

    def actions_at(self, s) -> tuple:
        i = self.index[s]
        return self.actions[self.state_ptr[i]:self.state_ptr[i + 1]]

    def transition(self, s, a) -> Mapping:
        if a[0] != s:
            raise KeyError(f"action {a!r} is not available at {s!r}")
        return self._dists[self.action_index[a]]

    def transition_table(self) -> dict:
        return {(a[0], a): dict(d) for a, d in zip(self.actions, self._dists)}

    def terminal_mask(self, states=()) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=np.uint8)
        for s in states:
            mask[self.index[s]] = 1
        return mask

    def __repr__(self):
        return (f"{type(self).__name__}({self.n_states} states, {self.n_actions} actions, "
                f"start={self.start!r}, goals={self.goals!r})")


@dataclass(frozen=True)
class Intervention:
    """Subgraph kept after the observer acts, with optional new edge costs."""

    kept_states: frozenset
    kept_edges: frozenset
    new_edge_cost: Mapping = field(default_factory=dict)
    label: str = ""

    @classmethod
    def identity(cls, graph: WeightedGraph, label="identity"):
        return cls(frozenset(graph.states), frozenset(graph.edges), {}, label)

    @classmethod
    def removing(cls, graph: WeightedGraph, states, label=""):
        """Obstacle intervention: drop ``states`` and every edge touching them."""
        gone = set(states)
        unknown = gone - set(graph.states)
        if unknown:
            raise InvalidModelError(f"cannot remove unknown states {sorted(map(repr, unknown))}")
        kept = frozenset(s for s in graph.states if s not in gone)
        edges = frozenset(e for e in graph.edges if e[0] in kept and e[1] in kept)
        return cls(kept, edges, {}, label or "remove " + ",".join(map(str, sorted(gone, key=graph.index.get))))

    def removed_states(self, graph: WeightedGraph) -> tuple:
        return tuple(s for s in graph.states if s not in self.kept_states)


def self_loop_redistribution(state, dist: Mapping, kept: frozenset) -> dict:
    """Mass aimed at removed states stays put (self-transition)."""
    out, lost = {}, 0.0
    for t, p in dist.items():
        if t in kept:
            out[t] = out.get(t, 0.0) + p
        else:
            lost += p
    if lost:
        out[state] = out.get(state, 0.0) + lost
    return out


def proportional_redistribution(state, dist: Mapping, kept: frozenset) -> dict:
    """Mass aimed at removed states is spread over the surviving targets."""
    out = {t: p for t, p in dist.items() if t in kept}
    total = math.fsum(out.values())
    if total <= 0.0:
        return self_loop_redistribution(state, dist, kept)
    return {t: p / total for t, p in out.items()}


Redistribution = Callable[[State, Mapping, frozenset], dict]


class InducedMdp(Mdp):
    """MDP left after an intervention; ``base_index[i]`` is state ``i``'s index in ``base``."""

    base: Mdp
    intervention: Intervention
    base_index: np.ndarray


def _connected(graph: WeightedGraph, source, target, edges=None) -> bool:
    return hop_distance(graph, source, edges=edges).get(target, UNREACHABLE) < UNREACHABLE


def build_induced_mdp(base: Mdp, iv: Intervention,
                      redistribute: Redistribution = self_loop_redistribution) -> InducedMdp:
    """MDP on the intervention's subgraph with redistributed transition mass."""
    g = base.graph
    kept = frozenset(iv.kept_states)
    missing = kept - set(g.states)
    if missing:
        raise InvalidModelError(f"intervention keeps unknown states {sorted(map(repr, missing))[:3]}")
    needed = {base.start, *base.goals} - kept
    if needed:
        raise InvalidModelError(f"intervention removes start/goal states {sorted(map(repr, needed))}")
    edges = set()
    for u, v in iv.kept_edges:
        if u not in g.index or v not in g.index or g.canonical(u, v) not in g.edges:
            raise InvalidModelError(f"intervention keeps unknown edge ({u!r}, {v!r})")
        if u not in kept or v not in kept:
            raise InvalidModelError(f"kept edge ({u!r}, {v!r}) touches a removed state")
        edges.add(g.canonical(u, v))
    costs = {}
    for e in edges:
        c = iv.new_edge_cost.get(e, iv.new_edge_cost.get((e[1], e[0]), g.edge_cost[e]))
        costs[e] = c
    stray = {g.canonical(*e) for e in iv.new_edge_cost} - edges
    if stray:
        raise InvalidModelError(f"new costs given for edges not kept: {sorted(map(repr, stray))[:3]}")

    states = [s for s in g.states if s in kept]
    sub = WeightedGraph(states, sorted(edges, key=lambda e: (g.index[e[0]], g.index[e[1]])),
                        costs, allow_self_loops=True)
    if not _connected(sub, base.start, base.true_goal):
        raise InvalidModelError(
            f"intervention {iv.label or '?'} disconnects the start from the true goal")

    kernel = {}
    for s in states:
        for t in sub.neighbors(s):
            a = (s, t)
            kernel[(s, a)] = redistribute(s, base.transition(s, a), kept)

    induced = InducedMdp.__new__(InducedMdp)
    induced.graph = sub
    induced.states = sub.states
    induced.index = sub.index
    induced.start = base.start
    induced.goals = base.goals
    induced.true_goal = base.true_goal
    induced.gamma = base.gamma
    induced.slip = base.slip
    induced._build(kernel)
    induced.base = base
    induced.intervention = iv
    induced.base_index = _frozen([base.index[s] for s in states], np.int64)
    return induced


def hop_distance(graph: WeightedGraph, source, edges=None) -> dict:
    """Breadth-first hop counts from ``source``; unreachable states map to ``inf``."""
    allowed = None if edges is None else set(edges)
    dist = {s: UNREACHABLE for s in graph.states}
    dist[source] = 0
    queue = deque([source])
    while queue:
        s = queue.popleft()
        for e in graph.incident(s):
            if allowed is not None and e not in allowed:
                continue
            t = graph.other(e, s)
            if dist[t] == UNREACHABLE:
                dist[t] = dist[s] + 1
                queue.append(t)
    return dist


def hop_array(mdp: Mdp, source=None) -> np.ndarray:
    d = hop_distance(mdp.graph, mdp.start if source is None else source)
    return np.array([d[s] for s in mdp.states], dtype=np.float64)


def max_reach_probability(mdp: Mdp, goal, *, absorbing=(), tol: float = 1e-10,
                          max_iters: int = 1_000_000) -> float:
    """Maximal probability of eventually entering ``goal`` from the start.

    States in ``absorbing`` are sinks that never reach ``goal``.
    """
    if goal not in mdp.index:
        raise InvalidModelError(f"{goal!r} is not a state")
    values = np.zeros(mdp.n_states)
    values[mdp.index[goal]] = 1.0
    terminal = mdp.terminal_mask([goal, *[s for s in absorbing if s != goal]])
    it, residual, ok = _kernels.reach_vi(mdp.state_ptr, mdp.trans_ptr, mdp.trans_next,
                                         mdp.trans_prob, terminal, values, tol, max_iters)
    if not ok:
        raise ConvergenceError(f"reachability iteration did not converge (residual {residual:.3g})",
                               residual, it)
    return float(values[mdp.start_index])


def can_reach(mdp: Mdp, target_index: int, blocked=None) -> np.ndarray:
    """Boolean mask of states with a positive-probability path to ``target_index``.

    ``blocked`` is an optional boolean mask of states that are sinks.
    """
    n = mdp.n_states
    preds = [[] for _ in range(n)]
    for a in range(mdp.n_actions):
        src = mdp.act_src[a]
        for k in range(mdp.trans_ptr[a], mdp.trans_ptr[a + 1]):
            if mdp.trans_prob[k] > 0.0:
                preds[mdp.trans_next[k]].append(src)
    ok = np.zeros(n, dtype=bool)
    ok[target_index] = True
    queue = deque([target_index])
    while queue:
        t = queue.popleft()
        for s in preds[t]:
            if not ok[s] and (blocked is None or not blocked[s]):
                ok[s] = True
                queue.append(s)
    return ok


def cost_to_go(graph: WeightedGraph, target) -> dict:
    """Dijkstra distances to ``target`` along edges (edge costs, undiscounted)."""
    dist = {s: math.inf for s in graph.states}
    dist[target] = 0.0
    heap = [(0.0, graph.index[target])]
    while heap:
        d, i = heapq.heappop(heap)
        s = graph.states[i]
        if d > dist[s]:
            continue
        for e in graph.incident(s):
            t = graph.other(e, s)
            nd = d + graph.edge_cost[e]
            if nd < dist[t]:
                dist[t] = nd
                heapq.heappush(heap, (nd, graph.index[t]))
    return dist


def next_hop(graph: WeightedGraph, s, dist: Mapping, tie_tol: float = 1e-12):
    """Neighbor of ``s`` on a minimum-cost route; ties go to the earliest state."""
    best, best_val = None, math.inf
    for t in graph.neighbors(s):
        if t == s:
            continue
        val = graph.cost(s, t) + dist[t]
        if val < best_val - tie_tol:
            best, best_val = t, val
    return best


def shortest_path(graph: WeightedGraph, source, target):
    """Minimum-cost path ``[source, ..., target]`` and its cost.

    Among equal-cost paths the one whose state sequence comes first in state
    order is returned. Returns ``(None, inf)`` when ``target`` is unreachable.
    """
    dist = cost_to_go(graph, target)
    if dist[source] == math.inf:
        return None, math.inf
    path, total, s = [source], 0.0, source
    while s != target:
        t = next_hop(graph, s, dist)
        total += graph.cost(s, t)
        path.append(t)
        s = t
    return path, total
