"""Intervention protocol simulation and cost-ratio sweeps.

One episode: the agent follows its planner's policy for ``t_int`` steps, the
observer then performs the intervention with the largest expected damage
under its belief at the agent's current state, and the agent finishes along a
minimum-cost path in the induced graph. The cost ratio divides the total edge
cost by the unintervened start-to-goal shortest path cost.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .cpp_planner import GameValue, InfoSet, minimax_value_iteration
from .errors import DppError, InvalidModelError
from .graph_mdp import Mdp, build_induced_mdp, shortest_path
from .lp_planner import Policy, plan
from .objectives import build_cost_field, expected_damage, feasibility_mask, observer_choice
from .observer import BeliefTable, build_belief_table
from .softmax_solver import CostMatrix, compute_cost_matrix

# planner name -> deception cost kind (None: conservative game policy)
PLANNER_KINDS = {
    "exaggeration": "exaggeration",
    "ambiguity": "ambiguity",
    "vob_o": "vob_observer",
    "vob_a": "vob_agent",
    "cpp": None,
}
VOI_PLANNERS = ("vob_o", "vob_a")
CLASSICAL_PLANNERS = ("exaggeration", "ambiguity")

CSV_COLUMNS = ("planner", "gamma_a", "t_int", "seed", "chosen_intervention", "total_cost", "cost_ratio")


@dataclass
class Scenario:
    """Everything the planners and the observer share for one map."""

    mdp: Mdp
    interventions: list
    induced: list
    costs: CostMatrix
    beliefs: BeliefTable
    feasible: np.ndarray       # (n_states, k): intervention keeps the agent's cell
    choice: np.ndarray         # observer's pick per state, -1 if none
    shortest_cost: float
    alpha: float
    _game: GameValue | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.interventions)

    def game(self) -> GameValue:
        if self._game is None:
            self._game = minimax_value_iteration(self.mdp, self.interventions, induced=self.induced)
        return self._game


def build_scenario(mdp: Mdp, interventions, *, alpha: float = 1.0, prior=None,
                   tol: float = 1e-9, workers: int = 1) -> Scenario:
    interventions = list(interventions)
    induced = [build_induced_mdp(mdp, iv) for iv in interventions]
    costs = compute_cost_matrix(mdp, interventions, alpha=alpha, tol=tol, workers=workers,
                                induced=induced)
    beliefs = build_belief_table(costs.base_values, prior, start=mdp.start)
    feasible = feasibility_mask(mdp, interventions)
    if interventions:
        choice = observer_choice(expected_damage(beliefs, costs), feasible)
    else:
        choice = np.full(mdp.n_states, -1, dtype=np.int64)
    _, shortest = shortest_path(mdp.graph, mdp.start, mdp.true_goal)
    return Scenario(mdp, interventions, induced, costs, beliefs, feasible, choice, shortest, alpha)


class PolicyAgent:
    """Samples actions from an LP policy."""

    def __init__(self, label: str, policy: Policy, gamma_a: float | None = None):
        self.label = label
        self.policy = policy
        self.gamma_a = gamma_a

    def act(self, mdp: Mdp, s: int, rng) -> int:
        return self.policy.sample(mdp, s, rng)


class GameAgent:
    """Plays the conservative game policy while no intervention has happened."""

    def __init__(self, game: GameValue, label: str = "cpp"):
        self.label = label
        self.game = game
        self.gamma_a = None
        self._policy = game.policy[InfoSet.all_unknown(game.k)]

    def act(self, mdp: Mdp, s: int, rng) -> int:
        return int(self._policy[s])


def make_agent(scenario: Scenario, planner: str, gamma_a: float):
    if planner not in PLANNER_KINDS:
        raise InvalidModelError(f"unknown planner {planner!r}")
    kind = PLANNER_KINDS[planner]
    if kind is None:
        return GameAgent(scenario.game(), planner)
    fld = build_cost_field(kind, scenario.mdp, scenario.beliefs, gamma_a, scenario.costs,
                           scenario.interventions)
    return PolicyAgent(planner, plan(scenario.mdp, fld), gamma_a)


@dataclass(frozen=True)
class SimulationResult:
    planner: str
    gamma_a: float | None
    intervention_time: float
    seed: int
    chosen_intervention: int | None
    pre_trajectory: tuple
    post_path: tuple
    pre_cost: float
    post_path_cost: float
    total_cost: float
    shortest_cost: float
    cost_ratio: float
    failed: bool = False
    reason: str = ""

    @property
    def trajectory(self) -> tuple:
        return self.pre_trajectory + self.post_path[1:]


def _step(mdp: Mdp, a: int, rng) -> int:
    lo, hi = mdp.trans_ptr[a], mdp.trans_ptr[a + 1]
    if hi - lo == 1:
        return int(mdp.trans_next[lo])
    return int(rng.choice(mdp.trans_next[lo:hi], p=mdp.trans_prob[lo:hi]))


def run_episode(scenario: Scenario, agent, t_int: float, seed: int = 0,
                *, episode_cap: int | None = None, chooser=None) -> SimulationResult:
    """One episode of the deceive-then-intervene protocol (``t_int = inf``: never intervene).

    ``chooser(s_index)`` overrides the belief-driven observer and returns an
    intervention index or -1 for none.
    """
    if not t_int >= 0:
        raise InvalidModelError(f"intervention time must be nonnegative, got {t_int}")
    mdp = scenario.mdp
    cap = episode_cap or 50 * mdp.n_states
    rng = np.random.default_rng(seed)
    goal = mdp.true_goal_index
    s = mdp.start_index
    traj = [s]
    cost = 0.0
    t = 0
    while s != goal and t < t_int and t < cap:
        a = agent.act(mdp, s, rng)
        if a < 0:
            break
        cost += mdp.action_cost[a]
        s = _step(mdp, a, rng)
        traj.append(s)
        t += 1

    def result(chosen, post, post_cost, failed=False, reason=""):
        total = cost + post_cost
        ratio = total / scenario.shortest_cost if not failed else math.inf
        return SimulationResult(agent.label, agent.gamma_a, t_int, seed, chosen,
                                tuple(mdp.states[i] for i in traj), tuple(post),
                                float(cost), float(post_cost), float(total) if not failed else math.inf,
                                scenario.shortest_cost, float(ratio), failed, reason)

    here = mdp.states[s]
    if s == goal:
        return result(None, (here,), 0.0)
    if t < t_int:
        return result(None, (here,), 0.0, True, "episode cap reached" if t >= cap else "policy stalled")
    if chooser is not None:
        i = int(chooser(s))
        if i >= 0 and not scenario.feasible[s, i]:
            raise InvalidModelError(f"intervention {i} would remove the agent's cell")
    else:
        i = int(scenario.choice[s]) if scenario.k else -1
    graph = mdp.graph if i < 0 else scenario.induced[i].graph
    path, post_cost = shortest_path(graph, here, mdp.true_goal)
    chosen = None if i < 0 else i
    if path is None:
        return result(chosen, (here,), 0.0, True, "true goal unreachable after intervention")
    return result(chosen, path, post_cost)


def worst_case_cost(scenario: Scenario, agent, seeds=(0,), *, episode_cap: int | None = None):
    """Largest total cost over intervention time, intervention choice and seed.

    Every time along the agent's unintervened run is tried with every
    intervention that keeps the agent's cell, plus never intervening.
    Returns the worst ``SimulationResult``.
    """
    worst = None
    for seed in seeds:
        free = run_episode(scenario, agent, math.inf, seed, episode_cap=episode_cap)
        candidates = [free]
        for t in range(len(free.pre_trajectory) - 1):
            for i in range(scenario.k):
                r = run_episode(scenario, agent, t, seed, episode_cap=episode_cap,
                                chooser=lambda s, i=i: i if scenario.feasible[s, i] else -1)
                candidates.append(r)
        for r in candidates:
            if worst is None or r.total_cost > worst.total_cost:
                worst = r
    return worst


# --- sweeps ---------------------------------------------------------------------


@dataclass
class SweepResult:
    results: list                 # SimulationResult, in canonical cell order
    aggregates: list              # dicts per (planner, t_int)
    cdw: tuple | None
    threshold: float
    errors: list = field(default_factory=list)   # cells that raised


def sweep(scenario: Scenario, planners, gamma_a_values, t_int_values, seeds, *,
          episode_cap: int | None = None, threads: int = 1, cdw_threshold: float = 0.05) -> SweepResult:
    """Run every (planner, gamma_a, t_int, seed) episode and aggregate per (planner, t_int).

    Plans are built once per (planner, gamma_a); the conservative planner
    ignores gamma_a but is still run once per value so every aggregate pools
    the same number of episodes. A failing cell is recorded and skipped.
    """
    planners, gamma_a_values = list(planners), list(gamma_a_values)
    t_int_values, seeds = list(t_int_values), list(seeds)
    if not (planners and gamma_a_values and t_int_values and seeds):
        raise InvalidModelError("sweep lists must be nonempty")
    for p in planners:
        if p not in PLANNER_KINDS:
            raise InvalidModelError(f"unknown planner {p!r}")
    if "cpp" in planners:
        scenario.game()   # solve once up front so threads share it

    cells = [(p, ga) for p in planners for ga in gamma_a_values]

    def build(cell):
        p, ga = cell
        try:
            return make_agent(scenario, p, ga), None
        except DppError as exc:
            return None, exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            agents = list(pool.map(build, cells))
    else:
        agents = [build(c) for c in cells]

    results, errors = [], []
    for (p, ga), (agent, exc) in zip(cells, agents):
        if agent is None:
            errors.append({"planner": p, "gamma_a": ga, "error": type(exc).__name__,
                           "message": str(exc)})
            continue
        agent.gamma_a = ga
        for t in t_int_values:
            for seed in seeds:
                results.append(run_episode(scenario, agent, t, seed, episode_cap=episode_cap))
    aggregates = aggregate(results, planners, t_int_values)
    return SweepResult(results, aggregates, detect_cdw(aggregates, cdw_threshold), cdw_threshold, errors)


def aggregate(results, planners, t_int_values) -> list:
    """Mean and standard deviation of the cost ratio per (planner, t_int)."""
    groups = {}
    for r in results:
        groups.setdefault((r.planner, r.intervention_time), []).append(r.cost_ratio)
    rows = []
    for p in planners:
        for t in t_int_values:
            vals = np.array(groups.get((p, t), []), dtype=float)
            ok = vals[np.isfinite(vals)]
            failed = int(vals.size - ok.size)
            rows.append({
                "planner": p,
                "t_int": t,
                "n": int(vals.size),
                "n_failed": failed,
                "mean": float(vals.mean()) if vals.size else math.nan,
                "std": float(vals.std()) if vals.size and not failed else (math.nan if not vals.size else math.inf),
            })
    return rows


def detect_cdw(aggregates, threshold: float = 0.05):
    """Longest run of consecutive intervention times whose across-planner spread exceeds ``threshold``.

    The spread at a time is max minus min of the planners' mean cost ratios.
    Returns ``(t_first, t_last)`` or ``None``; among equally long runs the
    earliest wins. Times that are not finite are ignored.
    """
    by_t = {}
    for row in aggregates:
        t = row["t_int"]
        if isinstance(t, float) and not math.isfinite(t):
            continue
        by_t.setdefault(t, []).append(row["mean"])
    spread = [(t, max(v) - min(v)) for t, v in sorted(by_t.items())]
    return longest_run(spread, threshold)


def longest_run(spread, threshold: float):
    best, run = None, []
    for t, s in spread:
        if s > threshold:
            run.append(t)
        else:
            run = []
        if run and (best is None or len(run) > best[2]):
            best = (run[0], run[-1], len(run))
    return None if best is None else (best[0], best[1])


# --- output ---------------------------------------------------------------------


def format_time(t) -> str | int:
    return "inf" if isinstance(t, float) and math.isinf(t) else int(t)


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _fmt(x) -> str:
    return repr(float(x))


def results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        w.writerow([r.planner, "" if r.gamma_a is None else _fmt(r.gamma_a),
                    format_time(r.intervention_time), r.seed,
                    "" if r.chosen_intervention is None else r.chosen_intervention,
                    _fmt(r.total_cost), _fmt(r.cost_ratio)])
    return buf.getvalue()


def aggregates_document(sw: SweepResult, *, timestamp: str | None = None, extra=None) -> dict:
    doc = {
        "schema_version": "1.0",
        "timestamp": timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "cells": [{**row, "t_int": format_time(row["t_int"]), "mean": _num(row["mean"]),
                   "std": _num(row["std"])} for row in sw.aggregates],
        "cdw": {
            "interval": None if sw.cdw is None else [format_time(sw.cdw[0]), format_time(sw.cdw[1])],
            "threshold": sw.threshold,
            "definition": "longest run of consecutive intervention times where the spread "
                          "(max - min) of planner mean cost ratios exceeds the threshold",
        },
        "errors": sw.errors,
    }
    if extra:
        doc.update(extra)
    return doc


def trajectory_record(scenario: Scenario, r: SimulationResult) -> dict:
    from .gridworld_io import state_label

    path = r.trajectory
    return {
        "planner": r.planner,
        "gamma_a": r.gamma_a,
        "t_int": format_time(r.intervention_time),
        "seed": r.seed,
        "chosen_intervention": r.chosen_intervention,
        "intervention_label": None if r.chosen_intervention is None
        else scenario.costs.labels[r.chosen_intervention],
        "failed": r.failed,
        "states": [state_label(s) for s in path],
        "n_pre_steps": len(r.pre_trajectory) - 1,
        "posterior": [[float(x) for x in scenario.beliefs.row(s)] for s in path],
        "total_cost": _num(r.total_cost),
        "cost_ratio": _num(r.cost_ratio),
    }


def trajectories_document(scenario: Scenario, sw: SweepResult) -> dict:
    from .gridworld_io import state_label

    seen, cells = set(), []
    for r in sw.results:
        key = (r.planner, r.gamma_a, r.intervention_time)
        if key in seen:
            continue
        seen.add(key)
        cells.append(trajectory_record(scenario, r))
    return {"schema_version": "1.0", "goals": [state_label(g) for g in scenario.beliefs.goals],
            "episodes": cells}


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"
