"""Entropy-regularized goal reaching via soft value iteration.

Values follow the soft Bellman recursion with costs entered negated::

    Q_G(s, a) = -c(s, a) + gamma * sum_s' p(s'|s, a) V_G(s')
    V_G(s)    = alpha * log sum_a exp(Q_G(s, a) / alpha)

with ``V_G(G) = 0`` at the absorbing goal. A higher cost to the agent is a
*more negative* value, so the one quantity the rest of the package reasons
with is ``damage(i, G) = -J(i, G)``.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConvergenceError, InvalidModelError
from .graph_mdp import Intervention, Mdp, build_induced_mdp


class _CallCounter:
    """Counts soft value iteration solves (read by the instrumentation tests)."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def bump(self):
        with self._lock:
            self.count += 1

    def reset(self):
        with self._lock:
            self.count = 0


solve_counter = _CallCounter()


@dataclass(frozen=True)
class ValueTable:
    values: np.ndarray
    goal: object
    alpha: float
    residual: float
    iterations: int
    states: tuple
    index: dict = field(repr=False, default_factory=dict)
    residual_history: tuple = ()

    def __post_init__(self):
        self.values.setflags(write=False)

    def __getitem__(self, s) -> float:
        return float(self.values[self.index[s]])

    def as_dict(self) -> dict:
        return dict(zip(self.states, self.values.tolist()))


def default_max_iters(gamma: float, tol: float) -> int:
    return 10 * math.ceil(math.log(tol) / math.log(gamma))


def softmax_value_iteration(mdp: Mdp, goal, alpha: float = 1.0, tol: float = 1e-9,
                            max_iters: int | None = None, *, history: bool = False,
                            kernels=None) -> ValueTable:
    """Solve the soft Bellman fixed point for ``goal`` on ``mdp``.

    Raises ``ConvergenceError`` (carrying the last residual) when the max-norm
    change of a sweep is still ``>= tol`` after ``max_iters`` sweeps. With
    ``history=True`` one sweep is run per kernel call so the residual sequence
    can be recorded; results are identical either way.
    """
    if goal not in mdp.index:
        raise InvalidModelError(f"goal {goal!r} is not a state of the MDP")
    if alpha <= 0.0:
        raise InvalidModelError(f"alpha must be positive, got {alpha}")
    if tol <= 0.0:
        raise InvalidModelError(f"tol must be positive, got {tol}")
    k = kernels or _kernels
    if max_iters is None:
        max_iters = default_max_iters(mdp.gamma, tol)
    values = np.zeros(mdp.n_states)
    terminal = mdp.terminal_mask([goal])
    args = (mdp.state_ptr, mdp.action_cost, mdp.trans_ptr, mdp.trans_next, mdp.trans_prob,
            terminal, values, mdp.gamma, float(alpha))
    solve_counter.bump()
    trace = []
    if history:
        it, residual, ok = 0, math.inf, False
        while it < max_iters and not ok:
            _, residual, ok = k.softmax_vi(*args, tol, 1)
            trace.append(residual)
            it += 1
    else:
        it, residual, ok = k.softmax_vi(*args, tol, max_iters)
    if not ok:
        raise ConvergenceError(
            f"soft value iteration for goal {goal!r} did not converge in {it} sweeps "
            f"(residual {residual:.3g} >= tol {tol:.3g})", residual, it)
    return ValueTable(values, goal, float(alpha), float(residual), int(it), mdp.states,
                      dict(mdp.index), tuple(trace))


@dataclass(frozen=True)
class CostMatrix:
    """``entries[i, g] = J(i, goals[g])``: start value of goal ``g`` after intervention ``i``.

    ``base_entries[g]`` is the same quantity on the unintervened MDP and
    ``base_values`` keeps the full base value tables for the observer model.
    """

    entries: np.ndarray
    base_entries: np.ndarray
    goals: tuple
    labels: tuple
    base_values: dict = field(repr=False, default_factory=dict)
    induced_values: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        self.entries.setflags(write=False)
        self.base_entries.setflags(write=False)

    @property
    def n_interventions(self) -> int:
        return self.entries.shape[0]

    def goal_column(self, goal) -> int:
        return self.goals.index(goal)

    def damage(self, i: int, goal) -> float:
        """Cost intervention ``i`` imposes on an agent heading for ``goal``."""
        return -float(self.entries[i, self.goal_column(goal)])

    def damage_matrix(self) -> np.ndarray:
        return -self.entries

    def base_damage(self) -> np.ndarray:
        return -self.base_entries


def compute_cost_matrix(base: Mdp, interventions, goals=None, alpha: float = 1.0,
                        tol: float = 1e-9, *, max_iters: int | None = None,
                        workers: int = 1, induced=None, kernels=None) -> CostMatrix:
    """Soft values at the start for every (intervention, goal) pair plus the base MDP.

    Performs exactly ``len(interventions) * len(goals) + len(goals)`` solves.
    ``induced`` may supply prebuilt induced MDPs aligned with ``interventions``.
    """
    goals = tuple(base.goals if goals is None else goals)
    interventions = list(interventions)
    if induced is None:
        induced = [build_induced_mdp(base, iv) for iv in interventions]
    jobs = [(None, g) for g in goals] + [(i, g) for i in range(len(interventions)) for g in goals]

    def run(job):
        i, g = job
        mdp = base if i is None else induced[i]
        try:
            return job, softmax_value_iteration(mdp, g, alpha, tol, max_iters, kernels=kernels)
        except ConvergenceError as exc:
            where = "base MDP" if i is None else f"intervention {i}"
            raise ConvergenceError(f"{where}, goal {g!r}: {exc}", exc.residual, exc.iterations) from exc

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    entries = np.empty((len(interventions), len(goals)))
    base_entries = np.empty(len(goals))
    base_values, induced_values = {}, {}
    for (i, g), table in results:
        col = goals.index(g)
        if i is None:
            base_entries[col] = table[base.start]
            base_values[g] = table
        else:
            entries[i, col] = table[base.start]
            induced_values[(i, g)] = table
    labels = tuple(iv.label if isinstance(iv, Intervention) else str(iv) for iv in interventions)
    return CostMatrix(entries, base_entries, goals, labels, base_values, induced_values)
