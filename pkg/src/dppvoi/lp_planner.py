"""Occupancy-measure linear programs for goal-constrained deceptive planning.

Decision variables are ``lam[a]`` for actions at non-goal states; every
candidate goal is an absorbing sink. Constraints, for each non-goal ``s``::

    sum_{a at s} lam[a] - sum_{a'} p(s|a') lam[a'] = [s == s0]

plus the reach row ``sum_a lam[a] p(G*|a) = R_max(G*)``. Stage one minimizes
``sum g[a] lam[a]``; stage two minimizes total occupancy among (near-)optimal
stage-one solutions so zero-cost states are not revisited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import InfeasibleLpError, InvalidModelError, UnboundedLpError
from .graph_mdp import Mdp, cost_to_go, max_reach_probability, next_hop

FEAS_TOL = 1e-9
CHECK_TOL = 1e-6
# stage-2 budget is v* (1 + STAGE2_SLACK) + STAGE2_FLOOR; relative so rescaling g keeps the plan
STAGE2_SLACK = 1e-9
STAGE2_FLOOR = 1e-12
MASS_EPS = 1e-9

_HIGHS = {"primal_feasibility_tolerance": FEAS_TOL, "dual_feasibility_tolerance": FEAS_TOL}


@dataclass(frozen=True)
class OccupancyMeasure:
    lam: np.ndarray          # per action; zero at goal states
    objective_value: float
    stage: int
    reach_target: float

    @property
    def total_mass(self) -> float:
        return float(self.lam.sum())

    def state_mass(self, mdp: Mdp) -> np.ndarray:
        return np.bincount(mdp.act_src, weights=self.lam, minlength=mdp.n_states)


@dataclass(frozen=True)
class Policy:
    probs: np.ndarray        # per action; each state's slice sums to 1 (or is empty)
    support: np.ndarray      # bool per state: positive occupancy
    fallback: np.ndarray     # bool per state: shortest-path fallback row
    occupancy: OccupancyMeasure | None = field(default=None, repr=False)
    stage1: OccupancyMeasure | None = field(default=None, repr=False)

    def distribution(self, mdp: Mdp, s) -> dict:
        i = mdp.index[s]
        lo, hi = mdp.state_ptr[i], mdp.state_ptr[i + 1]
        return {mdp.actions[a]: float(self.probs[a]) for a in range(lo, hi) if self.probs[a] > 0}

    def sample(self, mdp: Mdp, i: int, rng: np.random.Generator) -> int:
        lo, hi = mdp.state_ptr[i], mdp.state_ptr[i + 1]
        p = self.probs[lo:hi]
        if hi - lo == 1 or p.max() >= 1.0:
            return int(lo + np.argmax(p))
        u = rng.random()
        return int(lo + min(np.searchsorted(np.cumsum(p), u * p.sum(), side="right"), hi - lo - 1))


def _variables(mdp: Mdp):
    is_goal = np.zeros(mdp.n_states, dtype=bool)
    is_goal[mdp.goal_indices] = True
    return np.flatnonzero(~is_goal[mdp.act_src]), is_goal


def _constraints(mdp: Mdp):
    """Flow and reach rows over the LP variables, as sparse matrices."""
    var, is_goal = _variables(mdp)
    rows_of = -np.ones(mdp.n_states, dtype=np.int64)
    nongoal = np.flatnonzero(~is_goal)
    rows_of[nongoal] = np.arange(nongoal.size)
    r, c, v = [], [], []
    reach = np.zeros(var.size)
    g_star = mdp.true_goal_index
    for j, a in enumerate(var):
        r.append(rows_of[mdp.act_src[a]])
        c.append(j)
        v.append(1.0)
        for k in range(mdp.trans_ptr[a], mdp.trans_ptr[a + 1]):
            t, p = mdp.trans_next[k], mdp.trans_prob[k]
            if t == g_star:
                reach[j] += p
            if not is_goal[t]:
                r.append(rows_of[t])
                c.append(j)
                v.append(-p)
    flow = sp.csr_matrix((v, (r, c)), shape=(nongoal.size, var.size))
    rhs = np.zeros(nongoal.size)
    rhs[rows_of[mdp.start_index]] = 1.0
    return var, flow, rhs, reach


def reach_target(mdp: Mdp) -> float:
    decoys = [g for g in mdp.goals if g != mdp.true_goal]
    return max_reach_probability(mdp, mdp.true_goal, absorbing=decoys)


def _solve(c, A_eq, b_eq, A_ub=None, b_ub=None):
    kw = dict(A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    res = linprog(c, options=_HIGHS, **kw)
    if res.status == 3 and np.min(c, initial=0.0) >= 0:
        # a nonnegative objective is bounded below; HiGHS presolve can misreport
        # this when many costs are near zero, so retry without it
        res = linprog(c, options={**_HIGHS, "presolve": False}, **kw)
    return res


def _lift(mdp, var, x):
    lam = np.zeros(mdp.n_actions)
    lam[var] = np.clip(x, 0.0, None)
    return lam


def _raise_for(res, flow, rhs, stage, g=None):
    if res.status == 2:
        ok = _solve(np.zeros(flow.shape[1]), flow, rhs).status == 0
        family = "reach constraint" if ok else "flow constraints"
        raise InfeasibleLpError(f"stage-{stage} LP infeasible: {family} cannot be met")
    if res.status == 3:
        msg = f"stage-{stage} LP unbounded: a negative-cost cycle lets occupancy grow without limit"
        if g is not None and (g < 0).any():
            msg += (f"; {int((g < 0).sum())} action costs are negative (min {g.min():.4g}), which "
                    "happens when soft values exceed zero; a smaller alpha keeps them nonpositive")
        raise UnboundedLpError(msg)
    raise InfeasibleLpError(f"stage-{stage} LP failed: {res.message}")


def solve_stage1(mdp: Mdp, g: np.ndarray, *, r_max: float | None = None) -> OccupancyMeasure:
    """Minimize expected accumulated ``g`` subject to flow balance and maximal reach."""
    g = np.asarray(g, dtype=float)
    if g.shape != (mdp.n_actions,):
        raise InvalidModelError(f"cost vector has shape {g.shape}, expected ({mdp.n_actions},)")
    r_max = reach_target(mdp) if r_max is None else r_max
    var, flow, rhs, reach = _constraints(mdp)
    A = sp.vstack([flow, sp.csr_matrix(reach)]).tocsr()
    b = np.append(rhs, r_max)
    res = _solve(g[var], A, b)
    if res.status != 0:
        _raise_for(res, flow, rhs, 1, g)
    lam = _lift(mdp, var, res.x)
    occ = OccupancyMeasure(lam, float(g @ lam), 1, r_max)
    check_occupancy(mdp, occ)
    return occ


def solve_stage2(mdp: Mdp, g: np.ndarray, v_star: float, *, r_max: float | None = None,
                 slack: float = STAGE2_SLACK) -> OccupancyMeasure:
    """Minimize total occupancy among solutions whose ``g``-cost is within ``slack`` (relative) of ``v_star``."""
    g = np.asarray(g, dtype=float)
    r_max = reach_target(mdp) if r_max is None else r_max
    var, flow, rhs, reach = _constraints(mdp)
    A = sp.vstack([flow, sp.csr_matrix(reach)]).tocsr()
    b = np.append(rhs, r_max)
    res = _solve(np.ones(var.size), A, b, sp.csr_matrix(g[var]), np.array([v_star + slack * abs(v_star) + STAGE2_FLOOR]))
    if res.status == 2:
        raise InfeasibleLpError(f"stage-2 LP infeasible at v* = {v_star!r}; "
                                "review the stage-2 slack against the solver tolerance")
    if res.status != 0:
        _raise_for(res, flow, rhs, 2, g)
    lam = _lift(mdp, var, res.x)
    occ = OccupancyMeasure(lam, float(lam.sum()), 2, r_max)
    check_occupancy(mdp, occ)
    return occ


def flow_residuals(mdp: Mdp, lam: np.ndarray) -> tuple[np.ndarray, float]:
    """Flow-balance residual per non-goal state and the reach residual.

    Recomputed from the MDP's transition maps, independently of the LP matrices.
    """
    goals = set(mdp.goals)
    out_mass = {s: 0.0 for s in mdp.states if s not in goals}
    in_mass = dict.fromkeys(out_mass, 0.0)
    reached = 0.0
    for a, x in zip(mdp.actions, lam):
        s = a[0]
        if s in goals:
            continue
        out_mass[s] += x
        for t, p in mdp.transition(s, a).items():
            if t == mdp.true_goal:
                reached += p * x
            if t not in goals:
                in_mass[t] += p * x
    res = np.array([out_mass[s] - in_mass[s] - (1.0 if s == mdp.start else 0.0) for s in out_mass])
    return res, reached


def check_occupancy(mdp: Mdp, occ: OccupancyMeasure, tol: float = CHECK_TOL):
    if (occ.lam < 0).any():
        raise InfeasibleLpError("occupancy measure has negative entries")
    res, reached = flow_residuals(mdp, occ.lam)
    worst = float(np.abs(res).max()) if res.size else 0.0
    if worst >= tol:
        raise InfeasibleLpError(f"flow residual {worst:.3g} exceeds {tol:g}")
    if abs(reached - occ.reach_target) >= tol:
        raise InfeasibleLpError(f"reach residual {abs(reached - occ.reach_target):.3g} exceeds {tol:g}")


def recover_policy(mdp: Mdp, occ: OccupancyMeasure, *, mass_eps: float = MASS_EPS) -> Policy:
    """Normalize occupancy rows into action distributions.

    States with total mass below ``mass_eps`` (other than the true goal) get a
    deterministic move along a minimum-cost route to the true goal.
    """
    probs = np.zeros(mdp.n_actions)
    support = np.zeros(mdp.n_states, dtype=bool)
    fallback = np.zeros(mdp.n_states, dtype=bool)
    dist = None
    for i, s in enumerate(mdp.states):
        lo, hi = mdp.state_ptr[i], mdp.state_ptr[i + 1]
        if s == mdp.true_goal or hi == lo:
            continue
        mass = occ.lam[lo:hi].sum()
        if mass >= mass_eps:
            probs[lo:hi] = occ.lam[lo:hi] / mass
            support[i] = True
            continue
        if dist is None:
            dist = cost_to_go(mdp.graph, mdp.true_goal)
        fallback[i] = True
        t = next_hop(mdp.graph, s, dist) if math.isfinite(dist[s]) else None
        if t is None:
            probs[lo:hi] = 1.0 / (hi - lo)
        else:
            probs[mdp.action_index[(s, t)]] = 1.0
    return Policy(probs, support, fallback, occ)


def induced_occupancy(mdp: Mdp, policy: Policy) -> np.ndarray:
    """Expected action visits before absorption, by solving the flow equations for ``policy``."""
    var, is_goal = _variables(mdp)
    nongoal = np.flatnonzero(~is_goal)
    pos = -np.ones(mdp.n_states, dtype=np.int64)
    pos[nongoal] = np.arange(nongoal.size)
    P = np.zeros((nongoal.size, nongoal.size))
    for a in var:
        s = pos[mdp.act_src[a]]
        for k in range(mdp.trans_ptr[a], mdp.trans_ptr[a + 1]):
            t = mdp.trans_next[k]
            if not is_goal[t]:
                P[s, pos[t]] += policy.probs[a] * mdp.trans_prob[k]
    e0 = np.zeros(nongoal.size)
    e0[pos[mdp.start_index]] = 1.0
    visits = np.linalg.solve(np.eye(nongoal.size) - P.T, e0)
    lam = np.zeros(mdp.n_actions)
    lam[var] = visits[pos[mdp.act_src[var]]] * policy.probs[var]
    return lam


def plan(mdp: Mdp, cost_field) -> Policy:
    """Two-stage LP followed by policy recovery for a ``DeceptionCostField`` (or raw ``g``)."""
    g = getattr(cost_field, "discounted", cost_field)
    r_max = reach_target(mdp)
    first = solve_stage1(mdp, g, r_max=r_max)
    second = solve_stage2(mdp, g, first.objective_value, r_max=r_max)
    pol = recover_policy(mdp, second)
    return Policy(pol.probs, pol.support, pol.fallback, second, first)


def _lp_name(a) -> str:
    return f"x{a}"


def write_lp(path, mdp: Mdp, g: np.ndarray, *, r_max: float | None = None):
    """Dump the stage-one LP in CPLEX LP text format for external cross-checks."""
    g = np.asarray(g, dtype=float)
    r_max = reach_target(mdp) if r_max is None else r_max
    var, flow, rhs, reach = _constraints(mdp)

    def terms(coefs, cols):
        parts = []
        for cval, j in zip(coefs, cols):
            if cval == 0.0:
                continue
            sign = "-" if cval < 0 else "+"
            parts.append(f"{sign} {abs(cval)!r} {_lp_name(var[j])}")
        return " ".join(parts) if parts else f"0 {_lp_name(var[0])}"

    lines = ["\\ stage-one occupancy LP", "Minimize", " obj: " + terms(g[var], range(var.size)),
             "Subject To"]
    flow = flow.tocsr()
    for row in range(flow.shape[0]):
        lo, hi = flow.indptr[row], flow.indptr[row + 1]
        lines.append(f" flow{row}: {terms(flow.data[lo:hi], flow.indices[lo:hi])} = {rhs[row]!r}")
    lines.append(f" reach: {terms(reach, range(var.size))} = {r_max!r}")
    lines += ["Bounds"] + [f" {_lp_name(a)} >= 0" for a in var] + ["End", ""]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
