"""Pure numpy Bellman kernels.

Fallback for the compiled ``_ckernels`` module, with identical signatures and
semantics. Every kernel works on a CSR layout of the MDP:

* actions of state ``s`` are ``state_ptr[s]:state_ptr[s + 1]``
* successors of action ``a`` are ``trans_next[trans_ptr[a]:trans_ptr[a + 1]]``
  with probabilities ``trans_prob[...]``

``terminal`` marks states whose value is held fixed at its initial value.
Sweeps are synchronous (Jacobi) so both backends visit the same iterates.
"""

import numpy as np

BACKEND = "python"


def _expected_next(trans_ptr, trans_next, trans_prob, values, n_actions):
    nxt = values[trans_next]
    # 0 * inf must not poison successors that carry no mass
    contrib = np.where(trans_prob > 0.0, trans_prob * nxt, 0.0)
    out = np.zeros(n_actions)
    counts = np.diff(trans_ptr)
    nz = counts > 0
    if nz.any():
        out[nz] = np.add.reduceat(contrib, trans_ptr[:-1][nz])
    return out


def _segments(state_ptr, active):
    # reduceat segments must start at every nonempty state, active or not
    nonempty = np.diff(state_ptr) > 0
    return active & nonempty, nonempty, state_ptr[:-1][nonempty]


def _per_state(ufunc, q, starts, nonempty, fill):
    out = np.full(nonempty.shape[0], fill)
    if starts.size:
        out[nonempty] = ufunc.reduceat(q, starts)
    return out


def _residual(new, old):
    with np.errstate(invalid="ignore"):
        diff = np.abs(new - old)
    same = new == old  # covers matching infinities
    diff[same] = 0.0
    diff[np.isnan(diff)] = np.inf
    return float(diff.max()) if diff.size else 0.0


def softmax_vi(state_ptr, cost, trans_ptr, trans_next, trans_prob, terminal,
               values, gamma, alpha, tol, max_iters):
    """Soft value iteration ``V(s) = alpha * logsumexp(Q(s, .) / alpha)``.

    ``Q(s, a) = -cost[a] + gamma * E[V(s')]``. Updates ``values`` in place and
    returns ``(iterations, residual, converged)``.
    """
    n = values.shape[0]
    n_actions = cost.shape[0]
    active = ~terminal.astype(bool)
    has, nonempty, starts = _segments(state_ptr, active)
    act_state = np.repeat(np.arange(n), np.diff(state_ptr))
    empty = active & ~has
    residual = np.inf
    for it in range(1, max_iters + 1):
        q = -cost + gamma * _expected_next(trans_ptr, trans_next, trans_prob, values, n_actions)
        new = values.copy()
        new[empty] = -np.inf
        if starts.size:
            qmax = _per_state(np.maximum, q, starts, nonempty, -np.inf)
            shift = qmax[act_state]
            finite = np.isfinite(shift)
            with np.errstate(invalid="ignore", over="ignore"):
                z = np.where(finite, np.exp((q - np.where(finite, shift, 0.0)) / alpha), 0.0)
            acc = _per_state(np.add, z, starts, nonempty, 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                soft = np.where(np.isfinite(qmax), qmax + alpha * np.log(acc), qmax)
            new[has] = soft[has]
        residual = _residual(new, values)
        values[:] = new
        if residual < tol:
            return it, residual, True
    return max_iters, residual, False


def minimax_vi(state_ptr, cost, trans_ptr, trans_next, trans_prob, terminal,
               floor, values, policy, gamma, tol, max_iters):
    """Min-cost value iteration with an observer floor.

    ``V(s) = max(min_a cost[a] + gamma * E[V(s')], floor[s])``; a floor of
    ``-inf`` reduces this to plain min-cost value iteration. ``policy`` receives
    the first minimizing action index (``-1`` where no action exists).
    """
    n = values.shape[0]
    n_actions = cost.shape[0]
    active = ~terminal.astype(bool)
    has, nonempty, starts = _segments(state_ptr, active)
    empty = active & ~has
    residual = np.inf
    counts = np.diff(state_ptr)
    for it in range(1, max_iters + 1):
        q = cost + gamma * _expected_next(trans_ptr, trans_next, trans_prob, values, n_actions)
        new = values.copy()
        new[empty] = np.inf
        if starts.size:
            new[has] = _per_state(np.minimum, q, starts, nonempty, np.inf)[has]
        new[active] = np.maximum(new[active], floor[active])
        residual = _residual(new, values)
        values[:] = new
        if residual < tol:
            _greedy(q, state_ptr, counts, has, policy)
            policy[~has] = -1
            return it, residual, True
    _greedy(q, state_ptr, counts, has, policy)
    policy[~has] = -1
    return max_iters, residual, False


def _greedy(q, state_ptr, counts, has, policy):
    for s in np.flatnonzero(has):
        lo = state_ptr[s]
        policy[s] = lo + int(np.argmin(q[lo:lo + counts[s]]))


def reach_vi(state_ptr, trans_ptr, trans_next, trans_prob, terminal, values,
             tol, max_iters):
    """Maximal reachability ``V(s) = max_a E[V(s')]`` from the given start."""
    n = values.shape[0]
    n_actions = trans_ptr.shape[0] - 1
    active = ~terminal.astype(bool)
    has, nonempty, starts = _segments(state_ptr, active)
    empty = active & ~has
    residual = np.inf
    for it in range(1, max_iters + 1):
        q = _expected_next(trans_ptr, trans_next, trans_prob, values, n_actions)
        new = values.copy()
        new[empty] = 0.0
        if starts.size:
            new[has] = _per_state(np.maximum, q, starts, nonempty, 0.0)[has]
        residual = _residual(new, values)
        values[:] = new
        if residual < tol:
            return it, residual, True
    return max_iters, residual, False
