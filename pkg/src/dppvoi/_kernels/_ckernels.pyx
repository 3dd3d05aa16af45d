# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Bellman kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np

from libc.math cimport exp, log, fabs, INFINITY, isnan

BACKEND = "cython"

ctypedef long long idx_t


cdef inline double _expected(const idx_t[::1] trans_ptr, const idx_t[::1] trans_next,
                             const double[::1] trans_prob, const double[::1] values,
                             idx_t a) noexcept nogil:
    cdef double acc = 0.0
    cdef double p
    cdef idx_t k
    for k in range(trans_ptr[a], trans_ptr[a + 1]):
        p = trans_prob[k]
        if p > 0.0:
            acc += p * values[trans_next[k]]
    return acc


cdef inline double _diff(double new, double old) noexcept nogil:
    if new == old:
        return 0.0
    cdef double d = fabs(new - old)
    if isnan(d):
        return INFINITY
    return d


def softmax_vi(const idx_t[::1] state_ptr, const double[::1] cost,
               const idx_t[::1] trans_ptr, const idx_t[::1] trans_next,
               const double[::1] trans_prob, const unsigned char[::1] terminal,
               double[::1] values, double gamma, double alpha, double tol,
               idx_t max_iters):
    cdef idx_t n = values.shape[0]
    cdef idx_t n_actions = cost.shape[0]
    cdef double[::1] new = np.empty(n, dtype=np.float64)
    cdef double[::1] q = np.empty(max(n_actions, 1), dtype=np.float64)
    cdef idx_t it = 0, s, a, a0, a1
    cdef double residual = INFINITY, m, acc, v, d
    cdef bint converged = False
    with nogil:
        while it < max_iters:
            it += 1
            residual = 0.0
            for s in range(n):
                if terminal[s]:
                    new[s] = values[s]
                    continue
                a0 = state_ptr[s]
                a1 = state_ptr[s + 1]
                if a0 == a1:
                    v = -INFINITY
                else:
                    m = -INFINITY
                    for a in range(a0, a1):
                        q[a] = -cost[a] + gamma * _expected(trans_ptr, trans_next, trans_prob, values, a)
                        if q[a] > m:
                            m = q[a]
                    if m == -INFINITY or m == INFINITY:
                        v = m
                    else:
                        acc = 0.0
                        for a in range(a0, a1):
                            if q[a] != -INFINITY:
                                acc += exp((q[a] - m) / alpha)
                        v = m + alpha * log(acc)
                new[s] = v
                d = _diff(v, values[s])
                if d > residual:
                    residual = d
            for s in range(n):
                values[s] = new[s]
            if residual < tol:
                converged = True
                break
    return it, residual, converged


def minimax_vi(const idx_t[::1] state_ptr, const double[::1] cost,
               const idx_t[::1] trans_ptr, const idx_t[::1] trans_next,
               const double[::1] trans_prob, const unsigned char[::1] terminal,
               const double[::1] floor, double[::1] values, idx_t[::1] policy,
               double gamma, double tol, idx_t max_iters):
    cdef idx_t n = values.shape[0]
    cdef double[::1] new = np.empty(n, dtype=np.float64)
    cdef idx_t it = 0, s, a, a0, a1, best
    cdef double residual = INFINITY, w, qa, d
    cdef bint converged = False
    with nogil:
        while it < max_iters:
            it += 1
            residual = 0.0
            for s in range(n):
                if terminal[s]:
                    new[s] = values[s]
                    policy[s] = -1
                    continue
                a0 = state_ptr[s]
                a1 = state_ptr[s + 1]
                w = INFINITY
                best = -1
                for a in range(a0, a1):
                    qa = cost[a] + gamma * _expected(trans_ptr, trans_next, trans_prob, values, a)
                    if best == -1 or qa < w:
                        w = qa
                        best = a
                policy[s] = best
                if floor[s] > w:
                    w = floor[s]
                new[s] = w
                d = _diff(w, values[s])
                if d > residual:
                    residual = d
            for s in range(n):
                values[s] = new[s]
            if residual < tol:
                converged = True
                break
    return it, residual, converged


def reach_vi(const idx_t[::1] state_ptr, const idx_t[::1] trans_ptr,
             const idx_t[::1] trans_next, const double[::1] trans_prob,
             const unsigned char[::1] terminal, double[::1] values, double tol,
             idx_t max_iters):
    cdef idx_t n = values.shape[0]
    cdef double[::1] new = np.empty(n, dtype=np.float64)
    cdef idx_t it = 0, s, a
    cdef double residual = INFINITY, best, qa, d
    cdef bint converged = False
    with nogil:
        while it < max_iters:
            it += 1
            residual = 0.0
            for s in range(n):
                if terminal[s]:
                    new[s] = values[s]
                    continue
                best = 0.0
                for a in range(state_ptr[s], state_ptr[s + 1]):
                    qa = _expected(trans_ptr, trans_next, trans_prob, values, a)
                    if qa > best:
                        best = qa
                new[s] = best
                d = _diff(best, values[s])
                if d > residual:
                    residual = d
            for s in range(n):
                values[s] = new[s]
            if residual < tol:
                converged = True
                break
    return it, residual, converged
