import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import LARGE, TWO_CORRIDOR, grid
from dppvoi import _kernels
from dppvoi.cpp_planner import minimax_value_iteration
from dppvoi.softmax_solver import softmax_value_iteration

backends = _kernels.available_backends()
needs_cython = pytest.mark.skipif("cython" not in backends, reason="compiled kernels not built")


def arrays(mdp):
    term = np.zeros(mdp.n_states, dtype=np.uint8)
    term[mdp.true_goal_index] = 1
    return (mdp.state_ptr, mdp.action_cost, mdp.trans_ptr, mdp.trans_next, mdp.trans_prob, term)


def run_softmax(k, mdp, alpha, tol=1e-10):
    v = np.zeros(mdp.n_states)
    out = k.softmax_vi(*arrays(mdp), v, mdp.gamma, alpha, tol, 100_000)
    return v, out


def run_minimax(k, mdp, floor):
    v = np.zeros(mdp.n_states)
    pol = np.zeros(mdp.n_states, dtype=np.int64)
    out = k.minimax_vi(*arrays(mdp), floor, v, pol, mdp.gamma, 1e-11, 100_000)
    return v, pol, out


def run_reach(k, mdp):
    v = np.zeros(mdp.n_states)
    v[mdp.true_goal_index] = 1.0
    s, _, tp, tn, pr, term = arrays(mdp)
    out = k.reach_vi(s, tp, tn, pr, term, v, 1e-12, 100_000)
    return v, out


def test_python_backend_always_present():
    assert backends["python"].BACKEND == "python"
    assert _kernels.BACKEND in backends


@needs_cython
@given(st.floats(0.05, 3.0), st.floats(0.3, 0.97), st.sampled_from([0.0, 0.1, 0.3]))
@settings(max_examples=25, deadline=None)
def test_softmax_parity(alpha, gamma, slip):
    mdp, _ = grid(TWO_CORRIDOR, gamma=gamma, slip=slip)
    vp, (ip, _, okp) = run_softmax(backends["python"], mdp, alpha)
    vc, (ic, _, okc) = run_softmax(backends["cython"], mdp, alpha)
    assert okp and okc
    assert abs(ip - ic) <= 1
    assert np.allclose(vp, vc, rtol=0, atol=1e-9)


@needs_cython
@given(st.floats(0.3, 0.97), st.sampled_from([0.0, 0.2]), st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_minimax_parity(gamma, slip, seed):
    mdp, _ = grid(TWO_CORRIDOR, gamma=gamma, slip=slip)
    rng = np.random.default_rng(seed)
    floor = np.where(rng.random(mdp.n_states) < 0.3, rng.uniform(0, 20, mdp.n_states), -np.inf)
    vp, pp, (_, _, okp) = run_minimax(backends["python"], mdp, floor)
    vc, pc, (_, _, okc) = run_minimax(backends["cython"], mdp, floor)
    assert okp and okc
    assert np.allclose(vp, vc, rtol=0, atol=1e-9)
    assert np.array_equal(pp, pc)


@needs_cython
@pytest.mark.parametrize("slip", [0.0, 0.1, 0.4])
def test_reach_parity(slip):
    mdp, _ = grid(LARGE, slip=slip)
    vp, _ = run_reach(backends["python"], mdp)
    vc, _ = run_reach(backends["cython"], mdp)
    assert np.allclose(vp, vc, rtol=0, atol=1e-11)
    assert vp[mdp.start_index] == pytest.approx(1.0, abs=1e-9)


@needs_cython
def test_solver_parity_through_public_api():
    mdp, ivs = grid(LARGE, gamma=0.95)
    a = softmax_value_iteration(mdp, mdp.true_goal, alpha=0.5, kernels=backends["python"])
    b = softmax_value_iteration(mdp, mdp.true_goal, alpha=0.5, kernels=backends["cython"])
    assert np.allclose(a.values, b.values, rtol=0, atol=1e-9)
    ga = minimax_value_iteration(mdp, ivs[:2], kernels=backends["python"])
    gb = minimax_value_iteration(mdp, ivs[:2], kernels=backends["cython"])
    assert ga.value(mdp.start) == pytest.approx(gb.value(mdp.start), abs=1e-9)


def test_nonconvergence_reported_by_both_backends():
    mdp, _ = grid(TWO_CORRIDOR, gamma=0.99)
    for k in backends.values():
        it, res, ok = k.softmax_vi(*arrays(mdp), np.zeros(mdp.n_states), mdp.gamma, 1.0, 1e-12, 3)
        assert (it, ok) == (3, False) and res > 0


@pytest.mark.parametrize("value,expected", [("python", "python"), ("", None)])
def test_backend_env_var(value, expected):
    env = {**os.environ, "DPPVOI_BACKEND": value}
    proc = subprocess.run([sys.executable, "-c", "from dppvoi import _kernels; print(_kernels.BACKEND)"],
                          capture_output=True, text=True, env=env, check=True)
    got = proc.stdout.strip()
    if expected is None:
        expected = "cython" if "cython" in backends else "python"
    assert got == expected


def test_benchmark_script_runs():
    script = os.path.join(os.path.dirname(__file__), "..", "benchmarks", "bench_kernels.py")
    proc = subprocess.run([sys.executable, script, "--map", "two_corridor", "--repeat", "1", "--json"],
                          capture_output=True, text=True, check=True)
    rows = json.loads(proc.stdout)
    assert {r["case"] for r in rows} == {"softmax_vi", "minimax_vi", "reach_vi", "cost_matrix", "cpp_game"}
    assert all(set(backends) <= set(r) for r in rows)
