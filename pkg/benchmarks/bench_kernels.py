"""Compare the compiled and numpy Bellman kernels.

    python3 benchmarks/bench_kernels.py [--repeat N] [--map NAME] [--json]

Times soft value iteration, minimax value iteration and reach-probability
iteration on a bundled map (deterministic and with slip), plus the full cost
matrix, using each backend returned by ``available_backends()``.
"""

import argparse
import json
import timeit

import numpy as np

from dppvoi import gridworld_io as gio
from dppvoi._kernels import available_backends
from dppvoi.cpp_planner import minimax_value_iteration
from dppvoi.softmax_solver import compute_cost_matrix


def load(name, slip):
    spec = gio.parse_map(gio.bundled_map_path(name).read_text())
    return gio.grid_to_mdp(spec, 0.95, slip=slip)


def kernel_args(mdp):
    term = np.zeros(mdp.n_states, dtype=np.uint8)
    term[mdp.true_goal_index] = 1
    return mdp.state_ptr, mdp.action_cost, mdp.trans_ptr, mdp.trans_next, mdp.trans_prob, term


def cases(mdp, ivs, k):
    ptr, cost, tptr, tnext, tprob, term = kernel_args(mdp)
    n = mdp.n_states

    def softmax():
        k.softmax_vi(ptr, cost, tptr, tnext, tprob, term, np.zeros(n), mdp.gamma, 0.5, 1e-9, 100_000)

    def minimax():
        v, pol = np.zeros(n), np.zeros(n, dtype=np.int64)
        k.minimax_vi(ptr, cost, tptr, tnext, tprob, term, np.full(n, -np.inf), v, pol, mdp.gamma, 1e-9, 100_000)

    def reach():
        v = np.zeros(n)
        v[mdp.true_goal_index] = 1.0
        k.reach_vi(ptr, tptr, tnext, tprob, term, v, 1e-12, 100_000)

    return {
        "softmax_vi": softmax,
        "minimax_vi": minimax,
        "reach_vi": reach,
        "cost_matrix": lambda: compute_cost_matrix(mdp, ivs, alpha=0.5, kernels=k),
        "cpp_game": lambda: minimax_value_iteration(mdp, ivs, kernels=k),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--map", default="large_20x20")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print results as JSON")
    args = ap.parse_args(argv)

    backends = available_backends()
    rows = []
    for slip in (0.0, 0.1):
        mdp, ivs = load(args.map, slip)
        per_backend = {name: cases(mdp, ivs, k) for name, k in backends.items()}
        for case in per_backend["python"]:
            row = {"map": args.map, "slip": slip, "case": case}
            for name, fns in per_backend.items():
                row[name] = min(timeit.repeat(fns[case], number=1, repeat=args.repeat))
            if "cython" in row:
                row["speedup"] = row["python"] / row["cython"]
            rows.append(row)

    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"backends: {', '.join(backends)}  (best of {args.repeat}, seconds)")
    print(f"{'case':<12} {'slip':>5} {'python':>10} {'cython':>10} {'speedup':>8}")
    for r in rows:
        cy = f"{r['cython']:10.5f}" if "cython" in r else f"{'-':>10}"
        sp = f"{r['speedup']:7.1f}x" if "speedup" in r else f"{'-':>8}"
        print(f"{r['case']:<12} {r['slip']:5.2f} {r['python']:10.5f} {cy} {sp}")


if __name__ == "__main__":
    main()
