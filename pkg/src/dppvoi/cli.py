"""Command-line entry point: ``dppvoi {plan,simulate,sweep,export}``.

Every command reads a gridworld map (a path, or the name of a bundled map)
and an optional experiment config. Failures are reported on stderr as one
JSON object ``{"error": code, "message": ...}``; the exit status is 2 for
input errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import gridworld_io as gio
from .errors import DppError, InputError, NumericalError
from .graph_mdp import hop_array
from .objectives import build_cost_field
from .sim_harness import (PLANNER_KINDS, VOI_PLANNERS, aggregates_document, build_scenario, dumps,
                          format_time, make_agent, results_csv, run_episode, sweep,
                          trajectories_document, trajectory_record)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

THREADS_ENV = "DPPVOI_THREADS"


class CliError(InputError):
    """Input error raised by the CLI itself, carrying its own code."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# --- loading -------------------------------------------------------------------


def resolve_map(name) -> Path:
    p = Path(name)
    if p.exists():
        return p
    if name in gio.bundled_maps():
        return gio.bundled_map_path(name)
    raise CliError("file_not_found", f"map {name!r} is neither a file nor a bundled map "
                                     f"({', '.join(gio.bundled_maps())})")


def load_config(path) -> gio.ExperimentConfig:
    if path is None:
        return gio.ExperimentConfig()
    p = Path(path)
    if not p.exists():
        bundled = gio.bundled_config_path(str(path))
        if not bundled.exists():
            raise CliError("file_not_found", f"config {str(path)!r} not found")
        p = bundled
    return gio.load_config(p)


def load_scenario(map_name, config: gio.ExperimentConfig, threads: int = 1):
    text = resolve_map(map_name).read_text(encoding="utf-8")
    spec = gio.parse_map(text, config.edge_cost)
    mdp, interventions = gio.grid_to_mdp(spec, config.gamma, slip=config.slip)
    scenario = build_scenario(mdp, interventions, alpha=config.alpha, prior=config.prior_for(mdp.goals),
                              tol=config.tol, workers=threads)
    return spec, scenario


def check_planner(name) -> str:
    if name not in PLANNER_KINDS:
        raise CliError("unknown_planner", f"unknown planner {name!r}; choose from {', '.join(gio.PLANNERS)}")
    return name


def thread_count(arg) -> int:
    if arg is not None:
        n = arg
    else:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(raw)
        except ValueError:
            raise CliError("invalid_input", f"{THREADS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise CliError("invalid_input", f"thread count must be positive, got {n}")
    return n


def parse_time(text) -> float:
    if text in ("inf", "never"):
        return math.inf
    try:
        t = int(text)
    except ValueError:
        raise CliError("invalid_input", f"intervention time must be an integer or 'inf', got {text!r}") from None
    if t < 0:
        raise CliError("invalid_input", f"intervention time must be nonnegative, got {t}")
    return t


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def write_text(path, text: str):
    try:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError("io_error", f"cannot write {path}: {exc}") from exc


# --- documents -----------------------------------------------------------------


def policy_document(scenario, planner: str, gamma_a: float, config) -> dict:
    L = gio.state_label
    mdp = scenario.mdp
    agent = make_agent(scenario, planner, gamma_a)
    hops = hop_array(mdp)
    goals = set(mdp.goals)
    rows = []
    for i, s in enumerate(mdp.states):
        if s in goals or not math.isfinite(hops[i]):
            continue
        if PLANNER_KINDS[planner] is None:
            a = agent.act(mdp, i, None)
            dist = {} if a < 0 else {mdp.actions[a][1]: 1.0}
        else:
            dist = {t: p for (_, t), p in agent.policy.distribution(mdp, s).items()}
        rows.append({"state": L(s), "actions": {L(t): p for t, p in sorted(dist.items())}})

    doc = {
        "schema_version": "1.0",
        "planner": planner,
        "gamma": mdp.gamma,
        "gamma_a": None if PLANNER_KINDS[planner] is None else gamma_a,
        "alpha": config.alpha,
        "start": L(mdp.start),
        "true_goal": L(mdp.true_goal),
        "goals": [L(g) for g in mdp.goals],
        "interventions": list(scenario.costs.labels),
        "policy": rows,
        "fields": None,
        "cost_matrix": None,
        "lp": None,
        "game": None,
    }
    kind = PLANNER_KINDS[planner]
    if kind is None:
        game = agent.game
        doc["game"] = {"start_value": _num(game.value(mdp.start)), "decoy_penalty": game.decoy_penalty}
        return doc
    fld = build_cost_field(kind, mdp, scenario.beliefs, gamma_a, scenario.costs, scenario.interventions)
    per_state = np.zeros(mdp.n_states)
    per_state[mdp.act_src] = fld.discounted
    doc["fields"] = {
        "kind": fld.kind,
        "states": [L(s) for s in mdp.states],
        "hops": [None if not math.isfinite(h) else int(h) for h in fld.hops],
        "raw": [_num(x) for x in fld.raw],
        "discounted": [_num(x) for x in per_state],
    }
    pol = agent.policy
    doc["lp"] = {
        "stage1_objective": pol.stage1.objective_value,
        "total_occupancy": pol.occupancy.total_mass,
        "reach_target": pol.occupancy.reach_target,
        "fallback_states": [L(s) for s, f in zip(mdp.states, pol.fallback) if f],
    }
    if planner in VOI_PLANNERS:
        doc["cost_matrix"] = cost_matrix_document(scenario)
    return doc


def cost_matrix_document(scenario) -> dict:
    cm = scenario.costs
    return {
        "goals": [gio.state_label(g) for g in cm.goals],
        "interventions": list(cm.labels),
        "entries": [[_num(x) for x in row] for row in cm.entries],
        "base_entries": [_num(x) for x in cm.base_entries],
    }


def export_document(spec, scenario) -> dict:
    L = gio.state_label
    mdp = scenario.mdp
    return {
        "schema_version": "1.0",
        "width": spec.width,
        "height": spec.height,
        "rows": list(spec.rows),
        "states": [L(s) for s in mdp.states],
        "start": L(mdp.start),
        "goals": [L(g) for g in scenario.beliefs.goals],
        "prior": [float(p) for p in scenario.beliefs.prior],
        "posterior": [[float(x) for x in row] for row in scenario.beliefs.posterior],
        "observer_choice": [int(c) for c in scenario.choice],
        "cost_matrix": cost_matrix_document(scenario),
    }


# --- commands --------------------------------------------------------------------


def cmd_plan(map_path, config_path, planner, out_path, *, gamma_a=None, threads=None) -> int:
    check_planner(planner)
    config = load_config(config_path)
    ga = config.gamma_a_list[0] if gamma_a is None else float(gamma_a)
    _, scenario = load_scenario(map_path, config, thread_count(threads))
    write_text(out_path, dumps(policy_document(scenario, planner, ga, config)))
    return EXIT_OK


def cmd_simulate(map_path, config_path, planner, out_path, *, gamma_a=None, t_int="inf",
                 seed=None, threads=None) -> int:
    check_planner(planner)
    config = load_config(config_path)
    ga = config.gamma_a_list[0] if gamma_a is None else float(gamma_a)
    t = parse_time(t_int) if isinstance(t_int, str) else t_int
    seeds = config.seeds if seed is None else (int(seed),)
    _, scenario = load_scenario(map_path, config, thread_count(threads))
    agent = make_agent(scenario, planner, ga)
    agent.gamma_a = ga
    episodes = [trajectory_record(scenario, run_episode(scenario, agent, t, s, episode_cap=config.episode_cap))
                for s in seeds]
    doc = {"schema_version": "1.0", "goals": [gio.state_label(g) for g in scenario.beliefs.goals],
           "episodes": episodes}
    write_text(out_path, dumps(doc))
    return EXIT_OK


def cmd_sweep(map_path, config_path, out_dir, *, threads=None, seed=None, timestamp=None) -> int:
    """Full sweep; writes ``results.csv``, ``aggregates.json`` and ``trajectories.json``.

    Returns 3 when some (planner, gamma_a) cell could not be planned; the
    other cells are still written and the failures are listed in
    ``aggregates.json``.
    """
    config = load_config(config_path)
    for p in config.planners:
        check_planner(p)
    n = thread_count(threads)
    seeds = config.seeds if seed is None else (int(seed),)
    _, scenario = load_scenario(map_path, config, n)
    sw = sweep(scenario, config.planners, config.gamma_a_list, config.t_int_list, seeds,
               episode_cap=config.episode_cap, threads=n, cdw_threshold=config.cdw_threshold)
    out = Path(out_dir)
    extra = {"config": {
        "gamma": config.gamma, "alpha": config.alpha, "planners": list(config.planners),
        "gamma_a_list": list(config.gamma_a_list),
        "t_int_list": [format_time(t) for t in config.t_int_list], "seeds": list(seeds),
    }}
    write_text(out / "results.csv", results_csv(sw.results))
    write_text(out / "aggregates.json", dumps(aggregates_document(sw, timestamp=timestamp, extra=extra)))
    write_text(out / "trajectories.json", dumps(trajectories_document(scenario, sw)))
    if sw.errors:
        report_error("sweep_cells_failed", f"{len(sw.errors)} planner cell(s) failed; see aggregates.json",
                     cells=sw.errors)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_export(map_path, config_path, out_path, *, threads=None) -> int:
    config = load_config(config_path)
    spec, scenario = load_scenario(map_path, config, thread_count(threads))
    write_text(out_path, dumps(export_document(spec, scenario)))
    return EXIT_OK


# --- entry point -------------------------------------------------------------------


def report_error(code, message, **extra):
    doc = {"error": code, "message": message, **extra}
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")


def _error_extra(exc) -> dict:
    extra = {}
    for attr in ("line", "column", "residual", "iterations"):
        v = getattr(exc, attr, None)
        if v is not None:
            extra[attr] = _num(v) if isinstance(v, float) else v
    return extra


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage_error", message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dppvoi", description="Deceptive path planning against an intervening observer.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, planner=False):
        p.add_argument("--map", required=True, help="map file or bundled map name")
        p.add_argument("--config", help="experiment config JSON (file or bundled name)")
        p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
        if planner:
            p.add_argument("--planner", required=True, help="|".join(gio.PLANNERS))
            p.add_argument("--gamma-a", type=float, help="deception discount (default: first in config)")

    p = sub.add_parser("plan", help="synthesize one policy and write it as JSON")
    common(p, planner=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="run intervention episodes for one planner")
    common(p, planner=True)
    p.add_argument("--t-int", default="inf", help="intervention time or 'inf'")
    p.add_argument("--seed", type=int, help="single seed (default: config seeds)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="run the full planner x gamma_a x t_int x seed sweep")
    common(p)
    p.add_argument("--seed", type=int, help="single seed (default: config seeds)")
    p.add_argument("--timestamp", help="fixed timestamp for aggregates.json")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("export", help="write observer posteriors and the cost matrix")
    common(p)
    p.add_argument("--out", required=True)
    return parser


def dispatch(args) -> int:
    if args.command == "plan":
        return cmd_plan(args.map, args.config, args.planner, args.out, gamma_a=args.gamma_a,
                        threads=args.threads)
    if args.command == "simulate":
        return cmd_simulate(args.map, args.config, args.planner, args.out, gamma_a=args.gamma_a,
                            t_int=args.t_int, seed=args.seed, threads=args.threads)
    if args.command == "sweep":
        return cmd_sweep(args.map, args.config, args.out, threads=args.threads, seed=args.seed,
                         timestamp=args.timestamp)
    return cmd_export(args.map, args.config, args.out, threads=args.threads)


def main(argv=None) -> int:
    try:
        return dispatch(build_parser().parse_args(argv))
    except InputError as exc:
        report_error(exc.code, str(exc), **_error_extra(exc))
        return EXIT_INPUT
    except NumericalError as exc:
        report_error(exc.code, str(exc), **_error_extra(exc))
        return EXIT_NUMERICAL
    except DppError as exc:
        report_error(exc.code, str(exc))
        return EXIT_INTERNAL
    except OSError as exc:
        report_error("io_error", str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
