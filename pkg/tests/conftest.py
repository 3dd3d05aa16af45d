import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dppvoi import gridworld_io as gio  # noqa: E402
from dppvoi.graph_mdp import Mdp, WeightedGraph  # noqa: E402


def line_graph(n, cost=1.0):
    states = list(range(n))
    return WeightedGraph(states, [(i, i + 1) for i in range(n - 1)], default_cost=cost)


def line_mdp(n, start=0, goals=None, true_goal=None, gamma=0.95, cost=1.0):
    goals = [n - 1] if goals is None else goals
    return Mdp(line_graph(n, cost), start, goals, goals[0] if true_goal is None else true_goal, gamma)


def grid(text, gamma=0.95, **kw):
    return gio.grid_to_mdp(gio.parse_map(text), gamma, **kw)


TWO_CORRIDOR = gio.bundled_map_path("two_corridor").read_text()
IRRELEVANT_DECOY = gio.bundled_map_path("irrelevant_decoy").read_text()
LARGE = gio.bundled_map_path("large_20x20").read_text()


@pytest.fixture(scope="session")
def two_corridor_scenario():
    from dppvoi.sim_harness import build_scenario

    mdp, ivs = grid(TWO_CORRIDOR)
    return build_scenario(mdp, ivs, alpha=1.0)


# --- acceptance reporting: one PASS/FAIL line per criterion ----------------------------

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and rep.passed:
        return
    n, text = mark.args
    ok = rep.passed and _criteria.get(n, (True, text))[0]
    _criteria[n] = (ok, text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, text = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
