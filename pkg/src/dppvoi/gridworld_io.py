"""Gridworld maps and experiment configuration files.

Map format: UTF-8 text, one row per line, every row the same width::

    .  free cell              #  obstacle
    S  start                  G  true goal
    D  decoy goal             I  single-cell intervention point
    1-9  grouped intervention: all cells sharing a digit are removed together

States are ``(row, col)`` tuples in row-major order. Candidate goals are the
true goal followed by decoys in row-major order. Interventions are the ``I``
cells in row-major order, then digit groups in ascending order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from jsonschema import Draft202012Validator

from .errors import ConfigError, InvalidModelError, MapParseError
from .graph_mdp import Intervention, Mdp, WeightedGraph, hop_distance

CELLS = set(".#SGDI123456789")
FREE = set(".SGDI123456789")


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    rows: tuple           # tuple of strings
    edge_cost: float = 1.0

    def cell(self, r, c) -> str:
        return self.rows[r][c]

    def find(self, ch) -> list:
        return [(r, c) for r, row in enumerate(self.rows) for c, x in enumerate(row) if x == ch]

    @property
    def start(self):
        return self.find("S")[0]

    @property
    def true_goal(self):
        return self.find("G")[0]

    @property
    def decoys(self) -> list:
        return self.find("D")

    def intervention_cells(self) -> list:
        """Cell groups, one per intervention, in canonical order."""
        groups = [[rc] for rc in self.find("I")]
        for d in "123456789":
            cells = self.find(d)
            if cells:
                groups.append(cells)
        return groups

    def render(self) -> str:
        return "\n".join(self.rows) + "\n"


def parse_map(text: str, edge_cost: float = 1.0) -> GridSpec:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MapParseError("map is empty")
    width = len(lines[0])
    if width == 0:
        raise MapParseError("first row is empty", 1, 1)
    seen = {}
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MapParseError(f"row has width {len(line)}, expected {width}", r + 1, min(len(line), width) + 1)
        for c, ch in enumerate(line):
            if ch not in CELLS:
                raise MapParseError(f"unknown cell character {ch!r}", r + 1, c + 1)
            if ch in "SG":
                if ch in seen:
                    raise MapParseError(f"duplicate {ch!r} (first at line {seen[ch][0] + 1}, "
                                        f"column {seen[ch][1] + 1})", r + 1, c + 1)
                seen[ch] = (r, c)
    for ch in "SG":
        if ch not in seen:
            raise MapParseError(f"map has no {ch!r} cell")
    if not edge_cost > 0:
        raise MapParseError(f"edge cost must be positive, got {edge_cost}")
    spec = GridSpec(width, len(lines), tuple(lines), float(edge_cost))
    for rc in [spec.start, spec.true_goal, *spec.decoys]:
        if not any(spec.cell(*n) in FREE for n in _neighbors(spec, *rc)):
            raise MapParseError(f"cell {spec.cell(*rc)!r} has no free neighbor", rc[0] + 1, rc[1] + 1)
    return spec


def load_map(path) -> GridSpec:
    return parse_map(Path(path).read_text(encoding="utf-8"))


def _neighbors(spec: GridSpec, r, c):
    for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
        rr, cc = r + dr, c + dc
        if 0 <= rr < spec.height and 0 <= cc < spec.width:
            yield rr, cc


def grid_graph(spec: GridSpec) -> WeightedGraph:
    states = [(r, c) for r in range(spec.height) for c in range(spec.width) if spec.cell(r, c) in FREE]
    free = set(states)
    edges = []
    for r, c in states:
        for n in ((r, c + 1), (r + 1, c)):
            if n in free:
                edges.append(((r, c), n))
    return WeightedGraph(states, edges, default_cost=spec.edge_cost)


def grid_to_mdp(spec: GridSpec, gamma: float = 0.95, *, slip: float = 0.0):
    """Base MDP plus one obstacle intervention per intervention point (or digit group)."""
    graph = grid_graph(spec)
    start, goal = spec.start, spec.true_goal
    if hop_distance(graph, start)[goal] == float("inf"):
        raise InvalidModelError("start is disconnected from the true goal")
    mdp = Mdp(graph, start, [goal, *spec.decoys], goal, gamma, slip=slip)
    interventions = []
    for cells in spec.intervention_cells():
        label = "I@" + ";".join(f"{r},{c}" for r, c in cells)
        interventions.append(Intervention.removing(graph, cells, label))
    return mdp, interventions


def state_label(s) -> str:
    if isinstance(s, tuple):
        return ",".join(map(str, s))
    return str(s)


# --- experiment configuration ------------------------------------------------

PLANNERS = ("exaggeration", "ambiguity", "vob_o", "vob_a", "cpp")

def load_schema(name: str) -> dict:
    """A JSON schema shipped under ``dppvoi/schemas``."""
    text = (resources.files("dppvoi") / "schemas" / f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


CONFIG_SCHEMA = load_schema("config")


@dataclass(frozen=True)
class ExperimentConfig:
    gamma: float = 0.95
    gamma_a_list: tuple = (0.5,)
    alpha: float = 1.0
    prior: object = "uniform"
    planners: tuple = PLANNERS
    t_int_list: tuple = (0,)
    seeds: tuple = (0,)
    episode_cap: int | None = None
    edge_cost: float = 1.0
    slip: float = 0.0
    cdw_threshold: float = 0.05
    tol: float = 1e-9
    extra: dict = field(default_factory=dict, repr=False)

    def prior_for(self, goals) -> dict | None:
        if self.prior == "uniform":
            return None
        if len(self.prior) != len(goals):
            raise ConfigError(f"explicit prior has {len(self.prior)} entries for {len(goals)} goals")
        return dict(zip(goals, map(float, self.prior)))


def parse_config(doc: dict) -> ExperimentConfig:
    errors = sorted(Draft202012Validator(CONFIG_SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(map(str, e.path)) or "<root>"
        raise ConfigError(f"config {where}: {e.message}")
    t_ints = tuple(float("inf") if t == "inf" else int(t) for t in doc["t_int_list"])
    return ExperimentConfig(
        gamma=float(doc["gamma"]),
        gamma_a_list=tuple(float(x) for x in doc["gamma_a_list"]),
        alpha=float(doc["alpha"]),
        prior=doc.get("prior", "uniform"),
        planners=tuple(doc["planners"]),
        t_int_list=t_ints,
        seeds=tuple(int(s) for s in doc["seeds"]),
        episode_cap=doc.get("episode_cap"),
        edge_cost=float(doc.get("edge_cost", 1.0)),
        slip=float(doc.get("slip", 0.0)),
        cdw_threshold=float(doc.get("cdw_threshold", 0.05)),
        tol=float(doc.get("tol", 1e-9)),
    )


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc)


def bundled_map_path(name: str) -> Path:
    return Path(str(resources.files("dppvoi") / "data" / "maps" / f"{name}.txt"))


def bundled_config_path(name: str) -> Path:
    return Path(str(resources.files("dppvoi") / "data" / "configs" / f"{name}.json"))


def bundled_maps() -> list:
    return sorted(p.stem for p in (resources.files("dppvoi") / "data" / "maps").iterdir()
                  if p.name.endswith(".txt"))
