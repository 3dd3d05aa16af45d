import json

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import TWO_CORRIDOR
from dppvoi import gridworld_io as gio
from dppvoi.errors import ConfigError, InvalidModelError, MapParseError
from dppvoi.graph_mdp import build_induced_mdp, hop_distance


def test_two_cell_map():
    spec = gio.parse_map("SG")
    assert (spec.width, spec.height) == (2, 1)
    assert spec.start == (0, 0) and spec.true_goal == (0, 1)
    mdp, ivs = gio.grid_to_mdp(spec)
    assert mdp.n_states == 2 and len(mdp.graph.edges) == 1
    assert ivs == []


def test_two_by_one_vertical():
    mdp, _ = gio.grid_to_mdp(gio.parse_map("S\nG\n"))
    assert mdp.n_states == 2 and len(mdp.graph.edges) == 1


def test_open_three_by_three_has_twelve_edges():
    mdp, _ = gio.grid_to_mdp(gio.parse_map("S..\n...\n..G\n"))
    assert mdp.n_states == 9
    assert len(mdp.graph.edges) == 12


def test_bundled_two_corridor_counts():
    spec = gio.parse_map(TWO_CORRIDOR)
    assert (spec.width, spec.height) == (10, 10)
    mdp, ivs = gio.grid_to_mdp(spec)
    assert len(ivs) == 2
    assert len(mdp.goals) == 2
    assert mdp.goals[0] == mdp.true_goal


def test_goal_and_intervention_order():
    spec = gio.parse_map("D.I.S\n..I.G\nD1..1\n")
    mdp, ivs = gio.grid_to_mdp(spec)
    assert mdp.goals == ((1, 4), (0, 0), (2, 0))
    assert [iv.label for iv in ivs] == ["I@0,2", "I@1,2", "I@2,1;2,4"]
    assert ivs[2].removed_states(mdp.graph) == ((2, 1), (2, 4))


def test_cutting_off_a_decoy_is_accepted():
    spec = gio.parse_map("D.I..S..G\n")
    mdp, ivs = gio.grid_to_mdp(spec)
    ind = build_induced_mdp(mdp, ivs[0])
    assert hop_distance(ind.graph, mdp.start)[(0, 0)] == float("inf")
    assert hop_distance(ind.graph, mdp.start)[mdp.true_goal] == 3


def test_passive_observer_map_has_no_interventions():
    _, ivs = gio.grid_to_mdp(gio.parse_map("S.D\n..G\n"))
    assert ivs == []


def test_disconnected_start_rejected():
    with pytest.raises(InvalidModelError):
        gio.grid_to_mdp(gio.parse_map("S.#..\n..#.G\n"))


@pytest.mark.parametrize("text,line,column", [
    ("S.\n.\n", 2, 2),          # ragged
    ("S.x\n..G\n", 1, 3),       # unknown character
    ("S.S\n..G\n", 1, 3),       # duplicate start
    ("S.G\nG..\n", 2, 1),       # duplicate goal
    ("S#.\n#..\n..G\n", 1, 1),  # start walled in
])
def test_parse_errors_carry_position(text, line, column):
    with pytest.raises(MapParseError) as exc:
        gio.parse_map(text)
    assert (exc.value.line, exc.value.column) == (line, column)
    assert f"line {line}, column {column}" in str(exc.value)


@pytest.mark.parametrize("text", ["", "....\n", "S...\n", "...G\n"])
def test_missing_start_or_goal(text):
    with pytest.raises(MapParseError):
        gio.parse_map(text)


def test_bad_edge_cost():
    with pytest.raises(MapParseError):
        gio.parse_map("SG", edge_cost=0.0)


def test_edge_cost_is_uniform():
    mdp, _ = gio.grid_to_mdp(gio.parse_map("S.G", edge_cost=2.5))
    assert set(mdp.action_cost.tolist()) == {2.5}


@pytest.mark.parametrize("name", gio.bundled_maps())
def test_bundled_maps_round_trip(name):
    text = gio.bundled_map_path(name).read_text()
    assert gio.parse_map(text).render() == text


@st.composite
def maps(draw):
    h = draw(st.integers(1, 6))
    w = draw(st.integers(2, 6))
    cells = draw(st.lists(st.sampled_from("..#DI12"), min_size=h * w, max_size=h * w))
    cells[0], cells[-1] = "S", "G"
    return "".join("".join(cells[r * w:(r + 1) * w]) + "\n" for r in range(h))


@given(maps())
@settings(max_examples=150, deadline=None)
def test_parse_render_round_trip(text):
    try:
        spec = gio.parse_map(text)
    except MapParseError:
        assume(False)   # a goal may be walled in; only valid maps must round-trip
    assert spec.render() == text
    assert gio.parse_map(spec.render()) == spec


@given(maps())
@settings(max_examples=150, deadline=None)
def test_adjacency_is_symmetric(text):
    try:
        mdp, _ = gio.grid_to_mdp(gio.parse_map(text))
    except (MapParseError, InvalidModelError):
        assume(False)
    pairs = set(mdp.action_index)
    assert pairs and all((t, s) in pairs for s, t in pairs)
    assert all(abs(s[0] - t[0]) + abs(s[1] - t[1]) == 1 for s, t in pairs)


def test_state_label():
    assert gio.state_label((3, 7)) == "3,7"
    assert gio.state_label("x") == "x"


# --- configuration -------------------------------------------------------------------


def minimal_config(**kw):
    doc = {"gamma": 0.9, "gamma_a_list": [0.5], "alpha": 1.0, "planners": ["cpp"],
           "t_int_list": [0, "inf"], "seeds": [0]}
    doc.update(kw)
    return doc


def test_parse_config_defaults():
    cfg = gio.parse_config(minimal_config())
    assert cfg.t_int_list == (0, float("inf"))
    assert cfg.prior == "uniform" and cfg.prior_for(["a", "b"]) is None
    assert cfg.cdw_threshold == 0.05 and cfg.episode_cap is None


def test_explicit_prior():
    cfg = gio.parse_config(minimal_config(prior=[0.25, 0.75]))
    assert cfg.prior_for(["G", "D"]) == {"G": 0.25, "D": 0.75}
    with pytest.raises(ConfigError):
        cfg.prior_for(["G"])


@pytest.mark.parametrize("bad", [
    {"gamma": 1.0},
    {"planners": ["greedy"]},
    {"t_int_list": [-1]},
    {"gamma_a_list": []},
    {"colour": "red"},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        gio.parse_config(minimal_config(**bad))


def test_missing_key():
    doc = minimal_config()
    del doc["seeds"]
    with pytest.raises(ConfigError, match="seeds"):
        gio.parse_config(doc)


def test_config_not_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError):
        gio.load_config(p)


@pytest.mark.parametrize("name", ["two_corridor", "irrelevant_decoy", "large_20x20"])
def test_bundled_configs_load(name):
    cfg = gio.load_config(gio.bundled_config_path(name))
    assert set(cfg.planners) <= set(gio.PLANNERS)


def test_schema_planner_enum_matches_code():
    assert tuple(gio.CONFIG_SCHEMA["properties"]["planners"]["items"]["enum"]) == gio.PLANNERS
    on_disk = json.loads((gio.bundled_config_path("x").parent.parent.parent / "schemas"
                          / "config.schema.json").read_text())
    assert on_disk == gio.CONFIG_SCHEMA
