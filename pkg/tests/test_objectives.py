import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import TWO_CORRIDOR, grid, line_mdp
from dppvoi.errors import EmptyInterventionSetError, InvalidModelError
from dppvoi.graph_mdp import hop_array
from dppvoi.objectives import (ambiguity_cost, build_cost_field, discount_field, exaggeration_cost,
                               expected_damage, feasibility_mask, observer_choice, vob_agent_cost,
                               vob_observer_cost)
from dppvoi.observer import BeliefTable, build_belief_table
from dppvoi.softmax_solver import CostMatrix, compute_cost_matrix


def beliefs(rows, goals=("G", "D")):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    states = tuple(f"s{i}" for i in range(rows.shape[0]))
    prior = rows[0].copy()
    return BeliefTable(tuple(goals), prior, rows, states, {s: i for i, s in enumerate(states)})


def costs_from_damage(damage, goals=("G", "D"), base=None):
    damage = np.asarray(damage, dtype=float)
    base = np.zeros(damage.shape[1]) if base is None else np.asarray(base, dtype=float)
    labels = tuple(f"i{j}" for j in range(damage.shape[0]))
    return CostMatrix(-damage, -base, tuple(goals), labels)


# --- classical costs ----------------------------------------------------------------


def test_exaggeration_examples():
    b = beliefs([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
    assert exaggeration_cost(b, "G").tolist() == [0.0, 2.0, 1.0]


def test_exaggeration_needs_a_decoy():
    with pytest.raises(InvalidModelError):
        exaggeration_cost(beliefs([[1.0]], goals=("G",)), "G")


def test_ambiguity_examples():
    b = beliefs([[0.5, 0.5], [1.0, 0.0]])
    assert ambiguity_cost(b, ()).tolist() == [0.0, 2.0]


def test_ambiguity_zero_at_goals():
    mdp = line_mdp(5, start=2, goals=[4, 0])
    cm = compute_cost_matrix(mdp, [])
    bt = build_belief_table(cm.base_values, start=mdp.start)
    raw = ambiguity_cost(bt, mdp.goals)
    assert raw[mdp.index[4]] == 0.0 and raw[mdp.index[0]] == 0.0
    assert raw[mdp.index[3]] > 0.0


# --- value-of-belief costs ----------------------------------------------------------


def test_vob_observer_single_intervention_is_expectation():
    b = beliefs([[0.3, 0.7], [0.9, 0.1]])
    cm = costs_from_damage([[2.0, 5.0]])
    assert vob_observer_cost(b, cm) == pytest.approx([0.3 * 2 + 0.7 * 5, 0.9 * 2 + 0.1 * 5])


def test_vob_observer_degenerate_belief_takes_column_max():
    b = beliefs([[0.0, 1.0]])
    cm = costs_from_damage([[9.0, 1.0], [0.0, 3.0]])
    assert vob_observer_cost(b, cm)[0] == 3.0


def test_vob_observer_two_by_two_example():
    b = beliefs([[0.5, 0.5]])
    cm = costs_from_damage([[4.0, 0.0], [1.0, 1.0]])
    assert vob_observer_cost(b, cm)[0] == 2.0
    assert observer_choice(expected_damage(b, cm))[0] == 0


def test_vob_agent_single_intervention_is_constant():
    b = beliefs([[0.3, 0.7], [0.9, 0.1]])
    cm = costs_from_damage([[2.0, 5.0]])
    raw, chosen = vob_agent_cost(b, cm, "G")
    assert raw.tolist() == [2.0, 2.0]
    assert chosen.tolist() == [0, 0]


def test_vob_agent_decoy_belief_picks_harmless_cut():
    # i0 hurts only G, i1 hurts only D; the observer certain of D cuts i1
    b = beliefs([[0.0, 1.0]])
    cm = costs_from_damage([[3.0, 0.0], [0.0, 4.0]])
    raw, chosen = vob_agent_cost(b, cm, "G")
    assert chosen[0] == 1
    assert raw[0] == 0.0


def test_vob_agent_true_goal_belief_takes_max():
    b = beliefs([[1.0, 0.0]])
    cm = costs_from_damage([[3.0, 0.0], [5.0, 4.0]])
    raw, _ = vob_agent_cost(b, cm, "G")
    assert raw[0] == 5.0


def test_ties_go_to_lowest_index():
    assert observer_choice(np.array([[1.0, 1.0, 0.5]]))[0] == 0
    assert observer_choice(np.array([[1.0, 1.0 + 1e-14, 0.5]]))[0] == 0


def test_infeasible_everywhere_charges_unintervened_cost():
    b = beliefs([[0.5, 0.5]])
    cm = costs_from_damage([[4.0, 0.0]], base=[1.0, 3.0])
    feasible = np.array([[False]])
    assert vob_observer_cost(b, cm, feasible)[0] == pytest.approx(2.0)
    raw, chosen = vob_agent_cost(b, cm, "G", feasible)
    assert chosen[0] == -1 and raw[0] == 1.0


def test_vob_needs_interventions():
    b = beliefs([[0.5, 0.5]])
    cm = CostMatrix(np.zeros((0, 2)), np.zeros(2), ("G", "D"), ())
    with pytest.raises(EmptyInterventionSetError):
        vob_observer_cost(b, cm)


# --- discounting and assembly ------------------------------------------------------------


def test_discount_field_examples():
    mdp = line_mdp(5)
    hops = hop_array(mdp)
    raw = np.array([2.0, 2.0, 2.0, 2.0, 0.0])
    g = discount_field(raw, hops, 0.5, mdp)
    a = mdp.action_index[(3, 4)]
    assert g[a] == 0.25
    assert np.array_equal(discount_field(raw, hops, 1.0, mdp), raw[mdp.act_src])
    assert not discount_field(np.zeros(5), hops, 0.3, mdp).any()


def test_discount_field_zero_where_unreachable():
    mdp = line_mdp(3)
    hops = np.array([0.0, 1.0, np.inf])
    g = discount_field(np.ones(3), hops, 0.9, mdp)
    assert g[mdp.action_index[(2, 1)]] == 0.0


def test_discount_field_rejects_bad_gamma():
    mdp = line_mdp(3)
    with pytest.raises(InvalidModelError):
        discount_field(np.ones(3), hop_array(mdp), 0.0, mdp)


def test_feasibility_mask_blocks_own_cell():
    mdp, ivs = grid(TWO_CORRIDOR)
    mask = feasibility_mask(mdp, ivs)
    cell = ivs[0].removed_states(mdp.graph)[0]
    assert not mask[mdp.index[cell], 0]
    assert mask[mdp.index[cell], 1]
    assert mask.sum() == mask.size - len(ivs)


@pytest.mark.parametrize("kind", ["exaggeration", "ambiguity", "vob_observer", "vob_agent"])
def test_field_is_state_only(kind):
    mdp, ivs = grid(TWO_CORRIDOR)
    cm = compute_cost_matrix(mdp, ivs)
    bt = build_belief_table(cm.base_values, start=mdp.start)
    fld = build_cost_field(kind, mdp, bt, 0.7, cm, ivs)
    expected = np.power(0.7, fld.hops) * fld.raw
    assert np.allclose(fld.discounted, expected[mdp.act_src], rtol=0, atol=1e-15)
    if kind.startswith("vob"):
        assert fld.chosen is not None


def test_unknown_kind():
    mdp, _ = grid(TWO_CORRIDOR)
    with pytest.raises(InvalidModelError):
        build_cost_field("nope", mdp, None, 0.5)


# --- properties ------------------------------------------------------------------------


def simplex_rows(n_goals):
    return arrays(float, (5, n_goals), elements=st.floats(0.001, 1.0)).map(
        lambda a: a / a.sum(axis=1, keepdims=True))


damage_mats = arrays(float, (3, 3), elements=st.floats(0, 20))


@given(simplex_rows(3))
@settings(max_examples=80, deadline=None)
def test_classical_ranges(rows):
    b = beliefs(rows, goals=("G", "D1", "D2"))
    ex = exaggeration_cost(b, "G")
    am = ambiguity_cost(b, ())
    assert ((ex >= 0) & (ex <= 2)).all()
    assert ((am >= 0) & (am <= 3 * 2 + 1e-12)).all()


@given(simplex_rows(3), damage_mats)
@settings(max_examples=80, deadline=None)
def test_vob_observer_dominates_each_intervention(rows, dmg):
    b = beliefs(rows, goals=("G", "D1", "D2"))
    cm = costs_from_damage(dmg, goals=("G", "D1", "D2"))
    raw = vob_observer_cost(b, cm)
    assert (raw[:, None] >= rows @ dmg.T - 1e-12).all()


@given(simplex_rows(3), damage_mats, st.floats(0, 1))
@settings(max_examples=80, deadline=None)
def test_vob_observer_is_convex_in_belief(rows, dmg, theta):
    cm = costs_from_damage(dmg, goals=("G", "D1", "D2"))
    b1, b2 = rows[:1], rows[1:2]
    mix = theta * b1 + (1 - theta) * b2

    def f(r):
        return vob_observer_cost(beliefs(r, goals=("G", "D1", "D2")), cm)[0]

    assert f(mix) <= theta * f(b1) + (1 - theta) * f(b2) + 1e-9


@given(simplex_rows(3), damage_mats, st.floats(-5, 5))
@settings(max_examples=80, deadline=None)
def test_vob_agent_choice_invariant_to_constant_shift(rows, dmg, c):
    b = beliefs(rows, goals=("G", "D1", "D2"))
    e = expected_damage(b, costs_from_damage(dmg, goals=("G", "D1", "D2")))
    shifted = expected_damage(b, costs_from_damage(dmg + c, goals=("G", "D1", "D2")))
    gap = np.sort(e, axis=1)
    clear = (gap[:, -1] - gap[:, -2]) > 1e-9
    assert np.array_equal(observer_choice(e)[clear], observer_choice(shifted)[clear])
