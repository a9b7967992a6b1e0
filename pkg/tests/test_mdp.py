import itertools
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

import oracles
from conftest import TABLES
from mapctl import errors
from mapctl.ldqbd import ThresholdPolicy, evaluate_policy
from mapctl.mapcore import poisson_map, preset
from mapctl.mdp import (PolicyTable, TruncatedMdp, optimize_thresholds, policy_iteration,
                        uniformize, value_iteration, verify_threshold_structure)
from mapctl.qbd import CostParameters
from mapctl.repro import table_system

# canonical optimal thresholds in composite-state order
OPTIMAL = {
    "3.2": (16, 10, 11), "3.3": (12, 19), "3.4": (5, 6, 6), "3.5": (11, 13, 12),
    "3.6": (7, 12, 11), "3.7": (44, 21), "3.8": (7, 6, 5), "3.9": (12, 9, 11),
}


def test_uniformize_mm1():
    sys = uniformize(poisson_map(0.8), poisson_map(1.0))
    assert_allclose(sys.alpha, 1.8)
    assert_allclose([sys.p1[0, 0], sys.r1[0, 0]], [0.8 / 1.8, 1 / 1.8])
    assert_allclose([sys.p0[0, 0], sys.r0[0, 0]], [1 - 0.8 / 1.8, 1 - 1 / 1.8])
    assert_allclose(sys.p1[0, 0], 0.4444, atol=1e-4)
    assert_allclose(sys.r1[0, 0], 0.5556, atol=1e-4)


def test_uniformize_map(pos_lo_system):
    assert_allclose(uniformize(preset("t31-pos-lo"), poisson_map(1.0)).alpha, 2.5340,
                    rtol=1e-12)
    sys = uniformize(*pos_lo_system)
    for p0, p1 in ((sys.p0, sys.p1), (sys.r0, sys.r1)):
        assert np.all(p0 >= 0) and np.all(p1 >= 0)
        assert_allclose((p0 + p1).sum(axis=1), 1.0, atol=1e-14)


def test_uniformize_single_phase():
    sys = uniformize(poisson_map(0.3), poisson_map(0.7))
    assert sys.m == 1
    assert_allclose(sys.p0, [[1 - 0.3 / 1.0]])


def test_truncated_mdp_is_stochastic(pos_lo_system, costs):
    mdp = TruncatedMdp(uniformize(*pos_lo_system), costs, -30, 30)
    for u in (np.zeros(mdp.n_states), np.ones(mdp.n_states)):
        t = mdp.transition(u)
        assert_allclose(np.asarray(t.sum(axis=1)).ravel(), 1.0, atol=1e-13)


def test_truncated_mdp_bounds(pos_lo_system, costs):
    with pytest.raises(ValueError):
        TruncatedMdp(uniformize(*pos_lo_system), costs, 0, 10)


def test_evaluate_matches_ldqbd(pos_lo_system, costs):
    sys = uniformize(*pos_lo_system)
    mdp = TruncatedMdp(sys, costs, -200, 40)
    u = PolicyTable.from_thresholds(ThresholdPolicy((16, 10, 11)), -200, 40).actions.ravel()
    _, g = mdp.evaluate(u)
    assert_allclose(g * sys.alpha, 13.408895627674003, rtol=1e-9)


def test_vi_mm1(mm1, costs):
    table, g = value_iteration(uniformize(*mm1), costs, (-150, 40))
    assert verify_threshold_structure(table) == ThresholdPolicy((8,))
    assert_allclose(g, 8.02653184, atol=1e-6)


def test_vi_symmetric_costs():
    # 1 - 0.5^(S+1) >= 1/2 first holds at S = 0
    table, _ = value_iteration(uniformize(poisson_map(0.5), poisson_map(1.0)),
                               CostParameters(1.0, 1.0), (-60, 20))
    assert verify_threshold_structure(table) == ThresholdPolicy((0,))
    assert np.all(table.actions[table.levels < 0] == 1)
    assert np.all(table.actions[table.levels >= 0] == 0)


def test_vi_warns_on_tight_bounds(pos_lo_system, costs):
    with pytest.warns(errors.BoundaryActiveWarning):
        value_iteration(uniformize(*pos_lo_system), costs, (-100, 8))


def test_vi_span_cap(mm1, costs):
    with pytest.raises(errors.ConvergenceError):
        value_iteration(uniformize(*mm1), costs, (-50, 20), max_iter=3)


def test_pi_mm1_any_start(mm1, costs):
    sys = uniformize(*mm1)
    for s0 in (0, 3, 20):
        assert policy_iteration(sys, costs, ThresholdPolicy((s0,)), (-150, 40)) == \
            ThresholdPolicy((8,))


def test_pi_from_single_threshold(pos_lo_system, costs):
    sys = uniformize(*pos_lo_system)
    pol = policy_iteration(sys, costs, ThresholdPolicy.single(11, 3), (-120, 60))
    assert pol == ThresholdPolicy(OPTIMAL["3.2"])
    assert pol.sorted_view == (16, 11, 10)
    assert_allclose(evaluate_policy(*pos_lo_system, pol, costs).total_cost, 13.4067, rtol=1e-2)


def test_pi_neg_lo_demand(costs):
    a, s = table_system("3.4")
    res = optimize_thresholds(a, s, costs)
    assert res.policy.sorted_view == (6, 6, 5)
    assert_allclose(evaluate_policy(a, s, res.policy, costs).total_cost, 6.1660, rtol=1e-2)


def test_structure_non_monotone():
    acts = np.zeros((8, 1), dtype=np.int8)
    acts[:3] = 1       # x = -3..-1
    acts[6] = 1        # produce at x = 3 after idling at x = 2
    with pytest.raises(errors.StructureViolation) as info:
        verify_threshold_structure(PolicyTable(acts, -3, 4))
    assert info.value.state == 0
    assert info.value.window == (0, 3)


def test_structure_idle_while_backlogged():
    acts = np.zeros((6, 1), dtype=np.int8)
    acts[:1] = 1
    with pytest.raises(errors.StructureViolation):
        verify_threshold_structure(PolicyTable(acts, -3, 2))


def test_structure_round_trip():
    pol = ThresholdPolicy((4, 0, 7))
    assert verify_threshold_structure(PolicyTable.from_thresholds(pol, -10, 12)) == pol


@pytest.mark.parametrize("table_id", TABLES)
def test_policy_and_value_iteration_agree(table_id, costs):
    a, s = table_system(table_id)
    pi_res = optimize_thresholds(a, s, costs, method="policy")
    vi_res = optimize_thresholds(a, s, costs, method="value")
    assert pi_res.policy == vi_res.policy == ThresholdPolicy(OPTIMAL[table_id])
    assert_allclose(pi_res.average_cost, vi_res.average_cost, rtol=1e-7)
    assert pi_res.lo_mass < 1e-8


@pytest.mark.parametrize("table_id", TABLES)
def test_optimum_is_coordinatewise_minimal(table_id, costs):
    # neighbours evaluated with the dense explicit-generator oracle
    a, s = table_system(table_id)
    z = OPTIMAL[table_id]
    tc = {}
    for j, step in itertools.product(range(len(z)), (-1, 0, 1)):
        cand = tuple(v + step * (i == j) for i, v in enumerate(z))
        if cand not in tc:
            tc[cand] = oracles.controlled_measures(a.d0, a.d1, s.d0, s.d1, cand, 1, 5,
                                                   x_lo=-700)["TC"]
    assert min(tc.values()) >= tc[z] - 1e-9


def test_two_phase_grid_search(costs):
    a, s = table_system("3.3")
    grid = {z: evaluate_policy(a, s, ThresholdPolicy(z), costs).total_cost
            for z in itertools.product(range(5, 30), repeat=2)}
    assert min(grid, key=grid.get) == OPTIMAL["3.3"]


def test_optimize_mm1(mm1, costs):
    res = optimize_thresholds(*mm1, costs)
    assert res.policy == ThresholdPolicy((8,))
    assert_allclose(res.average_cost, 8.02653184, rtol=1e-9)


def test_optimize_rejects_method(mm1, costs):
    with pytest.raises(ValueError):
        optimize_thresholds(*mm1, costs, method="simplex")


def test_optimize_widens_tight_bounds(pos_lo_system, costs):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = optimize_thresholds(*pos_lo_system, costs, bounds=(-5, 5))
    assert res.policy == ThresholdPolicy(OPTIMAL["3.2"])
    assert res.bounds[0] < -5 and res.bounds[1] > 5


def test_optimize_gives_up(pos_lo_system, costs):
    with pytest.raises(errors.ConvergenceError):
        optimize_thresholds(*pos_lo_system, costs, bounds=(-2, 2), max_doublings=1)
