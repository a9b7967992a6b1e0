import csv
import io

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mapctl import _kernels, errors
from mapctl.ldqbd import ThresholdPolicy, evaluate_policy
from mapctl.mapcore import map_statistics, poisson_map, preset
from mapctl.qbd import CostParameters
from mapctl.repro import table_system
from mapctl.sim import (SimulationConfig, outcome_table, sample_map_path, simulate_system,
                        trace_to_csv)

needs_cython = pytest.mark.skipif("cython" not in _kernels.available(),
                                  reason="compiled kernels not built")


def _batch_se(x, stat, batches=50):
    vals = [stat(b) for b in np.array_split(x, batches)]
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(batches))


def _lag1(x):
    d = x - x.mean()
    return float(d[:-1] @ d[1:] / (d @ d))


def test_outcome_table_rows():
    mp = preset("t31-neg-hi")
    cum, rate, last = outcome_table(mp)
    assert_allclose(rate, -np.diag(mp.d0))
    assert_allclose(cum[:, -1], 1.0)
    assert np.all(np.diff(cum, axis=1) >= 0)
    for i in range(mp.m):
        assert cum[i, last[i]] == 1.0


def test_poisson_path_mean():
    x = sample_map_path(poisson_map(2.0), 10 ** 6, seed=3)
    assert abs(x.mean() - 0.5) < 3 * 0.5 / 10 ** 3


def test_pos_hi_path_statistics():
    mp = preset("t31-pos-hi")
    st = map_statistics(mp)
    x = sample_map_path(mp, 10 ** 6, seed=11)
    rho1, se = _batch_se(x, _lag1)
    assert abs(rho1 - st.rho[0]) < 3 * se
    assert abs(rho1 - 0.15) < 3 * se + 5e-3
    mean, se_mean = _batch_se(x, np.mean)
    assert abs(mean - st.mean) < 3 * se_mean


def test_path_rejects_empty():
    with pytest.raises(ValueError):
        sample_map_path(poisson_map(1.0), 0, seed=1)


def test_path_is_reproducible():
    mp = preset("t31-neg-lo")
    assert_array_equal(sample_map_path(mp, 1000, seed=5), sample_map_path(mp, 1000, seed=5))
    assert not np.array_equal(sample_map_path(mp, 1000, seed=5),
                              sample_map_path(mp, 1000, seed=6))


@needs_cython
@pytest.mark.parametrize("name", ["t31-pos-lo", "t31-neg-hi"])
def test_backends_identical_paths(name):
    mp = preset(name)
    assert_array_equal(sample_map_path(mp, 20000, 9, backend="cython"),
                       sample_map_path(mp, 20000, 9, backend="python"))


@needs_cython
@pytest.mark.parametrize("table_id, z", [("3.2", (16, 10, 11)), ("3.9", (12, 9, 11))])
def test_backends_identical_simulation(table_id, z, costs):
    a, s = table_system(table_id)
    cfg = SimulationConfig(horizon=40000, warmup=4000, seed=21)
    est = [simulate_system(a, s, ThresholdPolicy(z), costs, cfg, trace=True, backend=b)
           for b in ("cython", "python")]
    assert est[0].total_cost == est[1].total_cost
    assert est[0].hw_cost == est[1].hw_cost
    assert_array_equal(est[0].trace, est[1].trace)


def test_mm1_ci_covers(mm1, costs):
    cfg = SimulationConfig(horizon=2_200_000, seed=7)
    est = simulate_system(*mm1, ThresholdPolicy((8,)), costs, cfg)
    assert est.covers(8.02653184)
    assert est.covers(4.67108864, "EX+")
    assert est.covers(0.67108864, "EX-")
    assert est.covers(0.134217728, "P0")
    assert est.batches == 32 and est.events == 2_200_000 - 220_000


def test_pos_lo_demand_ci_covers(pos_lo_system, costs):
    pol = ThresholdPolicy((16, 10, 11))
    exact = evaluate_policy(*pos_lo_system, pol, costs).total_cost
    est = simulate_system(*pos_lo_system, pol, costs, SimulationConfig(horizon=3_300_000, seed=1))
    assert est.covers(exact)
    assert est.covers(13.4067)


def test_jobs_do_not_change_results(mm1, costs):
    cfg = SimulationConfig(horizon=50000, replications=3, seed=2)
    one = simulate_system(*mm1, ThresholdPolicy((8,)), costs, cfg, jobs=1)
    two = simulate_system(*mm1, ThresholdPolicy((8,)), costs, cfg, jobs=2)
    assert one == two
    assert one.batches == 96


def test_unstable_system_rejected(costs):
    with pytest.raises(errors.SimulationInstabilityError):
        simulate_system(poisson_map(1.2), poisson_map(1.0), ThresholdPolicy((3,)), costs)


def test_guard_trips(costs):
    cfg = SimulationConfig(horizon=200000, seed=4, guard=200)
    with pytest.raises(errors.SimulationInstabilityError, match="guard"):
        simulate_system(poisson_map(1.5), poisson_map(1.0), ThresholdPolicy((3,)), costs,
                        cfg, require_stable=False)


def test_zero_thresholds_backlog_only(mm1, costs):
    est = simulate_system(*mm1, ThresholdPolicy((0,)), costs,
                          SimulationConfig(horizon=200000, seed=8))
    assert est.e_inventory == 0.0
    assert_allclose(est.total_cost, 5 * est.e_backlog)


def test_policy_size_checked(pos_lo_system, costs):
    with pytest.raises(errors.ConfigError):
        simulate_system(*pos_lo_system, ThresholdPolicy((1, 2)), costs)


@pytest.mark.parametrize("kwargs", [
    {"horizon": 100, "warmup": 100},
    {"replications": 0},
    {"batch_count": 2},
    {"horizon": 40, "warmup": 10},
    {"seed": -1},
    {"guard": 0},
])
def test_config_validation(kwargs):
    with pytest.raises(errors.ConfigError):
        SimulationConfig(**kwargs)


def test_trace_csv(mm1, costs):
    est = simulate_system(*mm1, ThresholdPolicy((8,)), costs,
                          SimulationConfig(horizon=2000, warmup=100, seed=3), trace=True)
    assert est.trace.shape == (1900, 5)
    rows = list(csv.DictReader(io.StringIO(trace_to_csv(est.trace))))
    assert {r["event"] for r in rows} <= {"arrival", "completion"}
    times = [float(r["time"]) for r in rows]
    assert times == sorted(times)
    inv = [int(r["inventory"]) for r in rows]
    assert max(inv) <= 8
    # each arrival lowers inventory by one, each completion raises it by one
    for prev, cur in zip(rows, rows[1:]):
        step = 1 if cur["event"] == "completion" else -1
        assert int(cur["inventory"]) - int(prev["inventory"]) == step


def test_interval_names(mm1, costs):
    est = simulate_system(*mm1, ThresholdPolicy((8,)), costs,
                          SimulationConfig(horizon=20000, seed=3))
    lo, hi = est.interval("TC")
    assert lo < est.total_cost < hi
    assert_allclose(est.total_cost, est.e_inventory + 5 * est.e_backlog)
    assert est.trace is None
    cost2 = CostParameters(2.0, 1.0)
    est2 = simulate_system(*mm1, ThresholdPolicy((8,)), cost2,
                           SimulationConfig(horizon=20000, seed=3))
    assert_allclose(est2.total_cost, 2 * est.e_inventory + est.e_backlog)
