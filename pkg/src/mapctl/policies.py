"""Benchmark production policies and the cost-deviation harness.

Every policy is evaluated on the true (correlated) system; the ``NA``
variants only choose their thresholds on the renewal version of it.

==========  ==============================  ===============================
name        thresholds from                 structure
==========  ==============================  ===============================
MTWA        correlated system               one threshold per phase
MTNA        renewal system                  one threshold per phase
STWA        correlated system               single base-stock level
STNA        renewal system                  single base-stock level
==========  ==============================  ===============================
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ldqbd import ThresholdPolicy, evaluate_policy
from .mapcore import MarkovianArrivalProcess, map_statistics, renewalize, scale_autocorrelation
from .mdp import optimize_thresholds
from .qbd import (CostParameters, PerformanceMeasures, optimal_base_stock,
                  solve_base_stock_system)

POLICY_NAMES = ("MTWA", "MTNA", "STWA", "STNA")
DELTA_KEYS = ("TC", "EX-", "EX+", "P0")


@dataclass(frozen=True)
class BenchmarkResult:
    policy_name: str
    thresholds: ThresholdPolicy
    measures: PerformanceMeasures
    deltas: dict = field(default_factory=dict)

    def with_reference(self, ref: "BenchmarkResult") -> "BenchmarkResult":
        """Percentage deviations of every measure from ``ref``."""
        mine, base = self.measures.as_dict(), ref.measures.as_dict()
        deltas = {k: 100.0 * (mine[k] - base[k]) / base[k] if base[k] else 0.0
                  for k in DELTA_KEYS}
        return BenchmarkResult(self.policy_name, self.thresholds, self.measures, deltas)

    def threshold_label(self) -> str:
        z = self.thresholds
        return str(z.z_max) if self.policy_name.startswith("ST") else str(z)


def _renewal_pair(arrival, service):
    return renewalize(arrival), renewalize(service)


def _single_threshold(arrival, service, costs) -> int:
    return optimal_base_stock(solve_base_stock_system(arrival, service), costs)


def make_mtwa(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
              costs: CostParameters) -> BenchmarkResult:
    policy = optimize_thresholds(arrival, service, costs).policy
    return BenchmarkResult("MTWA", policy, evaluate_policy(arrival, service, policy, costs))


def make_mtna(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
              costs: CostParameters) -> BenchmarkResult:
    policy = optimize_thresholds(*_renewal_pair(arrival, service), costs).policy
    return BenchmarkResult("MTNA", policy, evaluate_policy(arrival, service, policy, costs))


def make_stwa(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
              costs: CostParameters) -> BenchmarkResult:
    s = _single_threshold(arrival, service, costs)
    policy = ThresholdPolicy.single(s, arrival.m * service.m)
    return BenchmarkResult("STWA", policy, evaluate_policy(arrival, service, policy, costs))


def make_stna(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
              costs: CostParameters) -> BenchmarkResult:
    s = _single_threshold(*_renewal_pair(arrival, service), costs)
    policy = ThresholdPolicy.single(s, arrival.m * service.m)
    return BenchmarkResult("STNA", policy, evaluate_policy(arrival, service, policy, costs))


_MAKERS = {"MTWA": make_mtwa, "MTNA": make_mtna, "STWA": make_stwa, "STNA": make_stna}


def compare_policies(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
                     costs: CostParameters) -> list[BenchmarkResult]:
    """The four policies in table order, with deltas relative to MTWA."""
    results = [_MAKERS[name](arrival, service, costs) for name in POLICY_NAMES]
    ref = results[0]
    return [r.with_reference(ref) for r in results]


def single_threshold_search(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
                            costs: CostParameters, s_max: int | None = None) -> int:
    """Base-stock level minimising TC by direct search (cross-check of the ratio rule)."""
    m = arrival.m * service.m
    s_star = _single_threshold(arrival, service, costs)
    s_max = 3 * (s_star + 1) if s_max is None else s_max
    costs_by_s = [evaluate_policy(arrival, service, ThresholdPolicy.single(s, m), costs).total_cost
                  for s in range(s_max + 1)]
    return int(np.argmin(costs_by_s))


# ---------------------------------------------------------------------------
# autocorrelation sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    theta: float
    rho1_arrival: float
    rho1_service: float
    results: tuple[BenchmarkResult, ...]

    def gap(self, name: str) -> float:
        return next(r.deltas["TC"] for r in self.results if r.policy_name == name)


def _sweep_point(args) -> SweepPoint:
    arrival, service, costs, theta, scale_arrival, scale_service, names = args
    a = scale_autocorrelation(arrival, theta) if scale_arrival else arrival
    s = scale_autocorrelation(service, theta) if scale_service else service
    results = [_MAKERS[n](a, s, costs) for n in names]
    ref = results[0]
    return SweepPoint(theta, map_statistics(a, 2, 1).rho[0], map_statistics(s, 2, 1).rho[0],
                      tuple(r.with_reference(ref) for r in results))


def theta_grid(steps: int = 9) -> list[float]:
    """``steps`` equal increments from 0 to 1 (``steps + 1`` points)."""
    return [k / steps for k in range(steps + 1)]


def theta_sweep(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
                costs: CostParameters, thetas=None, scale_arrival: bool = True,
                scale_service: bool = False, names=("MTWA", "STWA"),
                jobs: int = 1) -> list[SweepPoint]:
    """Scale the lag-1 autocorrelation by each ``theta`` and rerun the comparison.

    ``names[0]`` is the reference for the deltas; ``jobs > 1`` spreads the
    grid points over worker processes.
    """
    thetas = theta_grid() if thetas is None else list(thetas)
    if any(not 0.0 <= t <= 1.0 for t in thetas):
        raise ValueError(f"theta values must lie in [0, 1], got {thetas}")
    tasks = [(arrival, service, costs, t, scale_arrival, scale_service, tuple(names))
             for t in thetas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("policy", "Z", "TC", "dTC", "EX-", "dEX-", "EX+", "dEX+", "P0", "dP0")


def result_row(r: BenchmarkResult) -> dict:
    m = r.measures.as_dict()
    row = {"policy": r.policy_name, "Z": r.threshold_label()}
    for key in DELTA_KEYS:
        row[key] = f"{m[key]:.6f}"
        row["d" + key] = f"{r.deltas[key]:.4f}" if key in r.deltas else ""
    return row


def results_to_csv(results, extra: dict | None = None) -> str:
    extra = extra or {}
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(extra) + list(CSV_COLUMNS),
                            lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow({**extra, **result_row(r)})
    return buf.getvalue()
