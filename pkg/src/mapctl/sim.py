"""Discrete-event simulation of MAP-driven processes and the controlled inventory.

The controlled system is simulated as the continuous-time chain on
``(x, ja, js)``: exponential holding times, one transition per event.  While
production is idle the service phase is frozen.  Estimates are time averages
with batch-means 99% confidence intervals.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .errors import ConfigError, SimulationInstabilityError
from .ldqbd import ThresholdPolicy
from .mapcore import MarkovianArrivalProcess, stationary_phase_vector
from .qbd import CostParameters, check_stability

CHUNK_EVENTS = 1 << 16
EVENT_NAMES = {0.0: "phase", 1.0: "arrival", 2.0: "service_phase", 3.0: "completion"}


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def outcome_table(mp: MarkovianArrivalProcess) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cumulative jump probabilities over ``2m`` outcomes, total rates, last live outcome.

    Outcome ``o < m`` is a silent move to phase ``o``; ``o >= m`` emits an
    event and moves to phase ``o - m``.
    """
    m = mp.m
    rate = -np.diag(mp.d0).copy()
    probs = np.hstack([mp.d0, mp.d1]) / rate[:, None]
    probs[np.arange(m), np.arange(m)] = 0.0
    cum = np.cumsum(probs, axis=1)
    last = np.array([np.flatnonzero(row > 0)[-1] for row in probs], dtype=np.intp)
    cum[np.arange(m), last] = 1.0
    cum[cum > 1.0] = 1.0
    return np.ascontiguousarray(cum), rate, last


def sample_map_path(mp: MarkovianArrivalProcess, n: int, seed: int,
                    backend: str | None = None) -> np.ndarray:
    """``n`` consecutive inter-event times, starting from the post-event phase law."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    kern = _kernels.get(backend)
    rng = _rng(seed)
    cum, rate, last = outcome_table(mp)
    beta = stationary_phase_vector(mp)
    start = int(np.searchsorted(np.cumsum(beta), rng.random(), side="right"))
    state = np.array([min(start, mp.m - 1)], dtype=np.int64)
    elapsed = np.zeros(1)
    out = np.empty(n)
    filled = 0
    while filled < n:
        u = rng.random(2 * CHUNK_EVENTS)
        _, filled = kern.map_path(cum, rate, last, state, elapsed, u, out, filled)
    return out


@dataclass(frozen=True)
class SimulationConfig:
    horizon: int = 1_100_000
    warmup: int | None = None
    replications: int = 1
    seed: int = 0
    batch_count: int = 32
    guard: int = 1_000_000

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.horizon // 10)
        if not self.horizon > self.warmup >= 0:
            raise ConfigError(f"need horizon > warmup >= 0, got {self.horizon}, {self.warmup}")
        if self.replications < 1:
            raise ConfigError(f"replications must be at least 1, got {self.replications}")
        if self.batch_count < 10:
            raise ConfigError(f"batch_count must be at least 10, got {self.batch_count}")
        if self.horizon - self.warmup < self.batch_count:
            raise ConfigError("fewer post-warmup events than batches")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.guard < 1:
            raise ConfigError(f"guard must be positive, got {self.guard}")

    @property
    def events(self) -> int:
        return self.horizon - self.warmup


@dataclass(frozen=True)
class SimulationEstimate:
    e_inventory: float
    e_backlog: float
    p_stockout: float
    total_cost: float
    hw_inventory: float
    hw_backlog: float
    hw_stockout: float
    hw_cost: float
    events: int
    batches: int
    trace: np.ndarray | None = field(default=None, repr=False, compare=False)

    def interval(self, name: str = "TC") -> tuple[float, float]:
        point, hw = {"TC": (self.total_cost, self.hw_cost),
                     "EX+": (self.e_inventory, self.hw_inventory),
                     "EX-": (self.e_backlog, self.hw_backlog),
                     "P0": (self.p_stockout, self.hw_stockout)}[name]
        return point - hw, point + hw

    def covers(self, value: float, name: str = "TC") -> bool:
        lo, hi = self.interval(name)
        return lo <= value <= hi


def _batch_edges(events: int, batches: int) -> np.ndarray:
    return np.linspace(0, events, batches + 1).round().astype(np.int64)


def _run_replication(args):
    (arrival, service, thresholds, cfg, seed_seq, want_trace, backend) = args
    kern = _kernels.get(backend)
    rng = _rng(seed_seq)
    cum_a, rate_a, last_a = outcome_table(arrival)
    cum_s, rate_s, last_s = outcome_table(service)
    z = np.asarray(thresholds, dtype=np.int64)
    ja0 = int(np.searchsorted(np.cumsum(stationary_phase_vector(arrival)), rng.random(),
                              side="right"))
    js0 = int(np.searchsorted(np.cumsum(stationary_phase_vector(service)), rng.random(),
                              side="right"))
    state = np.array([int(z.max()), min(ja0, arrival.m - 1), min(js0, service.m - 1)],
                     dtype=np.int64)
    acc = np.zeros(5)
    no_trace = np.empty((0, 5))
    traces = []

    def advance(count, keep):
        done = 0
        while done < count:
            step = min(CHUNK_EVENTS, count - done)
            u = rng.random(2 * step)
            tr = np.empty((step, 5)) if want_trace and keep else no_trace
            res = kern.run_inventory(cum_a, rate_a, last_a, cum_s, rate_s, last_s, z,
                                     state, u, acc, tr, cfg.guard)
            if res < 0:
                raise SimulationInstabilityError(
                    f"backlog passed the guard of {cfg.guard} units after "
                    f"{done - res} events; the system is not stable under this policy")
            if tr.shape[0]:
                traces.append(tr)
            done += step

    advance(cfg.warmup, keep=False)
    edges = _batch_edges(cfg.events, cfg.batch_count)
    sums = np.zeros((cfg.batch_count, 4))
    for k in range(cfg.batch_count):
        acc[:4] = 0.0
        advance(int(edges[k + 1] - edges[k]), keep=True)
        sums[k] = acc[:4]
    trace = np.vstack(traces) if traces else None
    return sums, trace


def simulate_system(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
                    policy: ThresholdPolicy, costs: CostParameters,
                    config: SimulationConfig = SimulationConfig(), trace: bool = False,
                    jobs: int = 1, backend: str | None = None,
                    require_stable: bool = True) -> SimulationEstimate:
    """Batch-means estimates of E[X+], E[X-], Pr[X<0] and TC under ``policy``.

    Replications use independent streams spawned from ``config.seed``;
    results do not depend on ``jobs``.
    """
    if policy.m != arrival.m * service.m:
        raise ConfigError(f"policy has {policy.m} thresholds, system has "
                          f"{arrival.m * service.m} composite states")
    if require_stable:
        try:
            check_stability(arrival, service)
        except ValueError as exc:
            raise SimulationInstabilityError(str(exc)) from None
    seeds = np.random.SeedSequence(config.seed).spawn(config.replications)
    tasks = [(arrival, service, policy.thresholds, config, s, trace, backend) for s in seeds]
    if jobs > 1 and config.replications > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(_run_replication, tasks))
    else:
        outs = [_run_replication(t) for t in tasks]
    sums = np.vstack([o[0] for o in outs])
    total = sums.sum(axis=0)
    point = total[1:] / total[0]
    tc_point = costs.h * point[0] + costs.b * point[1]
    per_batch = sums[:, 1:] / sums[:, :1]
    tc_batch = costs.h * per_batch[:, 0] + costs.b * per_batch[:, 1]
    nb = sums.shape[0]
    tq = stats.t.ppf(0.995, nb - 1)
    hw = tq * np.std(per_batch, axis=0, ddof=1) / np.sqrt(nb)
    hw_tc = tq * np.std(tc_batch, ddof=1) / np.sqrt(nb)
    return SimulationEstimate(
        e_inventory=float(point[0]), e_backlog=float(point[1]), p_stockout=float(point[2]),
        total_cost=float(tc_point), hw_inventory=float(hw[0]), hw_backlog=float(hw[1]),
        hw_stockout=float(hw[2]), hw_cost=float(hw_tc),
        events=config.events * config.replications, batches=nb,
        trace=outs[0][1] if trace else None)


def trace_to_csv(trace: np.ndarray, all_events: bool = False) -> str:
    """Trace rows as CSV: time, event, inventory, arrival_phase, service_phase."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time", "event", "inventory", "arrival_phase", "service_phase"])
    for t, ev, x, ja, js in trace:
        if all_events or ev in (1.0, 3.0):
            writer.writerow([repr(float(t)), EVENT_NAMES[ev], int(x), int(ja), int(js)])
    return buf.getvalue()
