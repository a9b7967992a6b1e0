"""Average-cost MDP for the produce/idle decision on a truncated inventory range.

States are ``(x, j)`` with inventory ``x`` in ``[x_lo, x_hi]`` and composite
phase ``j = ja * m_s + js``, flattened as ``(x - x_lo) * m + j``.  At ``x_hi``
production is switched off; a demand arriving at ``x_lo`` leaves the state
unchanged (the lost backlog is the truncation error, kept below 1e-8 by
adaptive bounds).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import (BoundaryActiveWarning, ConvergenceError, CyclingError, NumericalError,
                     StructureViolation)
from .ldqbd import ThresholdPolicy
from .mapcore import MarkovianArrivalProcess
from .qbd import CostParameters, check_stability, optimal_base_stock, solve_base_stock_system

Q_EPS = 1e-12
LO_MASS_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class UniformizedSystem:
    p0: np.ndarray
    p1: np.ndarray
    r0: np.ndarray
    r1: np.ndarray
    alpha: float

    @property
    def m_a(self) -> int:
        return self.p0.shape[0]

    @property
    def m_s(self) -> int:
        return self.r0.shape[0]

    @property
    def m(self) -> int:
        return self.m_a * self.m_s


def uniformize(arrival: MarkovianArrivalProcess,
               service: MarkovianArrivalProcess) -> UniformizedSystem:
    """Discrete-time version at rate ``alpha = max(-D0_ii) + max(-A0_jj)``."""
    alpha = float(np.max(-np.diag(arrival.d0)) + np.max(-np.diag(service.d0)))
    return UniformizedSystem(
        p0=arrival.d0 / alpha + np.eye(arrival.m), p1=arrival.d1 / alpha,
        r0=service.d0 / alpha + np.eye(service.m), r1=service.d1 / alpha, alpha=alpha)


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """``actions[x - x_lo, j]`` is 1 to produce, 0 to idle."""

    actions: np.ndarray
    x_lo: int
    x_hi: int

    @property
    def m(self) -> int:
        return self.actions.shape[1]

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.x_lo, self.x_hi + 1)

    def action(self, x: int, j: int) -> int:
        return int(self.actions[x - self.x_lo, j])

    @classmethod
    def from_thresholds(cls, policy: ThresholdPolicy, x_lo: int, x_hi: int) -> "PolicyTable":
        xs = np.arange(x_lo, x_hi + 1)[:, None]
        u = (xs < np.asarray(policy.thresholds)[None, :]).astype(np.int8)
        u[-1, :] = 0
        return cls(u, x_lo, x_hi)


class TruncatedMdp:
    """Sparse transition structure of the uniformized chain on ``[x_lo, x_hi]``.

    The transition matrix of a policy ``u`` is ``base + diag(u) @ prod``:
    ``base`` moves the arrival phase (and lowers ``x`` on a demand), ``prod``
    is the extra service movement switched on by production.
    """

    def __init__(self, sys: UniformizedSystem, costs: CostParameters, x_lo: int, x_hi: int):
        if not x_lo < 0 < x_hi:
            raise ValueError(f"bounds must satisfy x_lo < 0 < x_hi, got [{x_lo}, {x_hi}]")
        self.sys, self.costs = sys, costs
        self.x_lo, self.x_hi = int(x_lo), int(x_hi)
        self.m = sys.m
        nx = self.x_hi - self.x_lo + 1
        self.nx = nx
        ia, is_ = np.eye(sys.m_a), np.eye(sys.m_s)
        down = sp.eye(nx, k=-1, format="lil")
        down[0, 0] = 1.0
        up = sp.eye(nx, k=1, format="csr")
        self.base = (sp.kron(sp.eye(nx), np.kron(sys.p0, is_))
                     + sp.kron(down.tocsr(), np.kron(sys.p1, is_))).tocsr()
        open_rows = sp.diags(np.repeat((np.arange(nx) < nx - 1).astype(float), self.m))
        self.prod = (open_rows @ (sp.kron(sp.eye(nx), np.kron(ia, sys.r0 - is_))
                                  + sp.kron(up, np.kron(ia, sys.r1)))).tocsr()
        self.x = np.repeat(np.arange(self.x_lo, self.x_hi + 1), self.m)
        self.cost = costs.stage_cost(self.x) / sys.alpha
        self.can_produce = self.x < self.x_hi
        self.n_states = self.x.size

    def transition(self, u: np.ndarray) -> sp.csr_matrix:
        return (self.base + sp.diags(np.asarray(u, dtype=float).ravel()) @ self.prod).tocsr()

    def evaluate(self, u: np.ndarray) -> tuple[np.ndarray, float]:
        """Relative values and average cost per step of a fixed policy."""
        n = self.n_states
        t = self.transition(u)
        ref = int(np.searchsorted(self.x, 0))
        top = sp.hstack([sp.eye(n) - t, sp.csr_matrix(np.ones((n, 1)))])
        bottom = sp.csr_matrix(([1.0], ([0], [ref])), shape=(1, n + 1))
        a = sp.vstack([top, bottom]).tocsc()
        sol = spla.spsolve(a, np.append(self.cost, 0.0))
        if not np.all(np.isfinite(sol)):
            raise NumericalError("policy evaluation system is singular")
        return sol[:n], float(sol[n])

    def stationary(self, u: np.ndarray) -> np.ndarray:
        n = self.n_states
        a = (self.transition(u) - sp.eye(n)).T.tolil()
        a[0, :] = np.ones(n)
        rhs = np.zeros(n)
        rhs[0] = 1.0
        pi = spla.spsolve(a.tocsc(), rhs)
        return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()

    def recurrent_states(self, u: np.ndarray) -> np.ndarray:
        """Boolean mask of the closed communicating classes under policy ``u``."""
        t = self.transition(u)
        t.eliminate_zeros()
        _, labels = connected_components(t, directed=True, connection="strong")
        coo = t.tocoo()
        leaving = labels[coo.row] != labels[coo.col]
        open_classes = np.unique(labels[coo.row[leaving]])
        return ~np.isin(labels, open_classes)

    def table(self, u: np.ndarray) -> PolicyTable:
        return PolicyTable(np.asarray(u, dtype=np.int8).reshape(self.nx, self.m),
                           self.x_lo, self.x_hi)

    def greedy(self, values: np.ndarray, current: np.ndarray | None = None) -> np.ndarray:
        """One-step improvement; ties go to the current action (idle if none)."""
        q = self.prod @ values
        better = (q < -Q_EPS) & self.can_produce
        if current is None:
            return better.astype(np.int8)
        worse = (q > Q_EPS) | ~self.can_produce
        return np.where(better, 1, np.where(worse, 0, current)).astype(np.int8)


def value_iteration(sys: UniformizedSystem, costs: CostParameters, bounds: tuple[int, int],
                    span_tol: float = 1e-9, max_iter: int = 1_000_000
                    ) -> tuple[PolicyTable, float]:
    """Relative value iteration; returns the greedy policy and the average cost rate."""
    mdp = TruncatedMdp(sys, costs, *bounds)
    v = np.zeros(mdp.n_states)
    ref = int(np.searchsorted(mdp.x, 0))
    span = np.inf
    for it in range(1, max_iter + 1):
        q = mdp.prod @ v
        v_next = mdp.cost + mdp.base @ v + np.minimum(q, 0.0)
        diff = v_next - v
        span = float(diff.max() - diff.min())
        v = v_next - v_next[ref]
        # very wide ranges make |v| large enough that roundoff alone exceeds span_tol
        if span < max(span_tol, 100 * np.finfo(float).eps * float(np.abs(v).max())):
            break
    else:
        raise ConvergenceError(f"value iteration span {span:.3g} after {max_iter} sweeps",
                               residual=span, iterations=max_iter)
    g = 0.5 * float(diff.max() + diff.min()) * sys.alpha
    u = mdp.greedy(v)
    if np.any(u[mdp.x == mdp.x_hi - 1]):
        # producing right below the cap means the cap is what stops it
        warnings.warn(f"optimal action produces up to x_hi={mdp.x_hi}; widen the bounds",
                      BoundaryActiveWarning, stacklevel=2)
    return mdp.table(u), g


def _policy_iteration(mdp: TruncatedMdp, u: np.ndarray, max_iter: int = 500
                      ) -> tuple[np.ndarray, np.ndarray, float, int]:
    seen = {u.tobytes()}
    prev = u
    for it in range(1, max_iter + 1):
        values, g = mdp.evaluate(u)
        u_next = mdp.greedy(values, current=u)
        if np.array_equal(u_next, u):
            return u, values, g, it
        key = u_next.tobytes()
        if key in seen:
            raise CyclingError("policy iteration revisited a policy",
                               previous=mdp.table(prev), current=mdp.table(u_next))
        seen.add(key)
        prev, u = u, u_next
    raise ConvergenceError(f"policy iteration did not stabilise in {max_iter} steps",
                           iterations=max_iter)


def verify_threshold_structure(table: PolicyTable) -> ThresholdPolicy:
    """Thresholds of a policy table that produces below ``Z(j)`` and idles from there up.

    The forced idle action at ``x_hi`` is part of the pattern, so a phase that
    produces everywhere below the top gets ``Z = x_hi``.
    """
    xs = table.levels
    z = []
    for j in range(table.m):
        col = table.actions[:, j]
        idle = np.flatnonzero(col == 0)
        first_idle = int(idle[0]) if idle.size else len(xs)
        later_produce = np.flatnonzero(col[first_idle:] == 1)
        if later_produce.size:
            bad = first_idle + int(later_produce[0])
            raise StructureViolation(
                f"state {j}: idle at x={xs[first_idle]} but produces at x={xs[bad]}",
                state=j, window=(int(xs[first_idle]), int(xs[bad])))
        zj = int(xs[first_idle]) if first_idle < len(xs) else table.x_hi
        if zj < 0:
            raise StructureViolation(
                f"state {j}: idles while backlogged (x={zj})", state=j, window=(zj, zj))
        z.append(zj)
    return ThresholdPolicy(tuple(z))


def canonical_thresholds(mdp: TruncatedMdp, u: np.ndarray, raw: ThresholdPolicy) -> ThresholdPolicy:
    """Smallest thresholds that act like ``raw`` on the recurrent states of ``u``.

    Thresholds of phases whose high inventory levels are never revisited are
    not pinned down by optimality; this picks the least one that leaves the
    long-run behaviour, hence every cost, unchanged.
    """
    rec = mdp.recurrent_states(u).reshape(mdp.nx, mdp.m)
    acts = np.asarray(u).reshape(mdp.nx, mdp.m)
    xs = np.arange(mdp.x_lo, mdp.x_hi + 1)
    z = []
    for j, zj in enumerate(raw.thresholds):
        producing = xs[rec[:, j] & (acts[:, j] == 1)]
        visited = xs[rec[:, j]]
        if producing.size:
            z.append(min(zj, int(producing.max()) + 1))
        elif visited.size:
            z.append(min(zj, max(int(visited.min()), 0)))
        else:
            z.append(zj)
    return ThresholdPolicy(tuple(z))


def policy_iteration(sys: UniformizedSystem, costs: CostParameters, init: ThresholdPolicy,
                     bounds: tuple[int, int], max_iter: int = 500) -> ThresholdPolicy:
    """Policy iteration from a threshold policy; returns canonical optimal thresholds."""
    mdp = TruncatedMdp(sys, costs, *bounds)
    if init.m != mdp.m:
        raise ValueError(f"init has {init.m} thresholds, system has {mdp.m} states")
    if init.z_max > mdp.x_hi:
        raise ValueError(f"init threshold {init.z_max} exceeds x_hi={mdp.x_hi}")
    u0 = PolicyTable.from_thresholds(init, mdp.x_lo, mdp.x_hi).actions.ravel()
    u, _, _, _ = _policy_iteration(mdp, u0, max_iter)
    raw = verify_threshold_structure(mdp.table(u))
    return canonical_thresholds(mdp, u, raw)


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    policy: ThresholdPolicy
    raw_policy: ThresholdPolicy
    average_cost: float
    bounds: tuple[int, int]
    table: PolicyTable
    iterations: int
    lo_mass: float


def optimize_thresholds(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
                        costs: CostParameters, method: str = "policy",
                        bounds: tuple[int, int] | None = None, max_doublings: int = 6,
                        span_tol: float = 1e-9) -> OptimizationResult:
    """Optimal state-dependent thresholds with self-checking truncation.

    Starts from ``x_hi = 3 (S* + 1)``, ``x_lo = -x_hi`` (``S*`` the optimal
    base stock) and doubles each side until the stationary mass at ``x_lo`` is
    below 1e-8 and no recurrent state sits at ``x_hi``.
    """
    if method not in ("policy", "value"):
        raise ValueError(f"method must be 'policy' or 'value', got {method!r}")
    check_stability(arrival, service)
    sys = uniformize(arrival, service)
    s_star = optimal_base_stock(solve_base_stock_system(arrival, service), costs)
    if bounds is None:
        x_hi = 3 * (s_star + 1)
        bounds = (-x_hi, x_hi)
    for _ in range(max_doublings + 1):
        mdp = TruncatedMdp(sys, costs, *bounds)
        if method == "policy":
            init = ThresholdPolicy.single(min(s_star, mdp.x_hi), mdp.m)
            u0 = PolicyTable.from_thresholds(init, mdp.x_lo, mdp.x_hi).actions.ravel()
            u, _, g, iters = _policy_iteration(mdp, u0)
            g *= sys.alpha
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BoundaryActiveWarning)
                table, g = value_iteration(sys, costs, bounds, span_tol=span_tol)
            u, iters = table.actions.ravel(), 0
        pi = mdp.stationary(u)
        lo_mass = float(pi[mdp.x == mdp.x_lo].sum())
        hits_top = bool(np.any(mdp.recurrent_states(u) & (mdp.x == mdp.x_hi)))
        if lo_mass < LO_MASS_TOL and not hits_top:
            raw = verify_threshold_structure(mdp.table(u))
            return OptimizationResult(
                policy=canonical_thresholds(mdp, u, raw), raw_policy=raw, average_cost=g,
                bounds=tuple(bounds), table=mdp.table(u), iterations=iters, lo_mass=lo_mass)
        bounds = (2 * bounds[0] if lo_mass >= LO_MASS_TOL else bounds[0],
                  2 * bounds[1] if hits_top else bounds[1])
    raise ConvergenceError(f"truncation bounds still too tight at {bounds}")
