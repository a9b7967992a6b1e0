"""Level-independent QBD for a MAP/MAP/1 make-to-stock queue under base stock.

The level is the shortfall ``k = S - X``: demand arrivals move it up, service
completions move it down.  With a single threshold the chain is a
level-independent QBD whose stationary law is matrix geometric,
``pi_k = pi_0 R^k``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError, InstabilityError, NumericalError
from .mapcore import MarkovianArrivalProcess

DEFAULT_TOL = 1e-12
MAX_ITER = 100_000


def default_tol() -> float:
    """Solver tolerance; ``MAPCTL_TOL`` overrides the built-in 1e-12."""
    raw = os.environ.get("MAPCTL_TOL")
    if not raw:
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise ConfigError(f"MAPCTL_TOL must be a number, got {raw!r}") from None
    if not tol > 0:
        raise ConfigError(f"MAPCTL_TOL must be positive, got {tol}")
    return tol


@dataclass(frozen=True)
class CostParameters:
    """Holding cost ``h`` and backlog cost ``b`` per unit per unit time."""

    h: float = 1.0
    b: float = 5.0

    def __post_init__(self):
        if not (self.h > 0 and self.b > 0):
            raise ConfigError(f"costs must be positive, got h={self.h}, b={self.b}")

    @property
    def critical_ratio(self) -> float:
        return self.b / (self.b + self.h)

    def stage_cost(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, -self.b * x, self.h * x)


@dataclass(frozen=True)
class PerformanceMeasures:
    e_inventory: float
    e_backlog: float
    p_stockout: float
    total_cost: float
    e_shortfall: float = float("nan")

    def as_dict(self) -> dict:
        return {"TC": self.total_cost, "EX+": self.e_inventory,
                "EX-": self.e_backlog, "P0": self.p_stockout}


@dataclass(frozen=True, eq=False)
class QbdBlocks:
    f: np.ndarray
    l: np.ndarray
    b: np.ndarray
    l0: np.ndarray

    @property
    def n(self) -> int:
        return self.f.shape[0]


@dataclass(frozen=True, eq=False)
class GeometricSolution:
    r_matrix: np.ndarray
    pi0: np.ndarray
    spectral_radius: float
    residual: float = field(default=0.0)
    iterations: int = field(default=0)

    def level(self, k: int) -> np.ndarray:
        return self.pi0 @ np.linalg.matrix_power(self.r_matrix, k)

    @property
    def n(self) -> int:
        return self.pi0.size


def check_stability(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess) -> None:
    lam, mu = arrival.rate, service.rate
    if not lam < mu:
        raise InstabilityError(
            f"arrival rate {lam:.6g} is not below the service rate {mu:.6g}")


def build_qbd_blocks(arrival: MarkovianArrivalProcess,
                     service: MarkovianArrivalProcess) -> QbdBlocks:
    """Kronecker blocks on the composite phase ``j = ja * m_s + js``.

    The service process only runs at positive shortfall, so the level-0 local
    block carries the arrival part alone.
    """
    check_stability(arrival, service)
    ia, is_ = np.eye(arrival.m), np.eye(service.m)
    f = np.kron(arrival.d1, is_)
    b = np.kron(ia, service.d1)
    l0 = np.kron(arrival.d0, is_)
    l = l0 + np.kron(ia, service.d0)
    return QbdBlocks(f=f, l=l, b=b, l0=l0)


def rate_matrix(f: np.ndarray, l: np.ndarray, b: np.ndarray, tol: float | None = None,
                max_iter: int = MAX_ITER) -> tuple[np.ndarray, float, int]:
    """Minimal nonnegative solution of ``F + R L + R^2 B = 0``.

    Functional iteration ``R <- -(F + R^2 B) L^-1`` from zero; the sequence
    increases monotonically to the minimal solution.
    """
    tol = default_tol() if tol is None else tol
    linv = np.linalg.inv(l)
    r = np.zeros_like(f)
    res = prev = np.inf
    for it in range(1, max_iter + 1):
        r_next = -(f + r @ r @ b) @ linv
        res = float(np.max(np.abs(f + r_next @ l + r_next @ r_next @ b).sum(axis=1)))
        # past the tolerance, keep polishing until roundoff stalls the residual
        if res < tol and (res >= prev or res < 1e-16):
            return (r_next if res < prev else r), min(res, prev), it
        r, prev = r_next, res
    raise ConvergenceError(
        f"R iteration did not reach tolerance {tol:g} in {max_iter} steps "
        f"(residual {res:.3g})", residual=res, iterations=max_iter)


def spectral_radius(a: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def _boundary_vector(l0: np.ndarray, r: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = r.shape[0]
    a = (l0 + r @ b).T.copy()
    a[-1, :] = np.linalg.solve(np.eye(n) - r, np.ones(n))
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi0 = np.linalg.solve(a, rhs)
    if np.any(pi0 < -1e-10):
        raise NumericalError(f"boundary vector has negative entries: {pi0}")
    return np.clip(pi0, 0.0, None)


def solve_rate_matrix(blocks: QbdBlocks, tol: float | None = None) -> GeometricSolution:
    r, res, it = rate_matrix(blocks.f, blocks.l, blocks.b, tol=tol)
    sr = spectral_radius(r)
    if not sr < 1:
        raise InstabilityError(f"spectral radius of R is {sr:.6g}")
    pi0 = _boundary_vector(blocks.l0, r, blocks.b)
    r.setflags(write=False)
    pi0.setflags(write=False)
    return GeometricSolution(r_matrix=r, pi0=pi0, spectral_radius=sr,
                             residual=res, iterations=it)


def solve_base_stock_system(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
                            tol: float | None = None) -> GeometricSolution:
    return solve_rate_matrix(build_qbd_blocks(arrival, service), tol=tol)


def shortfall_cdf(sol: GeometricSolution, s: int) -> float:
    """``Pr[shortfall <= s] = pi_0 (I - R^{s+1}) (I - R)^-1 1``."""
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    n = sol.n
    tail = np.linalg.matrix_power(sol.r_matrix, s + 1)
    v = np.linalg.solve(np.eye(n) - sol.r_matrix, np.ones(n))
    return float(sol.pi0 @ (np.eye(n) - tail) @ v)


def optimal_base_stock(sol: GeometricSolution, costs: CostParameters,
                       max_level: int = 1_000_000) -> int:
    """Smallest ``S`` whose shortfall CDF reaches ``b / (b + h)``."""
    target = costs.critical_ratio
    n = sol.n
    ones = np.ones(n)
    term = sol.pi0.copy()
    acc = 0.0
    for s in range(max_level + 1):
        acc += float(term @ ones)
        # slack absorbs roundoff when the CDF hits the ratio exactly
        if acc >= target - 1e-12:
            return s
        term = term @ sol.r_matrix
    raise ConvergenceError(f"critical ratio {target!r} not reached by level {max_level}")


def base_stock_performance(sol: GeometricSolution, s: int,
                           costs: CostParameters) -> PerformanceMeasures:
    """Closed-form measures of base-stock level ``s``.

    ``X = s - k``; backlog occurs at shortfall levels above ``s``.
    """
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    n = sol.n
    r = sol.r_matrix
    eye = np.eye(n)
    v1 = np.linalg.solve(eye - r, np.ones(n))      # (I-R)^-1 1
    v2 = np.linalg.solve(eye - r, v1)              # (I-R)^-2 1
    rs = np.linalg.matrix_power(r, s)
    head = sol.pi0 @ rs @ r                        # pi_0 R^{s+1}
    p_stockout = float(head @ v1)
    e_backlog = float(head @ v2)
    e_inventory = s * float(sol.pi0 @ v1) - float(sol.pi0 @ (eye - rs) @ r @ v2)
    e_shortfall = float(sol.pi0 @ r @ v2)
    tc = costs.h * e_inventory + costs.b * e_backlog
    return PerformanceMeasures(e_inventory=e_inventory, e_backlog=e_backlog,
                               p_stockout=p_stockout, total_cost=tc,
                               e_shortfall=e_shortfall)
