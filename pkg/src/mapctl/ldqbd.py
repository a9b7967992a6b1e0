"""Level-dependent QBD evaluation of state-dependent threshold policies.

The level is the shortfall ``k = z_max - X``.  Composite state ``j`` may
produce at level ``k`` iff ``k > z_max - Z(j)``, i.e. iff ``X < Z(j)``.  Beyond
``k_bar = z_max - z_min`` every state produces and the blocks stop depending on
the level, so the stationary law is an exact finite head glued to a matrix
geometric tail.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericalError
from .mapcore import MarkovianArrivalProcess
from .qbd import (CostParameters, PerformanceMeasures, check_stability, rate_matrix,
                  spectral_radius)

__all__ = [
    "ThresholdPolicy", "LevelBlocks", "StationaryDistribution", "PerformanceMeasures",
    "authorization_diagonal", "authorization_matrix", "build_level_blocks",
    "solve_stationary", "threshold_performance", "evaluate_policy",
    "truncated_stationary",
]


@dataclass(frozen=True)
class ThresholdPolicy:
    """Production thresholds ``Z(j)`` indexed by composite state ``j = ja * m_s + js``."""

    thresholds: tuple[int, ...]

    def __post_init__(self):
        z = tuple(int(v) for v in self.thresholds)
        if not z:
            raise ValueError("a policy needs at least one threshold")
        if any(int(v) != v for v in self.thresholds):
            raise ValueError(f"thresholds must be integers, got {self.thresholds}")
        if min(z) < 0:
            raise ValueError(f"thresholds must be nonnegative, got {z}")
        object.__setattr__(self, "thresholds", z)

    @classmethod
    def single(cls, s: int, m: int) -> "ThresholdPolicy":
        return cls((s,) * m)

    @property
    def m(self) -> int:
        return len(self.thresholds)

    @property
    def z_max(self) -> int:
        return max(self.thresholds)

    @property
    def z_min(self) -> int:
        return min(self.thresholds)

    @property
    def k_bar(self) -> int:
        return self.z_max - self.z_min

    @property
    def sorted_view(self) -> tuple[int, ...]:
        return tuple(sorted(self.thresholds, reverse=True))

    @property
    def is_single(self) -> bool:
        return self.z_max == self.z_min

    def to_dict(self) -> dict:
        return {"thresholds": list(self.thresholds)}

    @classmethod
    def from_dict(cls, obj: dict) -> "ThresholdPolicy":
        try:
            return cls(tuple(obj["thresholds"]))
        except KeyError:
            raise ValueError("policy file is missing key 'thresholds'") from None

    @classmethod
    def load(cls, path) -> "ThresholdPolicy":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    def __str__(self):
        return "(" + ",".join(str(z) for z in self.thresholds) + ")"


def authorization_diagonal(policy: ThresholdPolicy, k: int) -> np.ndarray:
    if k < 0:
        raise ValueError(f"level must be nonnegative, got {k}")
    z = np.asarray(policy.thresholds)
    return (k > policy.z_max - z).astype(float)


def authorization_matrix(policy: ThresholdPolicy, k: int) -> np.ndarray:
    """Diagonal 0/1 matrix ``U_k`` of states allowed to produce at shortfall ``k``."""
    return np.diag(authorization_diagonal(policy, k))


@dataclass(frozen=True, eq=False)
class LevelBlocks:
    """Blocks of the controlled chain; ``local[k]``, ``backward[k]`` for ``k <= k_bar``."""

    policy: ThresholdPolicy
    f: np.ndarray
    local: tuple[np.ndarray, ...]
    backward: tuple[np.ndarray, ...]
    l_tail: np.ndarray
    b_tail: np.ndarray

    @property
    def k_bar(self) -> int:
        return self.policy.k_bar

    @property
    def n(self) -> int:
        return self.f.shape[0]

    def local_at(self, k: int) -> np.ndarray:
        return self.local[k] if k <= self.k_bar else self.l_tail

    def backward_at(self, k: int) -> np.ndarray:
        return self.backward[k] if k <= self.k_bar else self.b_tail


def build_level_blocks(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
                       policy: ThresholdPolicy) -> LevelBlocks:
    n = arrival.m * service.m
    if policy.m != n:
        raise ValueError(f"policy has {policy.m} thresholds, system has {n} composite states")
    check_stability(arrival, service)
    ia, is_ = np.eye(arrival.m), np.eye(service.m)
    f = np.kron(arrival.d1, is_)
    arr_local = np.kron(arrival.d0, is_)
    svc_local = np.kron(ia, service.d0)
    svc_done = np.kron(ia, service.d1)
    local, backward = [], []
    for k in range(policy.k_bar + 1):
        u = authorization_diagonal(policy, k)[:, None]
        local.append(arr_local + u * svc_local)
        backward.append(u * svc_done)
    return LevelBlocks(policy=policy, f=f, local=tuple(local), backward=tuple(backward),
                       l_tail=arr_local + svc_local, b_tail=svc_done)


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    """``head[k]`` is ``pi_k``; beyond the head ``pi_{k+1} = pi_k R_tail``."""

    head: np.ndarray
    tail_rate: np.ndarray
    k_bar: int
    total_mass: float
    residual: float

    @property
    def n_head(self) -> int:
        return self.head.shape[0]

    def level(self, k: int) -> np.ndarray:
        last = self.n_head - 1
        if k <= last:
            return self.head[k]
        return self.head[last] @ np.linalg.matrix_power(self.tail_rate, k - last)

    def levels(self, count: int) -> np.ndarray:
        """``pi_0 .. pi_{count-1}`` stacked as rows."""
        if count <= self.n_head:
            return self.head[:count]
        out = [self.head]
        v = self.head[-1]
        for _ in range(count - self.n_head):
            v = v @ self.tail_rate
            out.append(v[None, :])
        return np.vstack(out)

    def _tail_sums(self, k: int) -> tuple[float, float]:
        """Mass beyond level ``k`` and ``sum_{i>=1} i * pi_{k+i} 1`` (needs ``k >= k_bar``)."""
        n = self.tail_rate.shape[0]
        eye = np.eye(n)
        v1 = np.linalg.solve(eye - self.tail_rate, np.ones(n))
        v2 = np.linalg.solve(eye - self.tail_rate, v1)
        w = self.level(k) @ self.tail_rate
        return float(w @ v1), float(w @ v2)


def solve_stationary(blocks: LevelBlocks, tail_tol: float = 1e-9,
                     tol: float | None = None) -> StationaryDistribution:
    """Exact stationary distribution of the threshold-controlled chain.

    Levels ``0..k_bar`` are unknowns of a dense linear system; the geometric
    tail enters through the last head equation and the normalisation.  The
    returned head is extended along the tail until the mass beyond it is
    below ``tail_tol``.
    """
    f, n, kb = blocks.f, blocks.n, blocks.k_bar
    r, _, _ = rate_matrix(f, blocks.l_tail, blocks.b_tail, tol=tol)
    sr = spectral_radius(r)
    if not sr < 1:
        raise NumericalError(f"tail rate matrix has spectral radius {sr:.6g}")
    size = n * (kb + 1)
    # Column block k of `a` holds the balance equation of level k.
    a = np.zeros((size, size))
    for k in range(kb + 1):
        s = slice(k * n, (k + 1) * n)
        a[s, s] = blocks.local[k] if k < kb else blocks.local[kb] + r @ blocks.b_tail
        if k > 0:
            a[(k - 1) * n:k * n, s] = f
        if k < kb:
            a[(k + 1) * n:(k + 2) * n, s] = blocks.backward[k + 1]
    norm = np.ones(size)
    norm[kb * n:] = np.linalg.solve(np.eye(n) - r, np.ones(n))
    system = a.T.copy()
    system[0, :] = norm
    rhs = np.zeros(size)
    rhs[0] = 1.0
    try:
        x = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("head system is singular") from exc
    residual = float(np.max(np.abs(x @ a)))
    if np.any(x < -1e-10) or residual > 1e-9:
        raise NumericalError(f"head solve is inaccurate (residual {residual:.3g})")
    x = np.clip(x, 0.0, None)
    head = [x[k * n:(k + 1) * n] for k in range(kb + 1)]
    # extend over the tail until the rest is negligible (and at least to z_max)
    v1 = np.linalg.solve(np.eye(n) - r, np.ones(n))
    z_max = blocks.policy.z_max
    while len(head) <= z_max or float(head[-1] @ r @ v1) >= tail_tol:
        head.append(head[-1] @ r)
    head_arr = np.vstack(head)
    total = float(head_arr.sum() + head[-1] @ r @ v1)
    head_arr.setflags(write=False)
    r.setflags(write=False)
    return StationaryDistribution(head=head_arr, tail_rate=r, k_bar=kb,
                                  total_mass=total, residual=residual)


def threshold_performance(dist: StationaryDistribution, policy: ThresholdPolicy,
                          costs: CostParameters) -> PerformanceMeasures:
    """Inventory, backlog and stockout probability; ``X < 0`` means ``k > z_max``."""
    z = policy.z_max
    mass = dist.head[:z + 1].sum(axis=1)
    ks = np.arange(z + 1)
    e_inventory = float(((z - ks) * mass).sum())
    p_stockout, e_backlog = dist._tail_sums(z)
    e_shortfall = float((ks * mass).sum()) + z * p_stockout + e_backlog
    tc = costs.h * e_inventory + costs.b * e_backlog
    return PerformanceMeasures(e_inventory=e_inventory, e_backlog=e_backlog,
                               p_stockout=p_stockout, total_cost=tc,
                               e_shortfall=e_shortfall)


def evaluate_policy(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
                    policy: ThresholdPolicy, costs: CostParameters) -> PerformanceMeasures:
    dist = solve_stationary(build_level_blocks(arrival, service, policy))
    return threshold_performance(dist, policy, costs)


def truncated_stationary(blocks: LevelBlocks, levels: int) -> np.ndarray:
    """Brute-force stationary law on levels ``0..levels-1``.

    Arrivals at the top level are suppressed, so the dropped tail mass piles
    up there.  Used as an independent check of :func:`solve_stationary`.
    """
    n = blocks.n
    size = n * levels
    q = np.zeros((size, size))
    for k in range(levels):
        s = slice(k * n, (k + 1) * n)
        q[s, s] = blocks.local_at(k)
        if k + 1 < levels:
            q[s, (k + 1) * n:(k + 2) * n] = blocks.f
        else:
            q[s, s] += np.diag(blocks.f.sum(axis=1))
        if k > 0:
            q[s, (k - 1) * n:k * n] = blocks.backward_at(k)
    system = q.T.copy()
    system[0, :] = 1.0
    rhs = np.zeros(size)
    rhs[0] = 1.0
    return np.linalg.solve(system, rhs).reshape(levels, n)
