"""Markovian arrival processes and phase-type distributions.

A MAP is a pair of rate matrices ``(D0, D1)``: ``D0`` holds the phase
transitions that do not generate an event, ``D1`` the ones that do.  Phase
counts in this package are small, so everything is dense numpy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    DimensionMismatchError,
    MapValidationError,
    NegativeRateError,
    PhaseTypeError,
    ReducibleError,
    RowSumError,
    SingularD0Error,
    StationaryVectorError,
)

ROW_SUM_TOL = 1e-8


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MarkovianArrivalProcess:
    """Validated ``MAP(D0, D1)``.  Build instances through :func:`validate_map`."""

    d0: np.ndarray
    d1: np.ndarray

    @property
    def m(self) -> int:
        return self.d0.shape[0]

    @property
    def generator(self) -> np.ndarray:
        return self.d0 + self.d1

    @property
    def mean(self) -> float:
        return map_moments(self, 1)[0]

    @property
    def rate(self) -> float:
        return 1.0 / self.mean

    def to_dict(self) -> dict:
        return {"d0": self.d0.tolist(), "d1": self.d1.tolist()}

    def __repr__(self):
        return f"MarkovianArrivalProcess(m={self.m}, mean={self.mean:.6g})"


@dataclass(frozen=True, eq=False)
class PhaseTypeDistribution:
    alpha: np.ndarray
    t_matrix: np.ndarray

    @property
    def m(self) -> int:
        return self.t_matrix.shape[0]

    @property
    def exit_vector(self) -> np.ndarray:
        return -self.t_matrix.sum(axis=1)

    def moments(self, n: int) -> list[float]:
        return ph_moments(self, n)

    @property
    def mean(self) -> float:
        return self.moments(1)[0]

    @property
    def scv(self) -> float:
        m1, m2 = self.moments(2)
        return (m2 - m1 * m1) / (m1 * m1)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha.tolist(), "t": self.t_matrix.tolist()}


@dataclass(frozen=True)
class MapStatistics:
    mean: float
    moments: list[float]
    scv: float
    rho: list[float]
    beta: np.ndarray = field(repr=False)

    @property
    def variance(self) -> float:
        return self.scv * self.mean ** 2


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _is_irreducible(generator: np.ndarray) -> bool:
    pattern = (np.abs(generator) > 0).astype(int)
    np.fill_diagonal(pattern, 0)
    n_comp, _ = connected_components(pattern, directed=True, connection="strong")
    return n_comp == 1


def validate_map(d0, d1, tol: float = ROW_SUM_TOL) -> MarkovianArrivalProcess:
    """Check the generator conditions and return an immutable MAP.

    Raises a distinct subclass of :class:`MapValidationError` for each
    failure: dimension mismatch, negative rate, row-sum residual above
    ``tol``, singular ``d0`` and reducible ``d0 + d1``.
    """
    d0 = np.atleast_2d(np.asarray(d0, dtype=float))
    d1 = np.atleast_2d(np.asarray(d1, dtype=float))
    if d0.ndim != 2 or d0.shape[0] != d0.shape[1]:
        raise DimensionMismatchError(f"d0 must be square, got shape {d0.shape}")
    if d1.shape != d0.shape:
        raise DimensionMismatchError(f"d1 shape {d1.shape} != d0 shape {d0.shape}")
    if not (np.all(np.isfinite(d0)) and np.all(np.isfinite(d1))):
        raise MapValidationError("matrices contain non-finite entries")
    off = d0 - np.diag(np.diag(d0))
    if np.any(off < 0):
        i, j = np.argwhere(off < 0)[0]
        raise NegativeRateError(f"d0[{i},{j}] = {d0[i, j]} is negative")
    if np.any(d1 < 0):
        i, j = np.argwhere(d1 < 0)[0]
        raise NegativeRateError(f"d1[{i},{j}] = {d1[i, j]} is negative")
    if np.any(np.diag(d0) >= 0):
        i = int(np.argmax(np.diag(d0) >= 0))
        raise NegativeRateError(f"d0[{i},{i}] = {d0[i, i]} must be negative")
    resid = (d0 + d1).sum(axis=1)
    bad = np.flatnonzero(np.abs(resid) > tol)
    if bad.size:
        i = int(bad[0])
        raise RowSumError(
            f"row {i + 1} of d0 + d1 sums to {resid[i]:.3g} (tolerance {tol:g})"
        )
    if np.linalg.cond(d0) > 1e14:
        raise SingularD0Error("d0 is singular")
    if not _is_irreducible(d0 + d1):
        raise ReducibleError("d0 + d1 is reducible")
    return MarkovianArrivalProcess(_frozen(d0), _frozen(d1))


def normalize_diagonal(d0, d1) -> tuple[np.ndarray, np.ndarray]:
    """Reset each diagonal entry of ``d0`` so rows of ``d0 + d1`` sum to zero."""
    d0 = np.array(d0, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    off = d0.sum(axis=1) - np.diag(d0)
    np.fill_diagonal(d0, -(off + d1.sum(axis=1)))
    return d0, d1


def poisson_map(rate: float) -> MarkovianArrivalProcess:
    if rate <= 0:
        raise MapValidationError(f"rate must be positive, got {rate}")
    return validate_map([[-rate]], [[rate]])


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def embedded_matrix(mp: MarkovianArrivalProcess) -> np.ndarray:
    """Phase transition matrix between consecutive arrivals, ``(-D0)^-1 D1``."""
    return np.linalg.solve(-mp.d0, mp.d1)


def _stationary_dtmc(p: np.ndarray) -> np.ndarray:
    m = p.shape[0]
    a = p.T - np.eye(m)
    a[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    try:
        x = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise StationaryVectorError("embedded chain has no unique stationary vector") from exc
    if np.any(x < -1e-10):
        raise StationaryVectorError(f"stationary vector has negative entries: {x}")
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def stationary_phase_vector(mp: MarkovianArrivalProcess) -> np.ndarray:
    """Phase distribution right after an arrival: ``beta P = beta``, ``beta 1 = 1``."""
    p = embedded_matrix(mp)
    beta = _stationary_dtmc(p)
    if np.max(np.abs(beta @ p - beta)) > 1e-12:
        raise StationaryVectorError("residual of beta P = beta exceeds 1e-12")
    return beta


def map_moments(mp: MarkovianArrivalProcess, n: int) -> list[float]:
    beta = stationary_phase_vector(mp)
    inv = np.linalg.inv(-mp.d0)
    out, v = [], beta
    for k in range(1, n + 1):
        v = v @ inv
        out.append(math.factorial(k) * float(v.sum()))
    return out


def map_statistics(mp: MarkovianArrivalProcess, max_moment: int = 5,
                   max_lag: int = 5) -> MapStatistics:
    """Moments, scv and lag-k autocorrelations of the stationary inter-event times."""
    if max_moment < 2:
        raise ValueError("max_moment must be at least 2")
    beta = stationary_phase_vector(mp)
    inv = np.linalg.inv(-mp.d0)
    moments, v = [], beta
    for k in range(1, max_moment + 1):
        v = v @ inv
        moments.append(math.factorial(k) * float(v.sum()))
    mean = moments[0]
    var = moments[1] - mean * mean
    p = inv @ mp.d1
    left = beta @ inv           # weights phases at the end of T0 by T0
    right = inv.sum(axis=1)     # E[T | starting phase]
    rho = []
    for _ in range(max_lag):
        left = left @ p
        rho.append((float(left @ right) - mean * mean) / var)
    return MapStatistics(mean=mean, moments=moments, scv=var / mean ** 2,
                         rho=rho, beta=beta)


def jump_chain_probabilities(mp: MarkovianArrivalProcess) -> tuple[np.ndarray, np.ndarray]:
    """Embedded jump probabilities split into (no event, event) parts.

    Row ``i`` of the sum is the distribution of the next phase when leaving
    phase ``i``; the second matrix carries the jumps that emit an event.
    """
    lam = -np.diag(mp.d0)
    silent = mp.d0 / lam[:, None]
    np.fill_diagonal(silent, 0.0)
    loud = mp.d1 / lam[:, None]
    return silent, loud


# ---------------------------------------------------------------------------
# transformations
# ---------------------------------------------------------------------------

def renewalize(mp: MarkovianArrivalProcess) -> MarkovianArrivalProcess:
    """Same marginal distribution, zero autocorrelation: ``D1 <- (D1 1) beta``."""
    beta = stationary_phase_vector(mp)
    d1 = np.outer(mp.d1.sum(axis=1), beta)
    return validate_map(mp.d0, d1)


def scale_autocorrelation(mp: MarkovianArrivalProcess, theta: float) -> MarkovianArrivalProcess:
    """Mix ``D1`` with its renewal version; lag-1 autocorrelation becomes ``theta * rho_1``."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if theta == 1.0:
        return mp
    ren = renewalize(mp)
    if theta == 0.0:
        return ren
    return validate_map(mp.d0, theta * mp.d1 + (1.0 - theta) * ren.d1)


def rescale_mean(mp: MarkovianArrivalProcess, new_mean: float) -> MarkovianArrivalProcess:
    if not new_mean > 0:
        raise ValueError(f"new_mean must be positive, got {new_mean}")
    c = mp.mean / new_mean
    return validate_map(mp.d0 * c, mp.d1 * c)


def two_station_line_map(mu1: float, mu2: float) -> MarkovianArrivalProcess:
    """Departure process of two exponential stations with no buffer in between.

    Phases are (1, 0), (1, 1), (0, 1): machine 1 working / blocked, machine 2
    working / idle.  Events are completions on machine 2.
    """
    if mu1 <= 0 or mu2 <= 0:
        raise ValueError(f"service rates must be positive, got {mu1}, {mu2}")
    d0 = [[-mu1, mu1, 0.0],
          [0.0, -(mu1 + mu2), mu1],
          [0.0, 0.0, -mu2]]
    d1 = [[0.0, 0.0, 0.0],
          [mu2, 0.0, 0.0],
          [0.0, mu2, 0.0]]
    return validate_map(d0, d1)


# ---------------------------------------------------------------------------
# phase-type distributions
# ---------------------------------------------------------------------------

def validate_ph(alpha, t_matrix, tol: float = 1e-10) -> PhaseTypeDistribution:
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    t = np.atleast_2d(np.asarray(t_matrix, dtype=float))
    if t.shape[0] != t.shape[1] or alpha.shape != (t.shape[0],):
        raise PhaseTypeError(f"alpha {alpha.shape} / t {t.shape} dimensions disagree")
    if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > tol:
        raise PhaseTypeError("alpha must be a probability vector")
    off = t - np.diag(np.diag(t))
    if np.any(off < 0) or np.any(np.diag(t) >= 0):
        raise PhaseTypeError("t must have nonnegative off-diagonals and negative diagonal")
    if np.any(-t.sum(axis=1) < -tol):
        raise PhaseTypeError("exit vector -t 1 has negative entries")
    if np.linalg.cond(t) > 1e14:
        raise PhaseTypeError("t is singular")
    return PhaseTypeDistribution(_frozen(alpha), _frozen(t))


def ph_moments(ph: PhaseTypeDistribution, n: int) -> list[float]:
    inv = np.linalg.inv(-ph.t_matrix)
    out, v = [], ph.alpha
    for k in range(1, n + 1):
        v = v @ inv
        out.append(math.factorial(k) * float(v.sum()))
    return out


def marginal_ph(mp: MarkovianArrivalProcess) -> PhaseTypeDistribution:
    return validate_ph(stationary_phase_vector(mp), mp.d0)


def _erlang_mixture(mean: float, scv: float, max_order: int) -> PhaseTypeDistribution:
    # Erlang(k-1)/Erlang(k) mixture with a common rate: matches any scv in [1/k, 1/(k-1)].
    k = math.ceil(1.0 / scv - 1e-12)
    if k > max_order:
        raise PhaseTypeError(
            f"scv {scv:g} needs an Erlang order of {k} (> max_order {max_order})")
    if k == 1:
        return validate_ph([1.0], [[-1.0 / mean]])
    p = (k * scv - math.sqrt(max(k * (1.0 + scv) - k * k * scv, 0.0))) / (1.0 + scv)
    p = min(max(p, 0.0), 1.0)
    rate = (k - p) / mean
    t = np.diag(np.full(k, -rate)) + np.diag(np.full(k - 1, rate), 1)
    alpha = np.zeros(k)
    alpha[0], alpha[1] = 1.0 - p, p
    return validate_ph(alpha, t)


def ph_two_moment_fit(mean: float, scv: float, max_order: int = 200) -> PhaseTypeDistribution:
    """Phase-type distribution with the given mean and squared coefficient of variation.

    ``scv <= 1`` uses a mixture of Erlang(k-1) and Erlang(k) sharing one rate
    (exponential at ``scv == 1``); ``scv > 1`` uses a two-phase
    hyperexponential with balanced means.
    """
    if not mean > 0 or not scv > 0:
        raise PhaseTypeError(f"mean and scv must be positive, got {mean}, {scv}")
    if scv <= 1.0:
        return _erlang_mixture(mean, scv, max_order)
    p = 0.5 * (1.0 + math.sqrt((scv - 1.0) / (scv + 1.0)))
    rates = np.array([2.0 * p, 2.0 * (1.0 - p)]) / mean
    return validate_ph([p, 1.0 - p], np.diag(-rates))


def ph_as_renewal_map(ph: PhaseTypeDistribution) -> MarkovianArrivalProcess:
    return validate_map(ph.t_matrix, np.outer(ph.exit_vector, ph.alpha))


# ---------------------------------------------------------------------------
# presets and files
# ---------------------------------------------------------------------------

# Four reference processes with unit mean, stored exactly as published.
PRESET_MATRICES = {
    "t31-pos-lo": (
        [[-1.4968, 0.0, 0.0426], [0.0033, -1.5339, 1.4213], [0.0, 0.0, -1.5340]],
        [[1.4213, 0.0329, 0.0], [0.0, 0.0, 0.1093], [0.0533, 1.4807, 0.0]],
    ),
    "t31-pos-hi": (
        [[-0.4531, 0.0395], [0.0, -1.2612]],
        [[0.4135, 0.0], [0.0176, 1.2436]],
    ),
    "t31-neg-lo": (
        [[-1.5, 1.5, 0.0], [0.0, -3.0, 1.5], [0.0, 0.0, -1.5]],
        [[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [0.0, 1.5, 0.0]],
    ),
    "t31-neg-hi": (
        [[-0.5214, 0.5214, 0.0], [0.0, -21.1159, 0.0], [0.0, 0.0, -21.1159]],
        [[0.0, 0.0, 0.0], [1.3035, 0.0, 19.8124], [19.5518, 0.0, 1.5641]],
    ),
}

PRESET_NAMES = tuple(PRESET_MATRICES) + ("exp",)


def preset(name: str) -> MarkovianArrivalProcess:
    """Named reference process.

    The published matrices are rounded to four decimals, so one row of
    ``t31-pos-hi`` misses a zero row sum by 1e-4; diagonals of ``d0`` are
    re-derived from the off-diagonal rates before validation.
    """
    if name == "exp":
        return poisson_map(1.0)
    try:
        d0, d1 = PRESET_MATRICES[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESET_NAMES}") from None
    return validate_map(*normalize_diagonal(d0, d1))


def map_from_dict(obj: dict) -> MarkovianArrivalProcess:
    try:
        return validate_map(obj["d0"], obj["d1"])
    except KeyError as exc:
        raise MapValidationError(f"MAP file is missing key {exc}") from None


def ph_from_dict(obj: dict) -> PhaseTypeDistribution:
    try:
        return validate_ph(obj["alpha"], obj["t"])
    except KeyError as exc:
        raise PhaseTypeError(f"PH file is missing key {exc}") from None


def load_map(path) -> MarkovianArrivalProcess:
    return map_from_dict(json.loads(Path(path).read_text()))


def save_map(mp: MarkovianArrivalProcess, path) -> None:
    Path(path).write_text(json.dumps(mp.to_dict()))


def load_ph(path) -> PhaseTypeDistribution:
    return ph_from_dict(json.loads(Path(path).read_text()))


def save_ph(ph: PhaseTypeDistribution, path) -> None:
    Path(path).write_text(json.dumps(ph.to_dict()))


def resolve_map(source: str) -> MarkovianArrivalProcess:
    """Preset name or path to a MAP JSON file."""
    if source in PRESET_NAMES:
        return preset(source)
    return load_map(source)
