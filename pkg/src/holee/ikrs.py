"""Gaussian continuous-time limit of the lattice model.

As ``dt -> 0`` the bucket drift of the discrete model tends to

    (|rho(T')|^2 - |rho(T)|^2) / (2 (T' - T))

and the bucket forward at time ``t`` becomes Gaussian with loading
``(rho(T') - rho(T)) / (T' - T)`` on a Brownian state of covariance ``t I``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .drift import coarse_drift, stationary_drift
from .errors import ValidationError
from .factors import FactorDistribution
from .lattice import level_states
from .volstruct import VolatilityTermStructure, grid_index

RhoFn = Callable[[float], np.ndarray]


def _rho(rho: RhoFn, T: float) -> np.ndarray:
    return np.atleast_1d(np.asarray(rho(T), dtype=float))


def limit_drift(rho: RhoFn, T: float, T2: float) -> float:
    if T2 == T:
        raise ValidationError("limit drift needs T' != T")
    a, b = _rho(rho, T), _rho(rho, T2)
    return float((b @ b - a @ a) / (2.0 * (T2 - T)))


@dataclass(frozen=True)
class GaussianIkrsModel:
    rho: RhoFn
    tenors: np.ndarray
    initial: np.ndarray  # F_0(T_i, T_{i+1})

    def __post_init__(self):
        tenors = np.array(self.tenors, dtype=float)
        initial = np.array(self.initial, dtype=float)
        if np.any(np.diff(tenors) <= 0):
            raise ValidationError("tenors must be strictly increasing")
        if initial.shape != (len(tenors) - 1,):
            raise ValidationError(f"need {len(tenors) - 1} initial bucket forwards, got {initial.shape}")
        object.__setattr__(self, "tenors", tenors)
        object.__setattr__(self, "initial", initial)

    def bucket(self, T: float, T2: float) -> int:
        hits = np.flatnonzero(np.isclose(self.tenors[:-1], T) & np.isclose(self.tenors[1:], T2))
        if not len(hits):
            raise ValidationError(f"({T}, {T2}] is not a bucket of tenors {self.tenors.tolist()}")
        return int(hits[0])


def ikrs_coarse_forward(g: GaussianIkrsModel, t: float, T: float, T2: float, W) -> float:
    if not 0 <= t < T < T2:
        raise ValidationError(f"need 0 <= t < T < T', got t={t}, T={T}, T'={T2}")
    F0 = g.initial[g.bucket(T, T2)]
    load = (_rho(g.rho, T2) - _rho(g.rho, T)) / (T2 - T)
    return float(F0 + load @ np.atleast_1d(np.asarray(W, dtype=float)) + limit_drift(g.rho, T, T2) * t)


def gaussian_moments(rho: RhoFn, t: float, T: float, T2: float) -> tuple[float, float]:
    """Mean shift and variance of ``F_t(T, T') - F_0(T, T')`` in the limit."""
    load = (_rho(rho, T2) - _rho(rho, T)) / (T2 - T)
    return limit_drift(rho, T, T2) * t, float(load @ load) * t


def discretize(rho: RhoFn, dt: float, horizon: float) -> VolatilityTermStructure:
    """Grid structure whose cumulative loadings equal ``rho`` at every grid point."""
    H = grid_index(horizon, dt, "horizon")
    grid = np.array([_rho(rho, m * dt) for m in range(H + 1)])
    return VolatilityTermStructure.from_rho(dt, grid)


def discrete_moments(f: FactorDistribution, v: VolatilityTermStructure, t: float, T: float, T2: float):
    """Mean shift and variance of the lattice bucket forward at ``t``, summed over the level."""
    k = grid_index(t, f.dt, "time")
    i, j = v.index(T), v.index(T2)
    mu = stationary_drift(v, f)
    v = v.with_drift(mu)
    load = (v.rho[j] - v.rho[i]) / (T2 - T)
    drift = (v.rho0[j] - v.rho0[i]) / (T2 - T)
    _, w, p = level_states(f, k)
    x = w @ load + drift * t
    mean = float(p @ x)
    return mean, float(p @ (x - mean) ** 2)


@dataclass(frozen=True)
class ConvergenceRow:
    dt: float
    drift_err: float
    mean_err: float
    var_err: float


def convergence_test(
    rho: RhoFn,
    family: Callable[[float], FactorDistribution],
    T: float,
    T2: float,
    t: float,
    dts,
) -> list[ConvergenceRow]:
    """Drift and moment errors of the discrete bucket forward against the limit."""
    dts = list(dts)
    if len(dts) < 2:
        raise ValidationError("need at least two dt levels")
    lim_mean, lim_var = gaussian_moments(rho, t, T, T2)
    lim = limit_drift(rho, T, T2)
    rows = []
    for dt in dts:
        f = family(dt)
        v = discretize(rho, dt, T2)
        mean, var = discrete_moments(f, v, t, T, T2)
        rows.append(
            ConvergenceRow(
                dt=dt,
                drift_err=abs(coarse_drift(v, f, T, T2) - lim),
                mean_err=abs(mean - lim_mean),
                var_err=abs(var - lim_var),
            )
        )
    return rows
