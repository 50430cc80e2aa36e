"""Volatility term structure on the fine grid and coarse tenor-bucket matrices.

Grid point ``m`` is maturity ``T = m * dt`` for ``m = 0..horizon``.  Entry
``sigma[m]`` is the loading of the one-period forward accruing over
``((m-1) dt, m dt]``, so the one-period forward starting at ``j dt`` loads
``sigma[j + 1]``.  ``sigma[0]`` and ``mu[0]`` only shift ``rho`` and ``rho0``
by a constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

GRID_TOL = 1e-9


def grid_index(T: float, dt: float, what: str = "maturity") -> int:
    """Integer grid index of ``T``, rejecting points off the ``dt`` grid."""
    m = int(round(T / dt))
    if abs(m * dt - T) > GRID_TOL * max(1.0, abs(T)):
        raise ValidationError(f"{what} {T!r} is not a multiple of dt={dt!r}")
    return m


@dataclass(frozen=True)
class VolatilityTermStructure:
    dt: float
    sigma: np.ndarray
    mu: np.ndarray | None = None
    rho: np.ndarray = field(init=False)
    rho0: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        sigma = np.array(self.sigma, dtype=float)
        if sigma.ndim == 1:
            sigma = sigma[:, None]
        if sigma.ndim != 2 or sigma.shape[0] < 1:
            raise ValidationError(f"sigma must be (horizon+1, n), got shape {sigma.shape}")
        mu = np.zeros(len(sigma)) if self.mu is None else np.array(self.mu, dtype=float)
        if mu.shape != (len(sigma),):
            raise ValidationError(f"mu must have length {len(sigma)}, got shape {mu.shape}")
        if not (np.all(np.isfinite(sigma)) and np.all(np.isfinite(mu))):
            raise ValidationError("sigma and mu must be finite")
        rho = self.dt * np.cumsum(sigma, axis=0)
        rho0 = self.dt * np.cumsum(mu)
        for name, arr in (("sigma", sigma), ("mu", mu), ("rho", rho), ("rho0", rho0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.sigma.shape[1]

    @property
    def horizon(self) -> int:
        """Largest maturity index on the grid."""
        return len(self.sigma) - 1

    def index(self, T: float) -> int:
        m = grid_index(T, self.dt)
        if not 0 <= m <= self.horizon:
            raise ValidationError(f"maturity {T} outside grid 0..{self.horizon * self.dt}")
        return m

    def with_drift(self, mu) -> "VolatilityTermStructure":
        return VolatilityTermStructure(self.dt, self.sigma, mu)

    @classmethod
    def from_rho(cls, dt: float, rho, mu=None) -> "VolatilityTermStructure":
        """Structure whose cumulative loadings equal ``rho`` at every grid point."""
        rho = np.atleast_2d(np.asarray(rho, dtype=float).T).T
        sigma = np.diff(rho, axis=0, prepend=0.0) / dt
        return cls(dt, sigma, mu)


def cumulative_rho(v: VolatilityTermStructure, T: float) -> np.ndarray:
    return v.rho[v.index(T)]


@dataclass(frozen=True)
class CoarseVolMatrix:
    """Bucket loadings ``sigma[i]`` and drift ``mu[i]`` on ``(T_i, T_{i+1}]``."""

    tenors: np.ndarray
    sigma: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        tenors = np.array(self.tenors, dtype=float)
        sigma = np.array(self.sigma, dtype=float)
        mu = np.array(self.mu, dtype=float)
        if tenors.ndim != 1 or len(tenors) < 2:
            raise ValidationError("need at least two tenors")
        if np.any(np.diff(tenors) <= 0):
            raise ValidationError(f"tenors must be strictly increasing, got {tenors.tolist()}")
        if sigma.ndim == 1:
            sigma = sigma[:, None]
        k = len(tenors) - 1
        if sigma.shape[0] != k or mu.shape != (k,):
            raise ValidationError(
                f"{k} buckets need sigma of {k} rows and mu of length {k}, got {sigma.shape} and {mu.shape}"
            )
        for name, arr in (("tenors", tenors), ("sigma", sigma), ("mu", mu)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.sigma.shape[1]


def interpolate(c: CoarseVolMatrix, dt: float, horizon: int | None = None) -> VolatilityTermStructure:
    """Piecewise-constant fine structure: ``sigma(T) = sigma_i`` for ``T_i < T <= T_{i+1}``.

    The first bucket extends down to ``T = 0`` and the last one up to the
    horizon, which defaults to the last tenor.
    """
    idx = np.array([grid_index(T, dt, "tenor") for T in c.tenors])
    if idx[0] < 0:
        raise ValidationError("tenors must be nonnegative")
    if horizon is None:
        horizon = int(idx[-1])
    m = np.arange(horizon + 1)
    bucket = np.clip(np.searchsorted(idx, m, side="left") - 1, 0, len(idx) - 2)
    return VolatilityTermStructure(dt, c.sigma[bucket], c.mu[bucket])


def coarsen(v: VolatilityTermStructure, tenors) -> CoarseVolMatrix:
    tenors = np.asarray(tenors, dtype=float)
    if np.any(np.diff(tenors) <= 0):
        raise ValidationError(f"tenors must be strictly increasing, got {tenors.tolist()}")
    idx = np.array([v.index(T) for T in tenors])
    width = np.diff(tenors)
    sigma = np.diff(v.rho[idx], axis=0) / width[:, None]
    mu = np.diff(v.rho0[idx]) / width
    return CoarseVolMatrix(tenors, sigma, mu)
