"""Arbitrage-free drifts.

The stationary drift is built from

    psi[m] = log E[exp(-<rho[m], dw>)]

evaluated exactly over the n + 1 outcomes.  With ``psi[-1] = 0`` the drift is
``mu[m] = (psi[m] - psi[m-1]) / dt**2``, so that ``rho0[m] = psi[m] / dt``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError
from .factors import FactorDistribution
from .volstruct import VolatilityTermStructure

DriftMap = Callable[[np.ndarray | int], np.ndarray]


def _check_shared(v: VolatilityTermStructure, f: FactorDistribution):
    if v.n != f.n:
        raise ValidationError(f"volatility has {v.n} factors but the factor distribution has {f.n}")
    if abs(v.dt - f.dt) > 1e-12 * max(1.0, v.dt):
        raise ValidationError(f"volatility dt={v.dt} differs from factor dt={f.dt}")


def log_discount_mgf(v: VolatilityTermStructure, f: FactorDistribution) -> np.ndarray:
    """``psi[m]`` for every grid point."""
    _check_shared(v, f)
    return f.log_mgf(-v.rho)


def stationary_drift(v: VolatilityTermStructure, f: FactorDistribution) -> np.ndarray:
    psi = log_discount_mgf(v, f)
    return np.diff(psi, prepend=0.0) / v.dt**2


def _check_pi(pi):
    if not 0.0 < pi < 1.0:
        raise ValidationError(f"pi must lie in (0, 1), got {pi}")


def classical_drift(pi: float, sigma: float) -> DriftMap:
    """Single-factor drift on the unit grid; ``pi`` weighs the up move ``dw = +1``."""
    _check_pi(pi)
    lp, lq = np.log(pi), np.log1p(-pi)

    def mu(T):
        T = np.asarray(T, dtype=float)
        num = np.logaddexp(lp - (T + 1) * sigma, lq + (T + 1) * sigma)
        den = np.logaddexp(lp - T * sigma, lq + T * sigma)
        return num - den

    return mu


def multi_drift(pi, sigma, f: FactorDistribution) -> DriftMap:
    pi = np.asarray(pi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if pi.shape != f.probs.shape or np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-12:
        raise ValidationError(f"pi must be a strictly positive probability on {len(f.probs)} outcomes")
    if sigma.shape != (f.n,):
        raise ValidationError(f"sigma must have length {f.n}")
    x = f.outcomes @ sigma
    lp = np.log(pi)

    def mu(T):
        T = np.asarray(T, dtype=float)[..., None]
        return logsumexp(lp - (T + 1) * x, axis=-1) - logsumexp(lp - T * x, axis=-1)

    return mu


def coarse_drift(v: VolatilityTermStructure, f: FactorDistribution, T1: float, T2: float) -> float:
    if T2 <= T1:
        raise ValidationError(f"bucket end {T2} must exceed start {T1}")
    i, j = v.index(T1), v.index(T2)
    _check_shared(v, f)
    psi_i, psi_j = f.log_mgf(-v.rho[[i, j]])
    return float((psi_j - psi_i) / (v.dt * (T2 - T1)))
