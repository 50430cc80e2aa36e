"""Principal components of bucket-forward increments and volatility calibration."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .volstruct import CoarseVolMatrix

EIG_CLAMP = 1e-14


@dataclass(frozen=True)
class SampleSet:
    """``N`` per-step increments of ``k`` bucket forwards."""

    increments: np.ndarray
    tenors: np.ndarray

    def __post_init__(self):
        y = np.atleast_2d(np.array(self.increments, dtype=float))
        tenors = np.array(self.tenors, dtype=float)
        if len(y) < 2:
            raise ValidationError(f"need at least 2 samples, got {len(y)}")
        if not np.all(np.isfinite(y)):
            raise ValidationError("samples must be finite")
        if tenors.ndim != 1 or len(tenors) != y.shape[1] + 1:
            raise ValidationError(f"{y.shape[1]} bucket columns need {y.shape[1] + 1} tenors, got {len(tenors)}")
        object.__setattr__(self, "increments", y)
        object.__setattr__(self, "tenors", tenors)

    @classmethod
    def from_levels(cls, levels, tenors) -> "SampleSet":
        return cls(np.diff(np.asarray(levels, dtype=float), axis=0), tenors)


@dataclass(frozen=True)
class PcaResult:
    mean: np.ndarray | None
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    n: int

    @property
    def loadings(self) -> np.ndarray:
        """``X Lambda^{1/2}`` restricted to the first ``n`` components, shape ``(k, n)``."""
        return self.eigenvectors[:, : self.n] * np.sqrt(self.eigenvalues[: self.n])

    @property
    def explained(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        if total == 0:
            return np.ones_like(self.eigenvalues)
        return np.cumsum(self.eigenvalues) / total


def covariance(s: SampleSet) -> np.ndarray:
    y = s.increments - s.increments.mean(axis=0)
    c = y.T @ y / len(y)
    return 0.5 * (c + c.T)


def decompose(C) -> PcaResult:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValidationError(f"covariance must be square, got shape {C.shape}")
    if not np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max())):
        raise ValidationError("covariance matrix is not symmetric")
    lam, X = np.linalg.eigh(C)
    order = np.argsort(lam)[::-1]
    lam, X = lam[order], X[:, order]
    lam = np.where(np.abs(lam) < EIG_CLAMP * max(1.0, lam.max(initial=0.0)), 0.0, lam)
    if np.any(lam < 0):
        raise ValidationError(f"covariance has a negative eigenvalue {lam.min():.3e}")
    # largest-magnitude entry positive, first index on ties
    pivot = np.argmax(np.abs(X) >= np.abs(X).max(axis=0) - 1e-12, axis=0)
    X = X * np.where(X[pivot, np.arange(X.shape[1])] < 0, -1.0, 1.0)
    return PcaResult(None, lam, X, len(lam))


def select_factors(r: PcaResult, n: int | None = None, theta: float | None = None) -> int:
    """Fixed ``n``, or the smallest ``n`` explaining at least ``theta`` of the variance."""
    if (n is None) == (theta is None):
        raise ValidationError("give exactly one of a fixed factor count or a variance threshold")
    if n is not None:
        if not 1 <= n <= len(r.eigenvalues):
            raise ValidationError(f"factor count {n} outside 1..{len(r.eigenvalues)}")
        return int(n)
    if not 0.0 < theta <= 1.0:
        raise ValidationError(f"variance threshold must lie in (0, 1], got {theta}")
    if r.eigenvalues.sum() == 0:
        return 1
    if theta == 1.0:
        return max(1, int(np.sum(r.eigenvalues > 0)))
    return int(np.searchsorted(r.explained, theta - 1e-15) + 1)


def calibrate(s: SampleSet, dt: float, n: int | None = None, theta: float | None = None):
    """Coarse volatility matrix from increments observed every ``dt`` years.

    The drift column ``mean / dt`` is the statistical estimate only; pricing
    drifts come from the drift condition.
    """
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    r = decompose(covariance(s))
    r = replace(r, mean=s.increments.mean(axis=0))
    r = replace(r, n=select_factors(r, n=n, theta=theta))
    sigma = r.loadings / np.sqrt(dt)
    return CoarseVolMatrix(s.tenors, sigma, r.mean / dt), r
