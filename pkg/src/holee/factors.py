"""Finite-state factor increments built from orthogonal matrices.

A factor increment is an R^n valued random variable taking n + 1 distinct
values with mean zero and covariance ``dt * I``.  Equivalently, the functions
``{1, dw^1/sqrt(dt), ..., dw^n/sqrt(dt)}`` form an orthonormal basis of the
functions on the n + 1 outcomes under ``<x, y> = E[xy]``.  Any orthogonal
(n+1)x(n+1) matrix whose first row is strictly positive produces one:

    prob_j     = m[0, j] ** 2
    dw^i(j)    = sqrt(dt) * m[i, j] / m[0, j]

Outcomes are labelled 0..n in matrix-column order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import helmert

from .errors import ValidationError

MAX_FACTORS = 6
ORTHO_TOL = 1e-10
MOMENT_TOL = 1e-12


@dataclass(frozen=True)
class OrthogonalSpec:
    """Orthogonal matrix with a strictly positive first row."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise ValidationError(f"orthogonal matrix must be square with size >= 2, got shape {m.shape}")
        dev = float(np.max(np.abs(m @ m.T - np.eye(m.shape[0]))))
        if dev > ORTHO_TOL:
            raise ValidationError(f"matrix is not orthogonal: max |M M^T - I| = {dev:.3e} > {ORTHO_TOL:g}")
        if np.any(m[0] <= 0.0):
            bad = [int(j) for j in np.flatnonzero(m[0] <= 0.0)]
            raise ValidationError(f"first row must be strictly positive; offending columns {bad}")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @property
    def n(self) -> int:
        return self.m.shape[0] - 1


@dataclass(frozen=True)
class FactorDistribution:
    """The (n+1)-valued increment ``dw`` and its real-world probabilities.

    Attributes
    ----------
    dt : float
        Time step in years.
    outcomes : numpy.ndarray
        Shape ``(n + 1, n)``; row ``s`` is ``dw(s)``.
    probs : numpy.ndarray
        Shape ``(n + 1,)``.
    """

    dt: float
    outcomes: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        outcomes = np.atleast_2d(np.array(self.outcomes, dtype=float))
        probs = np.array(self.probs, dtype=float)
        if self.dt <= 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if outcomes.shape != (probs.size, probs.size - 1):
            raise ValidationError(
                f"outcomes must have shape (n+1, n) matching {probs.size} probabilities, got {outcomes.shape}"
            )
        if probs.size - 1 > MAX_FACTORS:
            raise ValidationError(f"at most {MAX_FACTORS} factors supported, got {probs.size - 1}")
        outcomes.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "probs", probs)

    @property
    def n(self) -> int:
        return self.outcomes.shape[1]

    def expect(self, values) -> np.ndarray:
        """Exact expectation of per-outcome values (last axis indexes outcomes)."""
        return np.asarray(values) @ self.probs

    def log_mgf(self, a) -> np.ndarray:
        """``log E[exp(<a, dw>)]`` for a vector or a stack of vectors ``a``.

        Evaluated with max-subtraction so large exponents do not overflow.
        Dividing by the probability sum keeps ``a = 0`` at exactly zero.
        """
        z = np.asarray(a, dtype=float) @ self.outcomes.T
        zmax = np.max(z, axis=-1, keepdims=True)
        return np.squeeze(zmax, -1) + np.log((np.exp(z - zmax) @ self.probs) / self.probs.sum())

    def to_orthogonal(self) -> np.ndarray:
        """Reconstruct the orthogonal matrix this distribution corresponds to."""
        root = np.sqrt(self.probs)
        rows = (self.outcomes.T / np.sqrt(self.dt)) * root
        return np.vstack([root, rows])


def from_orthogonal_matrix(spec: OrthogonalSpec | np.ndarray, dt: float) -> FactorDistribution:
    if not isinstance(spec, OrthogonalSpec):
        spec = OrthogonalSpec(spec)
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    m = spec.m
    probs = m[0] ** 2
    probs = probs / probs.sum()  # squares of 1/sqrt(k) can overshoot by an ulp
    outcomes = (np.sqrt(dt) * m[1:] / m[0]).T
    return FactorDistribution(dt=dt, outcomes=outcomes, probs=probs)


def binary_ho_lee(dt: float) -> FactorDistribution:
    """Symmetric coin toss: outcome 0 is ``+sqrt(dt)``, outcome 1 is ``-sqrt(dt)``."""
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    # same law as the 2x2 Hadamard spec, written out so the moments are exact
    r = np.sqrt(dt)
    return FactorDistribution(dt=dt, outcomes=np.array([[r], [-r]]), probs=np.array([0.5, 0.5]))


def simplex_factor(n: int, dt: float) -> FactorDistribution:
    """Equal-probability n-factor increment from the Helmert matrix."""
    if not 1 <= n <= MAX_FACTORS:
        raise ValidationError(f"factor count must be in 1..{MAX_FACTORS}, got {n}")
    return from_orthogonal_matrix(helmert(n + 1, full=True), dt)


def validate_moments(f: FactorDistribution) -> dict[str, float]:
    """Worst-case absolute deviation from each distribution invariant.

    Keys: ``prob_sum``, ``min_prob`` (negative part of the smallest
    probability), ``mean``, ``covariance``, ``distinct`` (1.0 when two outcomes
    coincide) and ``span`` (1.0 when ``dw(j) - dw(0)`` do not span R^n).
    """
    p, x = f.probs, f.outcomes
    mean = p @ x
    cov = (x * p[:, None]).T @ x - np.outer(mean, mean)
    diffs = x[1:] - x[0]
    distinct = len({tuple(row) for row in np.round(x, 14)}) == len(x)
    return {
        "prob_sum": float(abs(p.sum() - 1.0)),
        "min_prob": float(max(0.0, -p.min())),
        "mean": float(np.max(np.abs(mean))),
        "covariance": float(np.max(np.abs(cov - f.dt * np.eye(f.n)))),
        "distinct": 0.0 if distinct else 1.0,
        "span": 0.0 if np.linalg.matrix_rank(diffs) == f.n else 1.0,
    }


def check_moments(f: FactorDistribution, tol: float = MOMENT_TOL) -> None:
    """Raise if any invariant of ``f`` is violated beyond ``tol``."""
    report = validate_moments(f)
    if np.any(f.probs <= 0):
        raise ValidationError("probabilities must be strictly positive")
    bad = {k: v for k, v in report.items() if v > tol}
    if bad:
        raise ValidationError(f"factor distribution violates invariants: {bad}")


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a whitespace-separated matrix, one row per line."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValidationError(f"{path}: ragged or empty matrix")
    return np.array(rows)
