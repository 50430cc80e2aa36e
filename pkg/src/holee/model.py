"""Stationary forward-rate model, node pricing and the classical closed forms.

At a node with step ``k`` and cumulative state ``w`` the one-period forward
over ``(j dt, (j+1) dt]`` is

    F_k(j) = F0[j] + <sigma[j+1], w> + mu[j+1] * k * dt

and bonds follow by summing forwards.  Nodes are priced from their counts
alone, so the model never needs a lattice as deep as its maturity grid.

Models with the classical time-to-maturity drift (``drift_rule="maturity"``)
replace the last term with ``dt * sum_{v=1..k} mu_ttm[j - v]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .factors import FactorDistribution
from .lattice import Lattice, LatticeNode
from .volstruct import VolatilityTermStructure, grid_index

DEFAULT_VERIFY_TOL = 1e-10
DEFAULT_VERIFY_DEPTH = 12


@dataclass(frozen=True)
class ForwardCurve:
    """One-period forwards ``values[i] = F_t((asof + i) dt)``."""

    asof: int
    dt: float
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise ValidationError("forward curve values must be a finite 1-d sequence")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def maturities(self) -> np.ndarray:
        return (self.asof + np.arange(len(self.values))) * self.dt

    def bonds(self) -> np.ndarray:
        """Discount factors to ``asof, asof+1, ..., asof+len`` steps."""
        return np.exp(-self.dt * np.concatenate([[0.0], np.cumsum(self.values)]))


class TermStructureModel:
    def __init__(
        self,
        f: FactorDistribution,
        v: VolatilityTermStructure,
        initial: ForwardCurve,
        lat: Lattice | None = None,
        drift_rule: str = "stationary",
        mu_ttm=None,
    ):
        if v.n != f.n or abs(v.dt - f.dt) > 1e-12 * max(1.0, f.dt):
            raise ValidationError("factor distribution and volatility structure disagree on n or dt")
        if initial.asof != 0 or abs(initial.dt - f.dt) > 1e-12 * max(1.0, f.dt):
            raise ValidationError("initial curve must be as of step 0 on the model grid")
        if len(initial.values) != v.horizon:
            raise ValidationError(
                f"initial curve needs {v.horizon} forwards to match the volatility horizon, got {len(initial.values)}"
            )
        if lat is not None and lat.n != f.n:
            raise ValidationError("lattice factor differs from model factor")
        if drift_rule not in ("stationary", "maturity"):
            raise ValidationError(f"unknown drift rule {drift_rule!r}")
        self.f = f
        self.v = v
        self.initial = initial
        self.lat = lat
        self.drift_rule = drift_rule
        H = v.horizon
        if drift_rule == "maturity":
            mu_ttm = np.asarray(mu_ttm, dtype=float)
            if mu_ttm.shape != (H,):
                raise ValidationError(f"maturity-rule drift needs {H} values, got shape {mu_ttm.shape}")
            self.mu_ttm = mu_ttm
            self._ttm_cum = np.concatenate([[0.0], np.cumsum(mu_ttm)])
        else:
            self.mu_ttm = None

    @property
    def dt(self) -> float:
        return self.f.dt

    @property
    def n(self) -> int:
        return self.f.n

    @property
    def horizon(self) -> int:
        return self.v.horizon

    def node(self, step: int, counts) -> LatticeNode:
        counts = tuple(int(c) for c in counts)
        if len(counts) != self.n + 1 or min(counts) < 0 or sum(counts) != step:
            raise ValidationError(f"counts {counts} are not a valid node key at step {step}")
        if not 0 <= step <= self.horizon:
            raise ValidationError(f"step {step} outside model horizon 0..{self.horizon}")
        return LatticeNode(step, counts, np.asarray(counts, dtype=float) @ self.f.outcomes)

    def index(self, T: float) -> int:
        return grid_index(T, self.dt)

    def _drift_part(self, step: int) -> np.ndarray:
        """Deterministic drift accumulated by ``F(j)``, ``j = step..H-1``, after ``step`` steps."""
        H = self.horizon
        if self.drift_rule == "stationary":
            return self.v.mu[step + 1 : H + 1] * step * self.dt
        j = np.arange(step, H)
        return self.dt * (self._ttm_cum[j] - self._ttm_cum[j - step])

    def forwards(self, step: int, w) -> np.ndarray:
        """Forwards ``F_k(j)`` for ``j = step..H-1``; ``w`` may be a stack of states."""
        w = np.asarray(w, dtype=float)
        H = self.horizon
        return self.initial.values[step:H] + w @ self.v.sigma[step + 1 : H + 1].T + self._drift_part(step)

    def log_bonds(self, step: int, w) -> np.ndarray:
        """``log P^M_k`` for ``M = step..H`` (last axis)."""
        fw = self.forwards(step, w)
        zero = np.zeros(fw.shape[:-1] + (1,))
        return np.concatenate([zero, -self.dt * np.cumsum(fw, axis=-1)], axis=-1)

    def _check_node(self, node: LatticeNode):
        if not 0 <= node.step <= self.horizon:
            raise ValidationError(f"node step {node.step} outside model horizon 0..{self.horizon}")
        if len(node.counts) != self.n + 1 or sum(node.counts) != node.step:
            raise ValidationError(f"node counts {node.counts} do not match step {node.step}")

    def _maturity(self, node: LatticeNode, T: float, lo: int, hi: int) -> int:
        M = self.index(T)
        if not lo <= M <= hi:
            raise ValidationError(
                f"maturity {T} outside [{lo * self.dt}, {hi * self.dt}] at node step {node.step}"
            )
        return M


def forward_curve(m: TermStructureModel, node: LatticeNode) -> ForwardCurve:
    m._check_node(node)
    return ForwardCurve(node.step, m.dt, m.forwards(node.step, node.w))


def forward_at_node(m: TermStructureModel, node: LatticeNode, T: float) -> float:
    m._check_node(node)
    j = m._maturity(node, T, node.step, m.horizon - 1)
    return float(m.forwards(node.step, node.w)[j - node.step])


def bond_price(m: TermStructureModel, node: LatticeNode, T: float) -> float:
    m._check_node(node)
    M = m._maturity(node, T, node.step, m.horizon)
    fw = m.forwards(node.step, node.w)[: M - node.step]
    return float(np.exp(-m.dt * fw.sum()))


def forward_from_bonds(m: TermStructureModel, node: LatticeNode, T: float) -> float:
    m._check_node(node)
    j = m._maturity(node, T, node.step, m.horizon - 1)
    T1 = (j + 1) * m.dt
    return float(np.log(bond_price(m, node, j * m.dt) / bond_price(m, node, T1)) / m.dt)


def spot_rate(m: TermStructureModel, node: LatticeNode, T: float) -> float:
    m._check_node(node)
    M = m._maturity(node, T, node.step, m.horizon)
    if M == node.step:
        raise ValidationError("spot rate undefined at the node's own time")
    return float(-np.log(bond_price(m, node, T)) / ((M - node.step) * m.dt))


def coarse_forward(m: TermStructureModel, node: LatticeNode, T: float, T2: float) -> float:
    m._check_node(node)
    M1 = m._maturity(node, T, node.step, m.horizon)
    M2 = m._maturity(node, T2, node.step, m.horizon)
    if M2 <= M1:
        raise ValidationError(f"coarse forward needs T' > T, got {T2} <= {T}")
    t = node.step * m.dt

    def accrued(M, TM):
        return 0.0 if M == node.step else spot_rate(m, node, TM) * (M * m.dt - t)

    return float((accrued(M2, T2) - accrued(M1, T)) / ((M2 - M1) * m.dt))


def assemble(
    f: FactorDistribution,
    v: VolatilityTermStructure,
    initial: ForwardCurve,
    verify: bool = True,
    tol: float = DEFAULT_VERIFY_TOL,
    depth: int | None = None,
    **kwargs,
) -> TermStructureModel:
    """Build a model, optionally certifying the one-step martingale condition.

    ``depth`` bounds the number of lattice steps checked; it defaults to
    ``min(horizon, DEFAULT_VERIFY_DEPTH)``.
    """
    m = TermStructureModel(f, v, initial, **kwargs)
    if verify:
        from .noarb import verify_martingale

        if depth is None:
            depth = min(m.horizon, DEFAULT_VERIFY_DEPTH)
        err = verify_martingale(m, depth=depth)
        if not err <= tol:
            raise ValidationError(f"model fails martingale verification: max error {err:.3e} > {tol:g}")
    return m


def maturity_rule_model(f: FactorDistribution, sigma, mu_ttm, initial: ForwardCurve) -> TermStructureModel:
    """Classical model: constant forward loading ``sigma`` and drift by time to maturity."""
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    H = len(initial.values)
    v = VolatilityTermStructure(f.dt, np.tile(sigma, (H + 1, 1)))
    return TermStructureModel(f, v, initial, drift_rule="maturity", mu_ttm=mu_ttm)


def _double_drift_sum(mu, t: int, T: int) -> float:
    total = 0.0
    for s in range(t):
        total += float(np.sum(mu(np.arange(s, s + T))))
    return total


def ho_lee_closed_form(P0, sigma: float, mu, t: int, i: int, T: int) -> float:
    """Price at step ``t``, ``i`` up moves, of the bond with ``T`` periods left."""
    if not 0 <= i <= t:
        raise ValidationError(f"up-move count {i} outside 0..{t}")
    P0 = np.asarray(P0, dtype=float)
    return float(P0[t + T] / P0[t] * np.exp(-T * sigma * (2 * i - t) - _double_drift_sum(mu, t, T)))


def multi_closed_form(P0, sigma, mu, t: int, w, T: int) -> float:
    P0 = np.asarray(P0, dtype=float)
    x = float(np.dot(np.asarray(sigma, dtype=float), np.asarray(w, dtype=float)))
    return float(P0[t + T] / P0[t] * np.exp(-T * x - _double_drift_sum(mu, t, T)))


def perturbation_functions(pi: float, sigma: float):
    if not 0.0 < pi < 1.0:
        raise ValidationError(f"pi must lie in (0, 1), got {pi}")
    delta = np.exp(2.0 * sigma)

    def h(T):
        return 1.0 / (pi + (1.0 - pi) * delta ** np.asarray(T, dtype=float))

    def h_star(T):
        dT = delta ** np.asarray(T, dtype=float)
        return dT / (pi + (1.0 - pi) * dT)

    return h, h_star
