"""Present value, durations, convexities, P&L expansions and hedging.

Leg weights at a node are ``a_l = CF_l * P^{M_l}_k / PV``.  Generalized
durations load each weight on ``rho[M_l] - rho[k]``, the factor exposure of
the log price of the leg.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HedgeError, ValidationError
from .lattice import LatticeNode
from .model import TermStructureModel, spot_rate

HEDGE_TOL = 1e-10


@dataclass(frozen=True)
class CashFlow:
    times: np.ndarray
    amounts: np.ndarray

    def __post_init__(self):
        times = np.atleast_1d(np.array(self.times, dtype=float))
        amounts = np.atleast_1d(np.array(self.amounts, dtype=float))
        if times.shape != amounts.shape or times.ndim != 1:
            raise ValidationError("cash flow times and amounts must be equal-length sequences")
        if np.any(np.diff(times) <= 0):
            raise ValidationError(f"cash flow maturities must be strictly increasing, got {times.tolist()}")
        if not np.all(np.isfinite(amounts)):
            raise ValidationError("cash flow amounts must be finite")
        times.setflags(write=False)
        amounts.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "amounts", amounts)

    def __len__(self):
        return len(self.times)


def combine(flows, weights) -> CashFlow:
    """Single cash flow holding ``weights[i]`` units of ``flows[i]``."""
    legs: dict[float, float] = {}
    for cf, wt in zip(flows, weights):
        for T, a in zip(cf.times, cf.amounts):
            key = round(float(T), 12)
            legs[key] = legs.get(key, 0.0) + wt * float(a)
    times = sorted(legs)
    return CashFlow(times, [legs[T] for T in times])


@dataclass(frozen=True)
class SensitivityReport:
    pv: float
    duration: float
    convexity: float
    gen_durations: np.ndarray
    gen_convexities: np.ndarray
    ito_d: np.ndarray
    ito_d2: float

    def as_dict(self) -> dict:
        return {
            "pv": self.pv,
            "duration": self.duration,
            "convexity": self.convexity,
            "gen_durations": self.gen_durations.tolist(),
            "gen_convexities": self.gen_convexities.tolist(),
            "ito_d": self.ito_d.tolist(),
            "ito_d2": self.ito_d2,
        }


def _legs(cf: CashFlow, m: TermStructureModel, node: LatticeNode) -> np.ndarray:
    M = np.array([m.index(T) for T in cf.times], dtype=int)
    if len(M) and (M.min() <= node.step or M.max() > m.horizon):
        raise ValidationError(
            f"cash flow legs must lie in ({node.step * m.dt}, {m.horizon * m.dt}], got {cf.times.tolist()}"
        )
    return M


def _discounts(cf: CashFlow, m: TermStructureModel, node: LatticeNode) -> np.ndarray:
    t = node.step * m.dt
    _legs(cf, m, node)
    r = np.array([spot_rate(m, node, T) for T in cf.times])
    return np.exp(-r * (cf.times - t))


def present_value(cf: CashFlow, m: TermStructureModel, node: LatticeNode) -> float:
    return float(np.sum(cf.amounts * _discounts(cf, m, node)))


def _weights(cf, m, node) -> tuple[float, np.ndarray]:
    pv_legs = cf.amounts * _discounts(cf, m, node)
    pv = float(pv_legs.sum())
    if pv == 0.0:
        raise ValidationError("present value is zero; relative sensitivities undefined")
    return pv, pv_legs / pv


def duration(cf: CashFlow, m: TermStructureModel, node: LatticeNode) -> float:
    _, a = _weights(cf, m, node)
    return float(a @ (cf.times - node.step * m.dt))


def convexity(cf: CashFlow, m: TermStructureModel, node: LatticeNode) -> float:
    _, a = _weights(cf, m, node)
    return float(a @ (cf.times - node.step * m.dt) ** 2)


def _exposures(cf, m, node) -> np.ndarray:
    M = _legs(cf, m, node)
    return m.v.rho[M] - m.v.rho[node.step]


def generalized_durations(cf: CashFlow, m: TermStructureModel, node: LatticeNode) -> np.ndarray:
    _, a = _weights(cf, m, node)
    return a @ _exposures(cf, m, node)


def generalized_convexities(cf: CashFlow, m: TermStructureModel, node: LatticeNode) -> np.ndarray:
    _, a = _weights(cf, m, node)
    G = _exposures(cf, m, node)
    c = (G * a[:, None]).T @ G
    return 0.5 * (c + c.T)


def _drift_exponent(cf, m, node) -> np.ndarray:
    """Deterministic part of ``log(P^M_{k+1} / P^M_k)`` per leg: ``dt F_k(k)`` less the drift increments."""
    k = node.step
    M = _legs(cf, m, node)
    fw = m.forwards(k, node.w)
    if m.drift_rule == "stationary":
        inc = m.dt * (m.v.rho0[M] - m.v.rho0[k + 1])
    else:
        cum = np.concatenate([[0.0], np.cumsum(m.mu_ttm[: m.horizon])])
        # increment of F(j) at step k+1 is dt * mu_ttm[j - k - 1], summed over j = k+1..M-1
        inc = m.dt**2 * cum[M - k - 1]
    return m.dt * fw[0] - inc


def _leg_exponents(cf, m, node) -> np.ndarray:
    """``log(P^{M_l}_{k+1}(s) / P^{M_l}_k)``, shape ``(legs, n + 1)``, from the drift law alone."""
    k = node.step
    M = _legs(cf, m, node)
    load = m.v.rho[M] - m.v.rho[k + 1]
    return _drift_exponent(cf, m, node)[:, None] - load @ m.f.outcomes.T


def ito_coefficients(cf: CashFlow, m: TermStructureModel, node: LatticeNode) -> tuple[np.ndarray, float]:
    """``(D~_j, D~^2)`` with ``dPV/PV = -sum_j D~_j dw^j + D~^2 dt / 2`` exactly."""
    if node.step >= m.horizon:
        raise ValidationError("no step left after this node")
    _, a = _weights(cf, m, node)
    g = a @ np.expm1(_leg_exponents(cf, m, node))
    d = -m.f.outcomes.T @ (m.f.probs * g) / m.dt
    d2 = 2.0 * float(m.f.probs @ g) / m.dt
    return d, d2


def ito_pnl(cf: CashFlow, m: TermStructureModel, node: LatticeNode, s: int):
    """Exact relative P&L over one step into outcome ``s`` and its coefficients."""
    if not 0 <= s <= m.n:
        raise ValidationError(f"outcome {s} outside 0..{m.n}")
    d, d2 = ito_coefficients(cf, m, node)
    value = float(-d @ m.f.outcomes[s] + 0.5 * d2 * m.dt)
    return value, d, d2


def taylor_pnl(cf: CashFlow, m: TermStructureModel, node: LatticeNode, s: int) -> float:
    """Second-order expansion of the relative P&L into outcome ``s``.

    First order ``-<G, dw>`` with ``G`` the generalized durations, second
    order ``sum_l a_l <G_l, dw>^2 / 2`` and the deterministic carry of each leg.
    """
    if not 0 <= s <= m.n:
        raise ValidationError(f"outcome {s} outside 0..{m.n}")
    _, a = _weights(cf, m, node)
    G = _exposures(cf, m, node)
    x = G @ m.f.outcomes[s]
    return float(-a @ x + 0.5 * a @ x**2 + a @ _drift_exponent(cf, m, node))


def report(cf: CashFlow, m: TermStructureModel, node: LatticeNode) -> SensitivityReport:
    pv = present_value(cf, m, node)
    if node.step < m.horizon:
        d, d2 = ito_coefficients(cf, m, node)
    else:
        d, d2 = np.full(m.n, np.nan), float("nan")
    return SensitivityReport(
        pv=pv,
        duration=duration(cf, m, node),
        convexity=convexity(cf, m, node),
        gen_durations=generalized_durations(cf, m, node),
        gen_convexities=generalized_convexities(cf, m, node),
        ito_d=d,
        ito_d2=d2,
    )


def _exposure_rows(cf, m, node, mode) -> np.ndarray:
    """PV-weighted first (and second) order exposures as one column."""
    pv, _ = _weights(cf, m, node)
    rows = [pv * generalized_durations(cf, m, node)]
    if mode == "delta-gamma":
        iu = np.triu_indices(m.n)
        rows.append(pv * generalized_convexities(cf, m, node)[iu])
    return np.concatenate(rows)


def hedge(target: CashFlow, instruments, m: TermStructureModel, node: LatticeNode, mode: str = "delta") -> np.ndarray:
    """Units of each instrument that zero the combined factor exposures.

    Square systems are solved directly, overdetermined ones by least squares
    and underdetermined ones by minimum norm.  A rank-deficient system raises
    ``HedgeError`` carrying the rank and singular values.
    """
    if mode not in ("delta", "delta-gamma"):
        raise ValidationError(f"unknown hedge mode {mode!r}")
    instruments = list(instruments)
    if not instruments:
        raise ValidationError("need at least one hedging instrument")
    A = np.column_stack([_exposure_rows(cf, m, node, mode) for cf in instruments])
    b = -_exposure_rows(target, m, node, mode)
    scale = np.max(np.abs(A), axis=1, keepdims=True)
    scale[scale == 0] = 1.0
    As, bs = A / scale, b / scale[:, 0]
    sv = np.linalg.svd(As, compute_uv=False)
    rank = int(np.sum(sv > HEDGE_TOL * max(sv.max(initial=0.0), 1e-300)))
    if rank < min(As.shape):
        raise HedgeError(
            f"hedge system of shape {As.shape} has rank {rank}; singular values {sv.tolist()}",
            rank=rank,
            singular_values=sv,
        )
    if As.shape[0] == As.shape[1]:
        return np.linalg.solve(As, bs)
    return np.linalg.lstsq(As, bs, rcond=None)[0]
