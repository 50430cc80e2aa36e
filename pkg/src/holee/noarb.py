"""No-arbitrage checks: one-step martingale kernels and state-price densities.

For a node at step ``k`` and a maturity ``M > k`` define

    H(M, s) = P^M_{k+1}(child s) * P^{k+1}_k / P^M_k.

The model is arbitrage-free at the node when some strictly positive ``pi``
on the n + 1 outcomes satisfies ``sum_s pi_s H(M, s) = 1`` for every ``M``.
The row ``M = k + 1`` is ``sum(pi) = 1``.

The canonical density is ``D_k = exp(-<rho[k], w_k>)``; its one-step kernel is
``pi(s) = p_s exp(-<rho[k+1], dw(s)> - psi[k+1])``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import helmert

from .drift import log_discount_mgf
from .errors import ArbitrageError, ValidationError
from .factors import FactorDistribution, binary_ho_lee
from .lattice import Lattice, LatticeNode, build, level_states
from .model import ForwardCurve, TermStructureModel
from .volstruct import VolatilityTermStructure

POSITIVITY_TOL = 1e-10
EXACT_TOL = 1e-13


def canonical_kernel(v: VolatilityTermStructure, f: FactorDistribution, step: int) -> np.ndarray:
    """Risk-neutral one-step probabilities of the canonical density at ``step``."""
    psi = log_discount_mgf(v, f)
    x = -f.outcomes @ v.rho[step + 1] - psi[step + 1]
    return f.probs * np.exp(x)


@dataclass(frozen=True)
class StatePriceDensity:
    """Per-level density values.

    ``values`` is the density used for pricing, ``raw`` is ``exp(-<rho, w>)``
    and ``normalized`` is ``raw`` divided by its level mean.
    """

    raw: list[np.ndarray]
    normalized: list[np.ndarray]
    values: list[np.ndarray]
    level_means: np.ndarray


def canonical_spd(v: VolatilityTermStructure, lat: Lattice, initial: ForwardCurve | None = None) -> StatePriceDensity:
    """Canonical density on every lattice level.

    With ``initial`` the density is rescaled to ``P0^k * normalized`` so that it
    reprices the initial curve; otherwise ``values`` equals ``raw``.
    """
    if v.n != lat.n or abs(v.dt - lat.dt) > 1e-12 * max(1.0, v.dt):
        raise ValidationError("volatility structure and lattice disagree on n or dt")
    if lat.horizon > v.horizon:
        raise ValidationError(f"lattice horizon {lat.horizon} exceeds volatility horizon {v.horizon}")
    raw, norm, vals, means = [], [], [], []
    P0 = None if initial is None else initial.bonds()
    for k, lv in enumerate(lat.levels):
        d = np.exp(-lv.w @ v.rho[k])
        mean = float(lv.probs @ d)
        raw.append(d)
        norm.append(d / mean)
        means.append(mean)
        vals.append(d if P0 is None else P0[k] * d / mean)
    return StatePriceDensity(raw, norm, vals, np.array(means))


def conditional_expectation(lat: Lattice, values: np.ndarray, from_step: int, to_step: int) -> np.ndarray:
    """``E[X | F_to]`` for ``X`` given per node at ``from_step``, by backward induction."""
    if not 0 <= to_step <= from_step <= lat.horizon:
        raise ValidationError(f"cannot condition step {from_step} values on step {to_step}")
    out = np.asarray(values, dtype=float)
    p = lat.factor.probs
    for k in range(from_step - 1, to_step - 1, -1):
        out = out[lat.levels[k].children] @ p
    return out


def spd_bond_prices(spd: StatePriceDensity, lat: Lattice, step: int, T: float) -> np.ndarray:
    """``E[D_M | F_k] / D_k`` at every node of level ``step``."""
    M = int(round(T / lat.dt))
    if abs(M * lat.dt - T) > 1e-9 * max(1.0, T):
        raise ValidationError(f"maturity {T} is off the lattice grid")
    if M > lat.horizon:
        raise ValidationError(f"maturity {T} beyond lattice horizon {lat.horizon * lat.dt}")
    if M < step:
        raise ValidationError(f"maturity {T} precedes node time {step * lat.dt}")
    return conditional_expectation(lat, spd.values[M], M, step) / spd.values[step]


def spd_bond_price(spd: StatePriceDensity, lat: Lattice, node: LatticeNode, T: float) -> float:
    i = lat.index_of(node)
    return float(spd_bond_prices(spd, lat, node.step, T)[i])


def one_step_excess(m: TermStructureModel, step: int, w) -> np.ndarray:
    """``H(M, s) - 1`` for states ``w`` at ``step``: shape ``(N, H - step, n + 1)``, rows ``M = step+1..H``.

    Kept as an excess over one so that small moves do not lose precision.
    """
    if not 0 <= step < m.horizon:
        raise ValidationError(f"no one-step system at step {step} with horizon {m.horizon}")
    w = np.atleast_2d(np.asarray(w, dtype=float))
    lp = m.log_bonds(step, w)
    kids = w[:, None, :] + m.f.outcomes[None, :, :]
    lc = m.log_bonds(step + 1, kids)
    if not (np.all(np.isfinite(lp)) and np.all(np.isfinite(lc))):
        raise ValidationError(f"non-positive or non-finite bond prices at step {step}")
    logh = lc + lp[:, None, 1:2] - lp[:, None, 1:]
    return np.expm1(np.swapaxes(logh, 1, 2))


def solve_kernel(E: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Kernel closest to ``p`` with ``sum(pi) = 1`` and ``E pi = 0`` in the least-squares sense.

    ``E`` stacks ``H - 1`` per node.  Returns the kernels and the per-node max
    absolute residual of ``sum_s pi_s H(M, s) - 1``.
    """
    Q = helmert(len(p)).T  # orthonormal basis of sum-zero directions
    B = E @ Q
    z = np.einsum("nij,nj->ni", np.linalg.pinv(B), -(E @ p))
    pi = p + z @ Q.T
    resid = np.abs(np.einsum("nrj,nj->nr", E, pi) + (pi.sum(axis=-1, keepdims=True) - 1.0))
    return pi, resid.max(axis=-1)


@dataclass
class MartingaleReport:
    level_errors: np.ndarray
    kernels: list[np.ndarray]
    min_kernel: float

    @property
    def max_error(self) -> float:
        return float(self.level_errors.max()) if len(self.level_errors) else 0.0

    @property
    def arbitrage(self) -> bool:
        """No strictly positive kernel solves every one-step system to within the tolerance."""
        return self.min_kernel <= POSITIVITY_TOL or self.max_error > POSITIVITY_TOL


def _level_w(m: TermStructureModel, step: int) -> np.ndarray:
    if m.lat is not None and step <= m.lat.horizon:
        return m.lat.levels[step].w
    return level_states(m.f, step)[1]


def _kernel_candidates(m: TermStructureModel, k: int, E: np.ndarray):
    """Closed-form canonical kernel first (stationary models), then the least-squares one."""
    if m.drift_rule == "stationary":
        pi = np.broadcast_to(canonical_kernel(m.v, m.f, k), E.shape[::2])
        resid = np.abs(np.einsum("nrj,nj->nr", E, pi) + (pi.sum(axis=-1, keepdims=True) - 1.0))
        yield pi, resid.max(axis=-1)
    yield solve_kernel(E, m.f.probs)


def _best_kernel(m: TermStructureModel, k: int, w) -> tuple[np.ndarray, np.ndarray]:
    """Per node, the first strictly positive candidate that solves the system to rounding level,
    else the positive candidate with the smallest residual.

    The rows for different maturities are nearly collinear, so a least-squares
    kernel is only as accurate as the conditioning allows; an exact closed form
    is kept whenever it works.  Nodes with no positive candidate keep the last
    candidate, whose non-positive entry then flags the arbitrage.
    """
    E = one_step_excess(m, k, w)
    best_pi, best_res, best_score, settled = None, None, None, None
    for pi, res in _kernel_candidates(m, k, E):
        positive = pi.min(axis=-1) > POSITIVITY_TOL
        score = np.where(positive, res, np.inf)
        if best_pi is None:
            best_pi, best_res, best_score = pi.copy(), res.copy(), score
            settled = positive & (res <= EXACT_TOL)
            continue
        take = ~settled & ((score < best_score) | ~np.isfinite(best_score))
        best_pi[take], best_res[take] = pi[take], res[take]
        best_score = np.where(take, score, best_score)
        settled |= positive & (res <= EXACT_TOL)
    return best_pi, best_res


def martingale_report(m: TermStructureModel, depth: int | None = None) -> MartingaleReport:
    """Per-level max residual of the one-step condition over steps ``0..depth-1``."""
    depth = m.horizon if depth is None else min(depth, m.horizon)
    errors, kernels, lowest = [], [], np.inf
    for k in range(depth):
        pi, resid = _best_kernel(m, k, _level_w(m, k))
        errors.append(float(resid.max()))
        kernels.append(pi)
        lowest = min(lowest, float(pi.min()))
    return MartingaleReport(np.array(errors), kernels, lowest if kernels else 1.0)


def verify_martingale(m: TermStructureModel, depth: int | None = None) -> float:
    """Max absolute deviation of ``E^pi[H] = 1`` over nodes and maturities.

    Raises ``ArbitrageError`` when a node admits no strictly positive kernel.
    """
    rep = martingale_report(m, depth)
    if rep.arbitrage:
        raise ArbitrageError(
            f"no strictly positive risk-neutral kernel: min probability {rep.min_kernel:.3e}, "
            f"max residual {rep.max_error:.3e}"
        )
    return rep.max_error


def risk_neutral_probs(m: TermStructureModel, node: LatticeNode) -> np.ndarray:
    pi, resid = _best_kernel(m, node.step, node.w)
    pi = pi[0]
    if pi.min() <= POSITIVITY_TOL:
        raise ArbitrageError(f"kernel at step {node.step}, counts {node.counts} is not positive: {pi.tolist()}")
    if resid[0] > 1e-8:
        raise ArbitrageError(f"one-step system at step {node.step} has residual {resid[0]:.3e}")
    return pi


def _one_period_log_bond(m: TermStructureModel, step: int, w: np.ndarray) -> np.ndarray:
    return m.log_bonds(step, w)[..., 1]


def nas_equivalence_check(m: TermStructureModel, depth: int = 8, scale: float = 3.7) -> dict[str, float]:
    """Round trips between kernels and densities on a lattice of ``depth`` steps.

    Densities live on lattice nodes.  When the model's density depends on the
    path (the time-to-maturity drift rule is an example) ``density_paths``
    reports the disagreement and the later keys compare against whichever
    parent was swept last.

    Keys:
      ``martingale``      max residual of the solved kernels
      ``density_paths``   disagreement of densities built from kernels along different parents
      ``kernel_roundtrip`` kernels recovered from that density vs the solved ones
      ``one_step``        ``E[D_{k+1} | F_k] / D_k`` vs the one-period bond
      ``spd_prices``      density prices vs model prices for maturities up to ``depth``
      ``scale``           kernels recovered from ``scale * D`` vs from ``D``
      ``canonical``       density vs the curve-consistent canonical density (stationary models)
    """
    depth = min(depth, m.horizon)
    lat = m.lat if m.lat is not None and m.lat.horizon >= depth else build(m.f, depth)
    p = m.f.probs
    rep = martingale_report(m, depth)
    D = [np.ones(1)]
    path_err = 0.0
    for k in range(depth):
        lv = lat.levels[k]
        step_bond = np.exp(_one_period_log_bond(m, k, lv.w))
        cand = D[k][:, None] * rep.kernels[k] / p * step_bond[:, None]
        nxt = np.full(len(lat.levels[k + 1]), np.nan)
        for s in range(m.n + 1):
            idx = lv.children[:, s]
            seen = ~np.isnan(nxt[idx])
            if np.any(seen):
                path_err = max(path_err, float(np.max(np.abs(nxt[idx][seen] / cand[seen, s] - 1.0))))
            nxt[idx] = cand[:, s]
        D.append(nxt)

    def kernels_from(dens):
        out = []
        for k in range(depth):
            lv = lat.levels[k]
            step_bond = np.exp(_one_period_log_bond(m, k, lv.w))
            out.append(p * dens[k + 1][lv.children] / (dens[k][:, None] * step_bond[:, None]))
        return out

    back = kernels_from(D)
    scaled = kernels_from([scale * d for d in D])
    kernel_err = max(float(np.max(np.abs(a - b))) for a, b in zip(back, rep.kernels))
    scale_err = max(float(np.max(np.abs(a - b))) for a, b in zip(back, scaled))

    one_step = 0.0
    for k in range(depth):
        lv = lat.levels[k]
        ratio = (D[k + 1][lv.children] @ p) / D[k]
        one_step = max(one_step, float(np.max(np.abs(ratio / np.exp(_one_period_log_bond(m, k, lv.w)) - 1.0))))

    price_err = 0.0
    for k in range(depth + 1):
        model_p = np.exp(m.log_bonds(k, lat.levels[k].w))
        for M in range(k, depth + 1):
            sp = conditional_expectation(lat, D[M], M, k) / D[k]
            price_err = max(price_err, float(np.max(np.abs(sp - model_p[:, M - k]))))

    out = {
        "martingale": rep.max_error,
        "density_paths": path_err,
        "kernel_roundtrip": kernel_err,
        "one_step": one_step,
        "spd_prices": price_err,
        "scale": scale_err,
    }
    if m.drift_rule == "stationary":
        spd = canonical_spd(m.v, lat, m.initial)
        out["canonical"] = max(float(np.max(np.abs(a / b - 1.0))) for a, b in zip(D, spd.values))
    return out


def yield_stationary_residual(c: float = 0.01, steps: int = 5, max_T: int = 10) -> float:
    """Arbitrage residual of a yield-parameterised stationary model.

    Bonds with ``T`` periods left are ``exp(-T (c T w + nu(T) t))`` on the unit
    binary tree, with ``nu`` chosen so the root is a martingale under the
    real-world probabilities.  At each node the one-step residual is minimised
    over every affine ``pi`` (``sum(pi) = 1``, no sign constraint); the largest
    such minimum over nodes bounds from below the residual any kernel can reach.
    """
    f = binary_ho_lee(1.0)
    Ts = np.arange(1, max_T + 2, dtype=float)
    vol = c * Ts
    nu = np.log(np.cosh(Ts * vol)) / Ts

    def log_p(t, w, T_idx):
        T = Ts[T_idx]
        return -T * (vol[T_idx] * w + nu[T_idx] * t)

    worst = 0.0
    rows = np.arange(max_T)
    for t in range(steps):
        for w in level_states(f, t)[1][:, 0]:
            A = np.empty((max_T, 2))
            for s, dw in enumerate(f.outcomes[:, 0]):
                A[:, s] = np.exp(log_p(t + 1, w + dw, rows) + log_p(t, w, 0) - log_p(t, w, rows + 1))
            d = A[:, 0] - A[:, 1]
            r0 = A[:, 1] - 1.0
            q = -float(d @ r0) / float(d @ d) if d @ d > 0 else 0.0
            worst = max(worst, float(np.linalg.norm(r0 + q * d)))
    return worst
