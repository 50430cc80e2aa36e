"""Command-line interface.

Settings come from a flat ``key=value`` config file (``--config``) and are
overridden by flags of the same name.  Exit status is 0 on success, 2 on a
validation failure and 3 on an I/O failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import sys
from pathlib import Path

import numpy as np

from . import io as hio
from .drift import stationary_drift
from .errors import HedgeError, ValidationError
from .factors import FactorDistribution, binary_ho_lee, simplex_factor
from .ikrs import convergence_test
from .lattice import LatticeNode, level_states, sample_path
from .model import ForwardCurve, TermStructureModel
from .noarb import martingale_report, nas_equivalence_check
from .pca import SampleSet, calibrate
from .sensitivity import CashFlow, hedge, present_value, report
from .volstruct import CoarseVolMatrix, VolatilityTermStructure, coarsen, grid_index, interpolate

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3
DEFAULT_TOL = 1e-10
MAX_VERIFY_DEPTH = 40
HISTORY_START = _dt.date(2000, 1, 3)


def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


class Settings:
    """Flag values with config-file fallback."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = read_config(args.config) if args.config else {}

    def get(self, name: str, cast=str, default=None, required: bool = False):
        value = getattr(self.args, name, None)
        if value is None and name in self.config:
            raw = self.config[name]
            try:
                value = cast(raw)
            except ValueError:
                raise ValidationError(f"config key {name}: cannot parse {raw!r}") from None
        if value is None:
            if required:
                raise ValidationError(f"missing setting {name!r} (flag --{name.replace('_', '-')} or config key)")
            return default
        return value


def _tenor_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse tenor list {text!r}") from None


def parse_node_spec(spec: str, n: int) -> tuple[int, tuple[int, ...]]:
    """``t=<step>:counts=<c0,...,cn>``."""
    try:
        left, right = spec.split(":")
        key1, step = left.split("=")
        key2, counts = right.split("=")
        if key1.strip() != "t" or key2.strip() != "counts":
            raise ValueError
        step = int(step)
        counts = tuple(int(c) for c in counts.split(","))
    except ValueError:
        raise ValidationError(f"bad node spec {spec!r}; expected t=<step>:counts=<c0,...,cn>") from None
    if len(counts) != n + 1 or min(counts) < 0 or sum(counts) != step:
        raise ValidationError(f"node spec {spec!r}: need {n + 1} nonnegative counts summing to {step}")
    return step, counts


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _factor(n: int, dt: float) -> FactorDistribution:
    return binary_ho_lee(dt) if n == 1 else simplex_factor(n, dt)


# bundle -------------------------------------------------------------------


def model_from_bundle(b: dict) -> TermStructureModel:
    try:
        dt = float(b["dt"])
        f = FactorDistribution(dt, np.array(b["factor"]["outcomes"]), np.array(b["factor"]["probs"]))
        v = VolatilityTermStructure(dt, np.array(b["sigma"]), np.array(b["mu"]))
        init = ForwardCurve(0, dt, np.array(b["initial_forwards"]))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed model bundle: missing or bad field {exc}") from None
    return TermStructureModel(f, v, init)


def _load_model(path) -> tuple[dict, TermStructureModel]:
    b = hio.read_json(path)
    return b, model_from_bundle(b)


def _node(settings: Settings, m: TermStructureModel) -> LatticeNode:
    spec = settings.get("node")
    if spec is None:
        return m.node(0, (0,) * (m.n + 1))
    step, counts = parse_node_spec(spec, m.n)
    return m.node(step, counts)


def _cashflow(path) -> CashFlow:
    T, a = hio.read_cashflow_csv(path)
    return CashFlow(T, a)


# commands -----------------------------------------------------------------


def cmd_calibrate(args, settings: Settings) -> int:
    dt = settings.get("dt", float, required=True)
    tenors = _tenor_list(settings.get("tenors", required=True))
    _, levels = hio.read_history_csv(args.history)
    samples = SampleSet.from_levels(levels, tenors)
    n = settings.get("factors", int)
    theta = settings.get("theta", float)
    if n is None and theta is None:
        theta = 0.99
    elif n is not None and theta is not None:
        theta = None
    c, r = calibrate(samples, dt, n=n, theta=theta)
    out = settings.get("out")
    _emit(hio.write_vol_csv(c), out)
    rep = {
        "n": r.n,
        "eigenvalues": r.eigenvalues,
        "explained_variance": r.explained,
        "loadings": r.loadings,
        "mean": r.mean,
        "samples": len(samples.increments),
        "tenors": samples.tenors,
    }
    rpath = settings.get("report") or (f"{out}.report.json" if out else None)
    if rpath:
        Path(rpath).write_text(hio.dumps(rep))
    return EXIT_OK


def build_bundle(c: CoarseVolMatrix, T, F0, dt: float, horizon_years: float, tol: float, csv_drift: bool) -> dict:
    H = grid_index(horizon_years, dt, "horizon")
    if H < 1:
        raise ValidationError("horizon must span at least one step")
    for T_ in c.tenors:
        grid_index(T_, dt, "tenor")
    grid = np.arange(H) * dt
    if len(T) != H or not np.allclose(T, grid, rtol=0, atol=1e-9):
        raise ValidationError(f"curve must list forwards at T = 0, {dt}, ..., {(H - 1) * dt} ({H} rows)")
    f = _factor(c.n, dt)
    v = interpolate(c, dt, H)
    if not csv_drift:
        v = v.with_drift(stationary_drift(v, f))
    m = TermStructureModel(f, v, ForwardCurve(0, dt, F0))
    depth = min(H, MAX_VERIFY_DEPTH)
    rep = martingale_report(m, depth)
    if rep.arbitrage or not rep.max_error <= tol:
        levels = ", ".join(f"{k}:{e:.3e}" for k, e in enumerate(rep.level_errors))
        raise ValidationError(
            f"model fails martingale verification (max {rep.max_error:.3e} > {tol:g}, "
            f"min kernel {rep.min_kernel:.3e}); per-level errors {levels}"
        )
    return {
        "dt": dt,
        "horizon": H,
        "n": c.n,
        "factor": {"outcomes": f.outcomes, "probs": f.probs},
        "sigma": v.sigma,
        "mu": v.mu,
        "rho": v.rho,
        "initial_forwards": F0,
        "tenors": c.tenors,
        "drift_source": "csv" if csv_drift else "stationary",
        "verification": {"depth": depth, "max_error": rep.max_error, "tol": tol},
    }


def cmd_build(args, settings: Settings) -> int:
    dt = settings.get("dt", float, required=True)
    c = hio.read_vol_csv(args.volmatrix)
    T, F0 = hio.read_curve_csv(args.curve)
    horizon = settings.get("horizon", float, default=float(len(T)) * dt)
    tol = settings.get("tol", float, default=DEFAULT_TOL)
    csv_drift = bool(args.use_csv_drift) or settings.config.get("use_csv_drift", "false").lower() in ("1", "true", "yes")
    bundle = build_bundle(c, T, F0, dt, horizon, tol, csv_drift)
    _emit(hio.dumps(bundle), settings.get("out"))
    return EXIT_OK


def cmd_verify(args, settings: Settings) -> int:
    b, m = _load_model(args.bundle)
    tol = settings.get("tol", float, default=DEFAULT_TOL)
    depth = min(m.horizon, int(b.get("verification", {}).get("depth", MAX_VERIFY_DEPTH)))
    rep = martingale_report(m, depth)
    nas = nas_equivalence_check(m, depth=min(depth, 8))
    kernels = [
        {"step": k, "counts": [list(map(int, c)) for c in level_states(m.f, k)[0]], "pi": rep.kernels[k]}
        for k in range(min(depth, 3))
    ]
    ok = not rep.arbitrage and rep.max_error <= tol
    out = {
        "depth": depth,
        "level_errors": rep.level_errors,
        "max_error": rep.max_error,
        "min_kernel": rep.min_kernel,
        "tol": tol,
        "ok": ok,
        "kernels": kernels,
        "nas": nas,
    }
    _emit(hio.dumps(out), settings.get("out"))
    if not ok:
        print(f"error: martingale error {rep.max_error:.3e} exceeds {tol:g}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_price(args, settings: Settings) -> int:
    _, m = _load_model(args.bundle)
    cf = _cashflow(args.cashflows)
    node = _node(settings, m)
    rows = []
    for T, a in zip(cf.times, cf.amounts):
        leg = CashFlow([T], [a])
        pv = present_value(leg, m, node)
        rows.append([float(T), float(a), pv / a if a else float("nan"), pv])
    rows.append(["total", "", "", present_value(cf, m, node)])
    _emit(hio.write_rows(["T", "amount", "discount", "pv"], rows), settings.get("out"))
    return EXIT_OK


def cmd_sens(args, settings: Settings) -> int:
    _, m = _load_model(args.bundle)
    node = _node(settings, m)
    rep = report(_cashflow(args.cashflows), m, node)
    out = rep.as_dict()
    out["node"] = {"step": node.step, "counts": list(node.counts)}
    _emit(hio.dumps(out), settings.get("out"))
    return EXIT_OK


def cmd_hedge(args, settings: Settings) -> int:
    _, m = _load_model(args.bundle)
    node = _node(settings, m)
    mode = settings.get("mode", default="delta")
    target = _cashflow(args.target)
    instruments = [_cashflow(p) for p in args.instruments]
    try:
        w = hedge(target, instruments, m, node, mode)
    except HedgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rows = [[Path(p).name, float(x)] for p, x in zip(args.instruments, w)]
    _emit(hio.write_rows(["instrument", "weight"], rows), settings.get("out"))
    return EXIT_OK


def continuous_rho(c: CoarseVolMatrix):
    """``rho(T) = int_0^T sigma(u) du`` for the piecewise-constant interpolant."""
    lo = np.concatenate([[0.0], c.tenors[1:-1]])
    hi = np.concatenate([c.tenors[1:-1], [np.inf]])

    def rho(T):
        span = np.clip(T - lo, 0.0, hi - lo)
        return span @ c.sigma

    return rho


def cmd_limit(args, settings: Settings) -> int:
    c = hio.read_vol_csv(args.volmatrix)
    dt0 = settings.get("dt", float, required=True)
    levels = settings.get("levels", int, default=4)
    if levels < 2:
        raise ValidationError("need at least two dt levels")
    positive = c.tenors[c.tenors > 0]
    t = settings.get("t", float, default=float(positive[0]) / 2 if len(positive) else 0.0)
    dts = [dt0 / 2**j for j in range(levels)]
    rho = continuous_rho(c)
    rows = []
    for T, T2 in zip(c.tenors[:-1], c.tenors[1:]):
        if T <= t:
            continue
        for r in convergence_test(rho, lambda d: _factor(c.n, d), T, T2, t, dts):
            rows.append([float(T), float(T2), r.dt, r.drift_err, r.mean_err, r.var_err])
    if not rows:
        raise ValidationError(f"no bucket starts after t={t}")
    _emit(hio.write_rows(["T", "T2", "dt", "drift_err", "mean_err", "var_err"], rows), settings.get("out"))
    return EXIT_OK


def simulate_history(b: dict, m: TermStructureModel, steps: int, seed: int):
    """Bucket-forward levels driven by sampled outcomes of the stationary law."""
    tenors = np.array(b["tenors"], dtype=float)
    c = coarsen(m.v, tenors)
    idx = np.array([m.index(T) for T in tenors])
    if idx[-1] > m.horizon:
        raise ValidationError("bundle tenors exceed the model horizon")
    cum = np.concatenate([[0.0], np.cumsum(m.initial.values)])
    F0 = np.diff(cum[idx]) * m.dt / np.diff(tenors)
    labels = sample_path(m.f, steps, np.random.default_rng(seed))
    dw = m.f.outcomes[labels]
    inc = dw @ c.sigma.T + c.mu * m.dt
    levels = F0 + np.vstack([np.zeros(len(F0)), np.cumsum(inc, axis=0)])
    gap = max(1, round(m.dt * 365))
    dates = [HISTORY_START + _dt.timedelta(days=gap * i) for i in range(steps + 1)]
    return dates, levels


def cmd_simulate(args, settings: Settings) -> int:
    b, m = _load_model(args.bundle)
    steps = settings.get("steps", int, default=1000)
    seed = settings.get("seed", int, default=0)
    if steps < 1:
        raise ValidationError("steps must be positive")
    dates, levels = simulate_history(b, m, steps, seed)
    _emit(hio.write_history_csv(dates, levels), settings.get("out"))
    return EXIT_OK


# parser -------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value settings file")
    common.add_argument("--dt", type=float, help="time step in years")
    common.add_argument("--horizon", type=float, help="model horizon in years")
    common.add_argument("--factors", type=int, help="fixed factor count")
    common.add_argument("--theta", type=float, help="explained-variance threshold")
    common.add_argument("--tol", type=float, help="verification tolerance")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--tenors", help="comma-separated bucket tenors in years")
    common.add_argument("--node", help="node spec t=<step>:counts=<c0,...,cn>")

    p = argparse.ArgumentParser(prog="holee", description="Stationary multi-factor lattice term-structure engine.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("calibrate", parents=[common], help="PCA calibration from forward history")
    s.add_argument("history")
    s.add_argument("--report", help="path for the PCA report (default <out>.report.json)")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("build", parents=[common], help="assemble and verify a model bundle")
    s.add_argument("volmatrix")
    s.add_argument("curve")
    s.add_argument("--use-csv-drift", action="store_true", help="price with the CSV drift column")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("verify", parents=[common], help="no-arbitrage report for a bundle")
    s.add_argument("bundle")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("price", parents=[common], help="present value table")
    s.add_argument("bundle")
    s.add_argument("cashflows")
    s.set_defaults(func=cmd_price)

    s = sub.add_parser("sens", parents=[common], help="sensitivity report")
    s.add_argument("bundle")
    s.add_argument("cashflows")
    s.set_defaults(func=cmd_sens)

    s = sub.add_parser("hedge", parents=[common], help="hedge weights")
    s.add_argument("bundle")
    s.add_argument("target")
    s.add_argument("instruments", nargs="+")
    s.add_argument("--mode", choices=["delta", "delta-gamma"])
    s.set_defaults(func=cmd_hedge)

    s = sub.add_parser("limit", parents=[common], help="continuous-limit convergence table")
    s.add_argument("volmatrix")
    s.add_argument("--levels", type=int, help="number of dt halvings plus one")
    s.add_argument("--t", type=float, help="observation time in years")
    s.set_defaults(func=cmd_limit)

    s = sub.add_parser("simulate", parents=[common], help="synthetic bucket-forward history")
    s.add_argument("bundle")
    s.add_argument("--steps", type=int)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args, Settings(args))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
