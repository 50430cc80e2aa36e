import math

import mpmath
import numpy as np
import pytest
from scipy.integrate import quad

from holee.drift import coarse_drift
from holee.errors import ValidationError
from holee.factors import binary_ho_lee, simplex_factor
from holee.ikrs import (
    GaussianIkrsModel,
    convergence_test,
    discrete_moments,
    discretize,
    gaussian_moments,
    ikrs_coarse_forward,
    limit_drift,
)


def rho1(T):
    return np.array([0.02 * (1 - math.exp(-T)) + 0.005 * T])


def rho1_dot(T):
    return 0.02 * math.exp(-T) + 0.005


def rho2(T):
    return np.array([0.015 * T, 0.01 * math.sin(T)])


def test_limit_drift_examples():
    assert limit_drift(lambda T: np.array([0.3, -0.1]), 1.0, 4.0) == 0.0
    # |rho(T')|^2 = |rho(T)|^2 + 2 (T' - T)
    assert limit_drift(lambda T: np.array([math.sqrt(2 * T)]), 1.0, 3.0) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(ValidationError):
        limit_drift(rho1, 2.0, 2.0)


def test_limit_drift_sign_matches_small_dt_expansion():
    # log E[exp(-<rho, dw>)] = |rho|^2 dt / 2 + o(dt) for the binary factor
    mpmath.mp.dps = 30
    r, dt = mpmath.mpf("0.3"), mpmath.mpf("1e-8")
    psi = mpmath.log(mpmath.cosh(r * mpmath.sqrt(dt)))
    assert float(psi / dt) == pytest.approx(0.5 * 0.3**2, rel=1e-7)


def psi_mp(rho_row, f):
    total = mpmath.mpf(0)
    for p, x in zip(f.probs, f.outcomes):
        total += mpmath.mpf(p) * mpmath.exp(-mpmath.fsum(mpmath.mpf(r) * mpmath.mpf(xi) for r, xi in zip(rho_row, x)))
    return mpmath.log(total / mpmath.fsum(mpmath.mpf(p) for p in f.probs))


@pytest.mark.parametrize("family,rho", [(binary_ho_lee, rho1), (lambda dt: simplex_factor(2, dt), rho2)])
def test_coarse_drift_high_precision(family, rho):
    mpmath.mp.dps = 40
    dt, T, T2 = 1 / 16, 1.0, 2.0
    f = family(dt)
    v = discretize(rho, dt, T2)
    i, j = v.index(T), v.index(T2)
    expect = (psi_mp(v.rho[j], f) - psi_mp(v.rho[i], f)) / (mpmath.mpf(dt) * (T2 - T))
    assert coarse_drift(v, f, T, T2) == pytest.approx(float(expect), rel=1e-11)


def test_discretize_matches_rho_on_grid():
    v = discretize(rho2, 0.125, 3.0)
    for m in range(25):
        assert np.allclose(v.rho[m], rho2(m * 0.125), rtol=1e-13, atol=1e-16)


def test_binary_drift_error_halves():
    rows = convergence_test(rho1, binary_ho_lee, 1.0, 2.0, 0.5, [1 / 8, 1 / 16, 1 / 32, 1 / 64])
    ratios = [a.drift_err / b.drift_err for a, b in zip(rows, rows[1:])]
    assert len(ratios) >= 3
    assert all(1.6 <= r <= 2.4 for r in ratios), ratios
    mean_ratios = [a.mean_err / b.mean_err for a, b in zip(rows, rows[1:])]
    assert all(1.6 <= r <= 2.4 for r in mean_ratios), mean_ratios


def test_variance_at_fine_dt():
    t, T, T2 = 0.5, 1.0, 2.0
    rows = convergence_test(rho1, binary_ho_lee, T, T2, t, [t / 256, t / 512])
    _, lim_var = gaussian_moments(rho1, t, T, T2)
    expect = t * float(np.sum((rho1(T2) - rho1(T)) ** 2)) / (T2 - T) ** 2
    assert lim_var == pytest.approx(expect, rel=1e-14)
    assert rows[-1].var_err <= 0.01 * lim_var


def test_simplex_family_moments_converge():
    rows = convergence_test(rho2, lambda dt: simplex_factor(2, dt), 1.0, 2.0, 0.5, [1 / 8, 1 / 16, 1 / 32, 1 / 64])
    assert all(a.drift_err > b.drift_err for a, b in zip(rows, rows[1:]))
    assert rows[-1].var_err <= 0.01 * gaussian_moments(rho2, 0.5, 1.0, 2.0)[1]


def test_zero_rho_zero_errors():
    zero = lambda T: np.zeros(1)
    rows = convergence_test(zero, binary_ho_lee, 1.0, 2.0, 0.5, [0.25, 0.125])
    assert all(r.drift_err == 0 and r.mean_err == 0 and r.var_err == 0 for r in rows)
    with pytest.raises(ValidationError):
        convergence_test(zero, binary_ho_lee, 1.0, 2.0, 0.5, [0.25])


def test_discrete_moments_by_enumeration():
    dt, t, T, T2 = 0.25, 0.75, 1.0, 2.0
    f = binary_ho_lee(dt)
    v = discretize(rho1, dt, T2)
    mean, var = discrete_moments(f, v, t, T, T2)
    load = float((v.rho[8] - v.rho[4])[0]) / (T2 - T)
    xs = [load * math.sqrt(dt) * (2 * u - 3) for u in range(4)]
    ps = [math.comb(3, u) / 8 for u in range(4)]
    m0 = sum(p * x for p, x in zip(ps, xs))
    assert var == pytest.approx(sum(p * (x - m0) ** 2 for p, x in zip(ps, xs)), rel=1e-12)
    assert mean == pytest.approx(coarse_drift(v.with_drift(None), f, T, T2) * t, rel=1e-12)


def test_ikrs_coarse_forward_examples():
    g = GaussianIkrsModel(rho1, [0.0, 1.0, 2.0], [0.03, 0.035])
    assert ikrs_coarse_forward(g, 0.0, 1.0, 2.0, [0.0]) == 0.035
    z = GaussianIkrsModel(lambda T: np.zeros(1), [0.0, 1.0, 2.0], [0.03, 0.035])
    assert ikrs_coarse_forward(z, 0.5, 1.0, 2.0, [0.7]) == 0.035
    W = 0.4
    load = float((rho1(2.0) - rho1(1.0))[0])
    expect = 0.035 + load * W + limit_drift(rho1, 1.0, 2.0) * 0.5
    assert ikrs_coarse_forward(g, 0.5, 1.0, 2.0, [W]) == pytest.approx(expect, rel=1e-14)
    with pytest.raises(ValidationError):
        ikrs_coarse_forward(g, 1.5, 1.0, 2.0, [0.0])
    with pytest.raises(ValidationError):
        ikrs_coarse_forward(g, 0.5, 0.5, 2.0, [0.0])
    with pytest.raises(ValidationError):
        GaussianIkrsModel(rho1, [0.0, 2.0, 1.0], [0.0, 0.0])


def test_bucket_loading_is_average_of_instantaneous_loading():
    T, T2 = 1.0, 3.0
    avg = quad(rho1_dot, T, T2)[0] / (T2 - T)
    assert avg == pytest.approx(float((rho1(T2) - rho1(T))[0]) / (T2 - T), rel=1e-12)
