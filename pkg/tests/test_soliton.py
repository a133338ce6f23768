import numpy as np
import pytest
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from calabiflow import (
    BundleConfig,
    KahlerClass,
    PositivityLoss,
    compact_soliton_constant,
    compact_soliton_profile,
    flow_to_momentum,
    initial_profile,
    make_grid,
    shooting_integral,
    solve_c_star,
    soliton_profile,
    soliton_w,
)

CFG01 = BundleConfig(n=1, m=0, lam=2.0)


def test_shooting_integral_closed_forms():
    for c in (0.5, 1.0, 2.0, 3.3):
        assert shooting_integral(CFG01, 1.0, c) == pytest.approx(1 / c - 2 / c**3, rel=1e-14)
        assert shooting_integral(CFG01, 2.0, c) == pytest.approx(2 / c - 1 / c**2 - 2 / c**3, rel=1e-13)


def test_shooting_integral_signs():
    # mass concentrates at s = 0 for large c (positive factor m+1) and the
    # -s^{m+n+1} term dominates for small c
    assert shooting_integral(CFG01, 1.0, 10.0) > 0
    assert shooting_integral(CFG01, 1.0, 0.05) < 0
    for c in (0.05, 10.0):
        direct, _ = quad(lambda s: (1 + s) * np.exp(-c * s) * (1 - s), 0, 2000 / c, limit=400)
        assert shooting_integral(CFG01, 1.0, c) == pytest.approx(direct, rel=1e-9)


def test_shooting_integral_matches_quadrature_random():
    rng = np.random.default_rng(7)
    for _ in range(20):
        m = int(rng.integers(0, 4))
        n = int(rng.integers(1, 4))
        a = float(rng.uniform(0.1, 10.0))
        c = float(rng.uniform(0.5, 5.0))
        cfg = BundleConfig(n=n, m=m, lam=float(m + 1 + a))
        direct, _ = quad(
            lambda s: s**m * (a + s) ** n * np.exp(-c * s) * ((m + 1) - s),
            0,
            200.0 / c,
            limit=400,
            epsabs=1e-14,
            epsrel=1e-13,
        )
        val = shooting_integral(cfg, a, c)
        assert val == pytest.approx(direct, rel=1e-10, abs=1e-13)


def test_solve_c_star_exact_roots():
    assert abs(solve_c_star(CFG01, 1.0) - np.sqrt(2.0)) <= 1e-10
    assert abs(solve_c_star(CFG01, 2.0) - (1 + np.sqrt(17.0)) / 4) <= 1e-10


def test_solve_c_star_matches_quadrature_root():
    cfg = BundleConfig(n=1, m=1, lam=3.0)
    a = 1.3
    c_exact = solve_c_star(cfg, a)

    def raw(c):
        val, _ = quad(
            lambda s: s * (a + s) * np.exp(-c * s) * (2 - s), 0, 300.0 / c, limit=400,
            epsabs=1e-14, epsrel=1e-13,
        )
        return val

    c_quad = brentq(raw, 0.5, 5.0, xtol=1e-12)
    assert abs(c_exact - c_quad) <= 1e-8


def test_profile_invariants_and_residual():
    c = solve_c_star(CFG01, 1.0)
    sp = soliton_profile(CFG01, 1.0, c)
    assert np.all(sp.w > 0)
    assert abs(soliton_w(CFG01, 1.0, c, np.array([1e-6]))[0] / 1e-6 - 1.0) <= 1e-6
    assert abs(sp.asymptotic_slope * c - 1.0) <= 0.01
    window = sp.x >= 1e-3
    assert np.max(np.abs(sp.residual[window])) <= 1e-8


def test_profile_matches_adaptive_quadrature():
    c = solve_c_star(CFG01, 1.0)
    F, _ = quad(
        lambda s: (1 + s) * np.exp(-c * s) * (1 - s), 0, 1.0, epsabs=1e-13, epsrel=1e-13
    )
    w_quad = np.exp(c) / 2.0 * F
    assert soliton_w(CFG01, 1.0, c, np.array([1.0]))[0] == pytest.approx(w_quad, abs=1e-10)


def test_shooting_criterion_is_sharp():
    c = solve_c_star(CFG01, 1.0)
    for factor in (0.95, 1.05):
        with pytest.raises(PositivityLoss):
            soliton_profile(CFG01, 1.0, c * factor)


def test_flow_to_momentum_seed_closed_form():
    g = make_grid(-30, 30, 2049)
    p = initial_profile(KahlerClass(a=1.0, b=1.0), g, derivatives="exact")
    x, w = flow_to_momentum(p)
    assert np.allclose(w, x * (1 - x), rtol=0, atol=1e-14)
    interp = PchipInterpolator(x, w)
    xs = np.linspace(0.05, 0.95, 101)
    # off-node values carry the monotone-cubic reconstruction error
    assert np.max(np.abs(interp(xs) - xs * (1 - xs))) <= 1e-5


def test_momentum_round_trip():
    g = make_grid(-30, 30, 2049)
    p = initial_profile(KahlerClass(a=1.0, b=1.0), g, derivatives="exact")
    x, _ = flow_to_momentum(p)
    rho = g.rho[: x.size]
    rho_of_x = PchipInterpolator(x, rho)
    assert np.max(np.abs(rho_of_x(x) - rho)) <= 1e-8


def test_compact_soliton_closes_at_both_sections():
    c = compact_soliton_constant(CFG01, 1.0, 2.0)
    assert 0.5 < c < 0.56
    c2, x, w = compact_soliton_profile(CFG01, 1.0, 2.0)
    assert c2 == c
    assert np.all(w > 0)
    assert w[-1] <= 1e-5  # w(b) = 0
    # the ODE forces w'(b) = -1 when b = m + 2
    slope_end = (w[-1] - w[-4]) / (x[-1] - x[-4])
    assert slope_end == pytest.approx(-1.0, abs=5e-3)
    # and w'(0) = 1 at the zero section
    assert w[0] / x[0] == pytest.approx(1.0, abs=1e-5)
