import numpy as np
import pytest

from calabiflow import (
    BundleConfig,
    ConeViolation,
    Grid,
    InvalidGrid,
    KahlerClass,
    Profile,
    differentiate,
    initial_profile,
    make_grid,
    validate_cone,
)
from calabiflow.profile import seed_derivatives, stencil_derivatives


def test_make_grid_node_at_zero():
    g = make_grid(-30, 30, 2049)
    assert g.h == pytest.approx(60 / 2048)
    assert g.rho[g.anchor_index] == 0.0
    assert g.count == 2049


def test_make_grid_rejects_small_count():
    with pytest.raises(InvalidGrid):
        make_grid(-30, 30, 100)


def test_make_grid_rejects_short_range():
    with pytest.raises(InvalidGrid):
        make_grid(-5, 30, 2049)


def test_seed_value_at_zero():
    g = make_grid(-30, 30, 2049)
    p = initial_profile(KahlerClass(a=1.0, b=3.0), g, derivatives="exact")
    assert p.dphi[g.anchor_index] == pytest.approx(1.5, abs=1e-14)
    assert p.phi0 == pytest.approx(3.0 * np.log(2.0), abs=1e-14)


@pytest.mark.parametrize("b", [1.0, 2.0, 3.7])
def test_seed_fubini_study_identity(b):
    # phi'' = phi'(b - phi')/b identically on the seed
    g = make_grid(-30, 30, 2049)
    p = initial_profile(KahlerClass(a=1.0, b=b), g, derivatives="exact")
    assert np.allclose(p.d2phi, p.dphi * (b - p.dphi) / b, rtol=0, atol=1e-14 * b)
    p2 = initial_profile(KahlerClass(a=1.0, b=b), g, derivatives="stencil")
    h_qty = np.log(b * p2.d2phi / (p2.dphi * (b - p2.dphi)))
    assert np.max(np.abs(h_qty)) <= 1e-6


def test_seed_h_identity_exact_mode():
    g = make_grid(-30, 30, 2049)
    p = initial_profile(KahlerClass(a=1.0, b=1.0), g, derivatives="exact")
    h_qty = np.log(p.d2phi / (p.dphi * (1 - p.dphi)))
    assert np.max(np.abs(h_qty)) <= 1e-10


def test_validate_cone_seed_boundary_ratios():
    g = make_grid(-30, 30, 2049)
    p = initial_profile(KahlerClass(a=1.0, b=1.0), g, derivatives="exact")
    rep = validate_cone(p, KahlerClass(a=1.0, b=1.0), tol=1e-6)
    assert rep.ok
    assert rep.lower_ratio_defect < 1e-8 and rep.upper_ratio_defect < 1e-8


def test_validate_cone_flags_flat_profile():
    g = make_grid(-30, 30, 512)
    flat = np.full(g.count, 0.5)
    p = Profile(grid=g, phi0=0.0, b=1.0, dphi=flat, d2phi=np.zeros(g.count),
                d3phi=np.zeros(g.count), d4phi=np.zeros(g.count))
    rep = validate_cone(p, KahlerClass(a=1.0, b=1.0))
    assert not rep.ok and "positivity" in rep.failures


def test_validate_cone_flags_short_grid():
    # [-5, 30] leaves the lower closure out of its validity regime
    rho = np.linspace(-5, 30, 1025)
    g = Grid(rho=rho, h=35 / 1024)
    b = 1.0
    dphi, d2, d3, d4 = seed_derivatives(b, rho)
    p = Profile(grid=g, phi0=0.0, b=b, dphi=dphi, d2phi=d2, d3phi=d3, d4phi=d4)
    rep = validate_cone(p, KahlerClass(a=1.0, b=b), tol=1e-6)
    assert not rep.ok and "lower_ratio" in rep.failures


def test_differentiate_seed_values_at_zero():
    g = make_grid(-30, 30, 2049)
    p = initial_profile(KahlerClass(a=1.0, b=1.0), g, derivatives="stencil")
    i0 = g.anchor_index
    assert p.d2phi[i0] == pytest.approx(0.25, abs=1e-7)
    assert p.d3phi[i0] == pytest.approx(0.0, abs=1e-7)


def test_differentiate_requires_cone():
    g = make_grid(-30, 30, 512)
    p = Profile(grid=g, phi0=0.0, b=1.0, dphi=np.full(g.count, 1.5))
    with pytest.raises(ConeViolation):
        differentiate(p)


def test_stencil_richardson_order():
    # halving h must reduce the stencil error at 4th order (slope >= 3.5)
    b = 1.0
    errs = {name: [] for name in ("d2", "d3", "d4")}
    for count in (513, 1025, 2049):
        g = make_grid(-30, 30, count)
        dphi, d2e, d3e, d4e = seed_derivatives(b, g.rho)
        d2s, d3s, d4s = stencil_derivatives(dphi, b, g.h)
        errs["d2"].append(np.max(np.abs(d2s - d2e)))
        errs["d3"].append(np.max(np.abs(d3s - d3e)))
        errs["d4"].append(np.max(np.abs(d4s - d4e)))
    for name, (e0, e1, e2) in errs.items():
        slope1 = np.log2(e0 / e1)
        slope2 = np.log2(e1 / e2)
        assert min(slope1, slope2) >= 3.5, f"{name}: slopes {slope1:.2f}, {slope2:.2f}"


def test_differentiate_is_linear():
    g = make_grid(-30, 30, 1025)
    p1 = initial_profile(KahlerClass(a=1.0, b=1.0), g, derivatives="exact")
    rho_shift = g.rho - 1.0
    dphi2, _, _, _ = seed_derivatives(2.0, rho_shift)
    alpha, beta = 0.6, 0.4
    combo = alpha * p1.dphi + beta * dphi2
    b_combo = alpha * 1.0 + beta * 2.0
    d_combo = differentiate(Profile(grid=g, phi0=0.0, b=b_combo, dphi=combo))
    d_a = differentiate(Profile(grid=g, phi0=0.0, b=1.0, dphi=p1.dphi))
    d_b = differentiate(Profile(grid=g, phi0=0.0, b=2.0, dphi=dphi2))
    lin = alpha * d_a.d2phi + beta * d_b.d2phi
    # exact linearity away from the deep-tail model region
    core = (combo > 1e-6 * b_combo) & (b_combo - combo > 1e-6 * b_combo)
    assert np.allclose(d_combo.d2phi[core], lin[core], rtol=1e-9, atol=1e-12)
    # differentiate never modifies dphi
    assert np.array_equal(d_combo.dphi, combo)


def test_profile_arrays_immutable():
    g = make_grid(-30, 30, 512)
    p = initial_profile(KahlerClass(a=1.0, b=1.0), g)
    with pytest.raises(ValueError):
        p.dphi[0] = 1.0


def test_phi_reconstruction_matches_closed_form():
    g = make_grid(-30, 30, 2049)
    b = 2.0
    p = initial_profile(KahlerClass(a=1.0, b=b), g, derivatives="exact")
    phi_exact = b * np.logaddexp(0.0, g.rho)
    # trapezoid error is O(h^2) locally, a few 1e-5 accumulated
    assert np.max(np.abs(p.phi() - phi_exact)) < 5e-4
