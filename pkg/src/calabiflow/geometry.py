"""Curvature, potentials, volumes and distances of a Calabi profile.

For omega = a omega_Z + i ddbar phi(rho) on P(O_Z + L^(m+1)), with
u = -log[(a + phi')^n (phi')^m phi''] + (m+1) rho the Ricci potential,

    Ric(omega) = (lam - m - 1 + u') omega_Z + fibre(u') + radial(u''),
    R = n (lam - m - 1 + u') / (a + phi') + m u'/phi' + u''/phi''.

R is also computed from the expanded formula in phi''''..phi' as an
independent discretisation; the two routes agreeing is the resolution
check for the stencils.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, pi

import numpy as np

from .errors import ConeViolation, FormulaMismatch
from .profile import BundleConfig, Profile

# One-sided 4th-order first-derivative stencils for the two edge nodes.
_D1_FWD0 = np.array([-25 / 12, 4.0, -3.0, 4 / 3, -1 / 4])
_D1_FWD1 = np.array([-1 / 4, -5 / 6, 3 / 2, -1 / 2, 1 / 12])


def _require_cone(profile: Profile) -> None:
    if profile.d2phi is None:
        raise ValueError("profile has no derivatives; run differentiate first")
    if not (np.all(profile.dphi > 0) and np.all(profile.d2phi > 0)):
        raise ConeViolation("profile is not cone-valid (phi' or phi'' nonpositive)")


def _stencil_first(f: np.ndarray, h: float) -> np.ndarray:
    """4th-order first derivative of a node array: central inside,
    one-sided at the two nodes next to each boundary."""
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    out[0] = np.dot(_D1_FWD0, f[:5]) / h
    out[1] = np.dot(_D1_FWD1, f[:5]) / h
    out[-1] = -np.dot(_D1_FWD0, f[-5:][::-1]) / h
    out[-2] = -np.dot(_D1_FWD1, f[-5:][::-1]) / h
    return out


def ricci_potential(
    config: BundleConfig, profile: Profile, a: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ricci potential u and its first two rho-derivatives.

    u' is analytic in the profile derivatives; u'' is a stencil of u', which
    keeps the two scalar-curvature routes independent discretisations.
    """
    _require_cone(profile)
    n, m = config.n, config.m
    rho = profile.grid.rho
    dp, d2, d3 = profile.dphi, profile.d2phi, profile.d3phi
    u = -(n * np.log(a + dp) + m * np.log(dp) + np.log(d2)) + (m + 1) * rho
    du = (m + 1) - (n * d2 / (a + dp) + (m * d2 / dp if m else 0.0) + d3 / d2)
    d2u = _stencil_first(du, profile.grid.h)
    return u, du, d2u


def _scalar_curvature_expanded(
    config: BundleConfig, profile: Profile, a: float, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """Expanded-derivative scalar curvature and, per node, the largest term
    magnitude.  Individual terms grow like 1/phi' towards the zero section
    and cancel analytically, so the term scale is the conditioning floor for
    any comparison against this route."""
    n, m = config.n, config.m
    dp, d2, d3, d4 = profile.dphi, profile.d2phi, profile.d3phi, profile.d4phi
    ap = a + dp
    terms = [
        -d4 / d2**2,
        d3**2 / d2**3,
        -2 * n * d3 / (ap * d2),
        (n - n**2) * d2 / ap**2,
        n * lam / ap,
    ]
    if m:
        terms += [
            -2 * m * d3 / (dp * d2),
            -2 * m * n * d2 / (dp * ap),
            (m - m**2) * d2 / dp**2,
            m * (m + 1) / dp,
        ]
    R = np.sum(terms, axis=0)
    scale = np.max(np.abs(terms), axis=0)
    return R, scale


def scalar_curvature(
    config: BundleConfig,
    profile: Profile,
    a: float,
    lam: float,
    mismatch_tol: float = 1e-4,
    conditioned: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Scalar curvature via the Ricci-potential form, cross-checked against
    the expanded derivative formula.

    Returns (R, discrepancy) where discrepancy is the largest node-wise
    difference of the two routes relative to the expanded formula's term
    scale at that node, over the conditioned region: by default phi' and
    b - phi' above 1e-4 b (closer to the sections the saturated phi' data
    carries no sub-leading information in double precision, so neither
    route resolves R there).  Flow snapshots pass their resolved window to
    also exclude the slaved-tail seams.  Raises FormulaMismatch beyond
    mismatch_tol (signals stencil under-resolution).
    """
    _require_cone(profile)
    n, m = config.n, config.m
    u, du, d2u = ricci_potential(config, profile, a)
    dp, d2 = profile.dphi, profile.d2phi
    R = n * (lam - m - 1 + du) / (a + dp) + (m * du / dp if m else 0.0) + d2u / d2
    R_alt, term_scale = _scalar_curvature_expanded(config, profile, a, lam)
    floor = max(float(np.max(np.abs(R))), 1e-300)
    if conditioned is None:
        conditioned = (dp >= 1e-4 * profile.b) & (profile.b - dp >= 1e-4 * profile.b)
    rel = np.abs(R - R_alt) / np.maximum(term_scale, floor)
    discrepancy = float(np.max(rel[conditioned])) if np.any(conditioned) else 0.0
    if discrepancy > mismatch_tol:
        raise FormulaMismatch(
            f"scalar-curvature routes disagree by {discrepancy:.3e} (tol {mismatch_tol:.1e})"
        )
    return R, discrepancy


def radial_laplacian(
    config: BundleConfig, profile: Profile, a: float, df: np.ndarray, d2f: np.ndarray
) -> np.ndarray:
    """Laplacian of a radial function f from (f', f''):
    Delta f = f''/phi'' + m f'/phi' + n f'/(a + phi')."""
    _require_cone(profile)
    n, m = config.n, config.m
    lap = d2f / profile.d2phi + n * df / (a + profile.dphi)
    if m:
        lap = lap + m * df / profile.dphi
    return lap


def radial_gradient_sq(profile: Profile, df: np.ndarray) -> np.ndarray:
    """|grad f|^2 = (f')^2 / phi'' for radial f (arclength element is
    sqrt(phi'') drho)."""
    _require_cone(profile)
    return df * df / profile.d2phi


def arclength(profile: Profile) -> np.ndarray:
    """Cumulative radial arclength l(rho_i) = int sqrt(phi'') from rho_min,
    by composite Simpson on the nodes."""
    from scipy.integrate import cumulative_simpson

    _require_cone(profile)
    speed = np.sqrt(profile.d2phi)
    return cumulative_simpson(speed, dx=profile.grid.h, initial=0.0)


def _tail_lengths(profile: Profile) -> tuple[float, float]:
    # int_{-inf}^{rho_min} sqrt(c e^rho) drho = 2 sqrt(phi''(rho_min)), same above.
    return 2.0 * float(np.sqrt(profile.d2phi[0])), 2.0 * float(np.sqrt(profile.d2phi[-1]))


def radial_distance(profile: Profile, rho1: float, rho2: float) -> float:
    """Radial metric distance int sqrt(phi'') drho between two rho values.

    rho1 = -inf closes the lower tail analytically with the exponential
    asymptotic.  Values between nodes interpolate the cumulative arclength.
    """
    if rho2 < rho1:
        raise ValueError("radial_distance requires rho1 <= rho2")
    ell = arclength(profile)
    rho = profile.grid.rho
    lower_tail, _ = _tail_lengths(profile)

    def l_at(r: float) -> float:
        if np.isneginf(r):
            return -lower_tail
        if r < rho[0] - 1e-12 or r > rho[-1] + 1e-12:
            raise ValueError(f"rho={r} outside the grid")
        return float(np.interp(r, rho, ell))

    return l_at(rho2) - l_at(rho1)


def fibre_diameter(profile: Profile) -> float:
    """Full-line radial arclength, the fibre-diameter surrogate: the grid
    integral plus both analytic exponential tails."""
    ell = arclength(profile)
    lo, hi = _tail_lengths(profile)
    return float(ell[-1]) + lo + hi


def diam_cp_factor(profile: Profile) -> float:
    """Equatorial CP^m contribution pi sqrt(sup phi'), reported separately
    from the radial surrogate."""
    return pi * float(np.sqrt(np.max(profile.dphi)))


def _volume_primitive(config: BundleConfig, a: float, x: float) -> float:
    # int_0^x (a+s)^n s^m ds expanded binomially; exact polynomial arithmetic.
    n, m = config.n, config.m
    total = 0.0
    for k in range(n + 1):
        total += comb(n, k) * a ** (n - k) * x ** (m + k + 1) / (m + k + 1)
    return total


def volume(profile: Profile, config: BundleConfig, a: float, rho_upper: float) -> float:
    """Volume of {rho <= rho_upper}: base_volume_factor times
    int (a + phi')^n (phi')^m phi'' drho.

    Computed exactly through the momentum substitution x = phi'
    (the integral is int_0^{phi'(rho_upper)} (a+x)^n x^m dx); the fibre
    normalisation constant is fixed to 1, so volumes compare relatively.
    """
    _require_cone(profile)
    rho = profile.grid.rho
    if np.isneginf(rho_upper):
        return 0.0
    if np.isposinf(rho_upper):
        x_up = profile.b
    elif rho_upper >= rho[-1]:
        # upper closure: b - phi' decays exponentially past the grid
        x_up = profile.b - (profile.b - profile.dphi[-1]) * np.exp(-(rho_upper - rho[-1]))
    elif rho_upper <= rho[0]:
        x_up = profile.dphi[0] * np.exp(rho_upper - rho[0])
    else:
        x_up = float(np.interp(rho_upper, rho, profile.dphi))
    return config.base_volume_factor * _volume_primitive(config, a, float(x_up))


@dataclass(frozen=True)
class CurvatureProxies:
    """The curvature-magnitude proxy ratios the blow-up arguments bound.

    d4_d2sq = phi''''/(phi'')^2, d3_d2 = phi'''/phi'', d2_d1 = phi''/phi',
    d2_ad1 = phi''/(a+phi'), d2_d1sq = phi''/(phi')^2,
    d2_ad1sq = phi''/(a+phi')^2.
    """

    d4_d2sq: np.ndarray
    d3_d2: np.ndarray
    d2_d1: np.ndarray
    d2_ad1: np.ndarray
    d2_d1sq: np.ndarray
    d2_ad1sq: np.ndarray

    def sup_norms(self) -> dict[str, float]:
        return {
            name: float(np.max(np.abs(getattr(self, name))))
            for name in ("d4_d2sq", "d3_d2", "d2_d1", "d2_ad1", "d2_d1sq", "d2_ad1sq")
        }


def curvature_proxies(profile: Profile, a: float) -> CurvatureProxies:
    """The six proxy ratios; finite on any cone-valid profile."""
    _require_cone(profile)
    dp, d2, d3, d4 = profile.dphi, profile.d2phi, profile.d3phi, profile.d4phi
    ap = a + dp
    return CurvatureProxies(
        d4_d2sq=d4 / d2**2,
        d3_d2=d3 / d2,
        d2_d1=d2 / dp,
        d2_ad1=d2 / ap,
        d2_d1sq=d2 / dp**2,
        d2_ad1sq=d2 / ap**2,
    )


@dataclass(frozen=True)
class GeometryFields:
    """All pointwise geometric fields of one profile snapshot."""

    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    R: np.ndarray
    proxies: CurvatureProxies
    formula_discrepancy: float


def geometry_fields(
    config: BundleConfig,
    profile: Profile,
    a: float,
    lam: float,
    conditioned: np.ndarray | None = None,
) -> GeometryFields:
    """Compute u, u', u'', R (dual-route checked) and the proxy ratios."""
    u, du, d2u = ricci_potential(config, profile, a)
    R, disc = scalar_curvature(config, profile, a, lam, conditioned=conditioned)
    return GeometryFields(u=u, du=du, d2u=d2u, R=R, proxies=curvature_proxies(profile, a), formula_discrepancy=disc)
