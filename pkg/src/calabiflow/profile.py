"""Radial potential of a Calabi-symmetric Kahler metric.

A U(m+1)-invariant Kahler metric on the projectivised bundle
P(O_Z + L^(m+1)) -> Z in the class a[D_H] + b[D_inf] is encoded by one
convex radial potential phi(rho), rho the log fibre norm.  The metric is
Kahler iff a > 0, phi' > 0 and phi'' > 0, with phi' increasing from 0 at
rho = -inf to b at rho = +inf.  Everything in this package reduces to
phi' and its rho-derivatives on a uniform grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConeViolation, InvalidGrid

_NGHOST = 3


@dataclass(frozen=True)
class BundleConfig:
    """Manifold data: P(O_Z + L^(m+1)) over an n-dim Kahler-Einstein base.

    n      complex dimension of the base Z
    m      fibre CP^m sits inside the CP^(m+1) compactification
    lam    Einstein constant, Ric(omega_Z) = lam * omega_Z
    base_volume_factor  the constant [omega_Z]^n in volume integrals
    """

    n: int
    m: int
    lam: float
    base_volume_factor: float = 1.0

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError(f"base dimension n must be a positive integer, got {self.n}")
        if self.m < 0 or int(self.m) != self.m:
            raise ValueError(f"fibre parameter m must be a nonnegative integer, got {self.m}")
        if self.base_volume_factor <= 0:
            raise ValueError("base_volume_factor must be positive")

    @property
    def dim_total(self) -> int:
        """Complex dimension of the total space, N = m + n + 1."""
        return self.m + self.n + 1


@dataclass(frozen=True)
class KahlerClass:
    """Kahler class a[D_H] + b[D_inf]; ample iff a > 0 and b > 0."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"class (a={self.a}, b={self.b}) is not ample: need a > 0 and b > 0")


@dataclass(frozen=True)
class Grid:
    """Uniform samples of the radial coordinate rho."""

    rho: np.ndarray
    h: float

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim != 1 or rho.size < 8:
            raise InvalidGrid("grid must be a 1-d array with at least 8 nodes")
        steps = np.diff(rho)
        if not np.all(steps > 0):
            raise InvalidGrid("grid nodes must be strictly increasing")
        if not np.allclose(steps, self.h, rtol=1e-12, atol=1e-12 * abs(self.h)):
            raise InvalidGrid("grid spacing is not uniform")
        rho.flags.writeable = False
        object.__setattr__(self, "rho", rho)

    @property
    def count(self) -> int:
        return self.rho.size

    @property
    def rho_min(self) -> float:
        return float(self.rho[0])

    @property
    def rho_max(self) -> float:
        return float(self.rho[-1])

    @property
    def anchor_index(self) -> int:
        """Index of the node nearest rho = 0 (the gauge anchor node)."""
        return int(np.argmin(np.abs(self.rho)))


def make_grid(rho_min: float, rho_max: float, count: int) -> Grid:
    """Uniform grid on [rho_min, rho_max] including both endpoints.

    The bounds must leave the asymptotic closures in their validity regime
    (rho_min < -10 < 10 < rho_max) and count must be at least 256.
    """
    if not (rho_min < -10.0 < 10.0 < rho_max):
        raise InvalidGrid(
            f"grid [{rho_min}, {rho_max}] must satisfy rho_min < -10 and rho_max > 10"
        )
    if count < 256:
        raise InvalidGrid(f"count={count} is below the minimum of 256")
    rho = np.linspace(rho_min, rho_max, count)
    h = (rho_max - rho_min) / (count - 1)
    grid = Grid(rho=rho, h=h)
    if np.min(np.abs(grid.rho)) > h + 1e-12:
        raise InvalidGrid("grid has no node at or adjacent to rho = 0")
    return grid


@dataclass(frozen=True)
class Profile:
    """Discretised radial potential: phi' and derived derivatives on a grid.

    b is the ambient class coefficient sup phi'; it anchors the upper
    asymptotic closure b - phi' ~ c e^(-rho).  phi0 is phi at the anchor
    node (gauge anchor); phi itself is reconstructed by quadrature.
    Arrays are frozen after construction; operations return new profiles.
    """

    grid: Grid
    phi0: float
    b: float
    dphi: np.ndarray
    d2phi: np.ndarray | None = None
    d3phi: np.ndarray | None = None
    d4phi: np.ndarray | None = None

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("ambient coefficient b must be positive")
        for name in ("dphi", "d2phi", "d3phi", "d4phi"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.ascontiguousarray(arr, dtype=float)
            if arr.shape != self.grid.rho.shape:
                raise ValueError(f"{name} shape {arr.shape} does not match the grid")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def has_derivatives(self) -> bool:
        return self.d2phi is not None and self.d3phi is not None and self.d4phi is not None

    def phi(self) -> np.ndarray:
        """phi on the nodes: phi0 plus the trapezoidal integral of phi' from
        the anchor node."""
        rho = self.grid.rho
        cum = np.concatenate(([0.0], np.cumsum((self.dphi[1:] + self.dphi[:-1]) * 0.5 * self.grid.h)))
        return self.phi0 + cum - cum[self.grid.anchor_index]

    def scaled(self, factor: float) -> "Profile":
        """Profile of the metric scaled by `factor` (all arrays and b scale
        linearly; the grid is unchanged)."""
        return Profile(
            grid=self.grid,
            phi0=self.phi0 * factor,
            b=self.b * factor,
            dphi=self.dphi * factor,
            d2phi=None if self.d2phi is None else self.d2phi * factor,
            d3phi=None if self.d3phi is None else self.d3phi * factor,
            d4phi=None if self.d4phi is None else self.d4phi * factor,
        )


def _sigma(rho: np.ndarray) -> np.ndarray:
    """Logistic sigma(rho) = e^rho / (1 + e^rho), evaluated stably."""
    out = np.empty_like(rho, dtype=float)
    pos = rho >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-rho[pos]))
    e = np.exp(rho[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def seed_derivatives(b: float, rho: np.ndarray) -> tuple[np.ndarray, ...]:
    """Closed-form derivatives of the canonical seed phi = b log(1 + e^rho).

    With s = sigma(rho):  phi' = b s,  phi'' = b s(1-s),
    phi''' = b s(1-s)(1-2s),  phi'''' = b s(1-s)(1-6s+6s^2).
    """
    s = _sigma(rho)
    s1 = s * (1.0 - s)
    return b * s, b * s1, b * s1 * (1.0 - 2.0 * s), b * s1 * (1.0 - 6.0 * s + 6.0 * s * s)


def ghost_pad(dphi: np.ndarray, b: float, h: float, nghost: int = _NGHOST) -> np.ndarray:
    """Extend phi' past both grid ends with the asymptotic closures.

    Below: phi'(rho) = phi'(rho_min) e^(rho - rho_min).
    Above: b - phi'(rho) = (b - phi'(rho_max)) e^(-(rho - rho_max)).
    """
    k = np.arange(1, nghost + 1)
    lower = dphi[0] * np.exp(-k[::-1] * h)
    upper = b - (b - dphi[-1]) * np.exp(-k * h)
    return np.concatenate((lower, dphi, upper))


def stencil_derivatives(
    dphi: np.ndarray, b: float, h: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """phi'', phi''', phi'''' as the 1st..3rd derivatives of the phi' array,
    by 4th-order central differences with ghost closure at the ends."""
    p = ghost_pad(dphi, b, h)
    d2 = (p[1:-5] - 8 * p[2:-4] + 8 * p[4:-2] - p[5:-1]) / (12 * h)
    d3 = (-p[1:-5] + 16 * p[2:-4] - 30 * p[3:-3] + 16 * p[4:-2] - p[5:-1]) / (12 * h * h)
    d4 = (p[:-6] - 8 * p[1:-5] + 13 * p[2:-4] - 13 * p[4:-2] + 8 * p[5:-1] - p[6:]) / (8 * h**3)
    return d2, d3, d4


def initial_profile(cls: KahlerClass, grid: Grid, derivatives: str = "stencil") -> Profile:
    """Canonical seed profile phi(rho) = b log(1 + e^rho).

    phi' = b sigma(rho) satisfies every Kahler-cone condition exactly and
    has the Fubini-Study fibre identity phi'' = phi'(b - phi')/b.
    derivatives: "stencil" fills phi''..phi'''' with finite differences,
    "exact" with the closed sigma-calculus forms.
    """
    if derivatives not in ("stencil", "exact"):
        raise ValueError(f"unknown derivatives mode {derivatives!r}")
    rho = grid.rho
    dphi, d2, d3, d4 = seed_derivatives(cls.b, rho)
    phi0 = cls.b * float(np.logaddexp(0.0, rho[grid.anchor_index]))
    if derivatives == "stencil":
        return differentiate(Profile(grid=grid, phi0=phi0, b=cls.b, dphi=dphi))
    return Profile(grid=grid, phi0=phi0, b=cls.b, dphi=dphi, d2phi=d2, d3phi=d3, d4phi=d4)


_DEEP_TAIL = 1e-7  # fraction of b below which stencils hit the float noise floor


def differentiate(profile: Profile) -> Profile:
    """Fill phi''..phi'''' by 4th-order stencils.

    Near-boundary nodes see ghost values from the asymptotic closures
    phi' ~ c e^rho below and b - phi' ~ c e^(-rho) above.  Deep-tail nodes,
    where phi' or b - phi' is under 1e-7 of b and the stencil signal drops
    below double-precision cancellation noise, take their derivatives from
    the closure model directly (phi''..phi'''' = phi' below, = +-(b - phi')
    above); the model error there is O(1e-7) relative.  Raises
    ConeViolation if the resulting phi'' is nonpositive anywhere.
    """
    dphi = profile.dphi
    b = profile.b
    if not (np.all(dphi > 0) and np.all(dphi < b)):
        raise ConeViolation("phi' must lie strictly between 0 and b before differentiating")
    d2, d3, d4 = stencil_derivatives(dphi, b, profile.grid.h)
    d2, d3, d4 = d2.copy(), d3.copy(), d4.copy()
    low = dphi < _DEEP_TAIL * b
    if np.any(low):
        d2[low] = dphi[low]
        d3[low] = dphi[low]
        d4[low] = dphi[low]
    psi = b - dphi
    high = psi < _DEEP_TAIL * b
    if np.any(high):
        d2[high] = psi[high]
        d3[high] = -psi[high]
        d4[high] = psi[high]
    if not np.all(d2 > 0):
        raise ConeViolation("stencil phi'' is nonpositive at some node")
    return Profile(grid=profile.grid, phi0=profile.phi0, b=profile.b, dphi=dphi, d2phi=d2, d3phi=d3, d4phi=d4)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the Kahler-cone check; failures lists violated items."""

    ok: bool
    failures: tuple[str, ...]
    min_dphi: float
    min_d2phi: float
    lower_ratio_defect: float
    upper_ratio_defect: float


def validate_cone(profile: Profile, cls: KahlerClass, tol: float = 1e-6) -> ValidationReport:
    """Check the Kahler-cone conditions and the asymptotic boundary ratios.

    (i) ampleness a > 0; (ii) phi' > 0 and phi'' > 0 at all nodes;
    (iii) |phi''/phi' - 1| <= tol at rho_min; (iv) |phi''/(b - phi') - 1| <= tol
    at rho_max.  Report-style: never raises.
    """
    if profile.d2phi is None:
        raise ValueError("profile has no derivatives; run differentiate first")
    failures = []
    if not cls.a > 0:
        failures.append("ampleness")
    min_dphi = float(np.min(profile.dphi))
    min_d2phi = float(np.min(profile.d2phi))
    if min_dphi <= 0 or min_d2phi <= 0 or not np.all(profile.dphi < cls.b):
        failures.append("positivity")
    lower = abs(profile.d2phi[0] / profile.dphi[0] - 1.0)
    upper = abs(profile.d2phi[-1] / (cls.b - profile.dphi[-1]) - 1.0)
    if not lower <= tol:
        failures.append("lower_ratio")
    if not upper <= tol:
        failures.append("upper_ratio")
    return ValidationReport(
        ok=not failures,
        failures=tuple(failures),
        min_dphi=min_dphi,
        min_d2phi=min_d2phi,
        lower_ratio_defect=float(lower),
        upper_ratio_defect=float(upper),
    )
