"""Potential-theory objects and estimate audits along a flow run.

The scalar potential driving all localized estimates solves, on the
normalized flow, Ric = omega~ - e^s theta_ref - i ddbar u_w with the
reference form theta_ref supported past the weight plateau.  In the
Calabi frame and the anchor gauge this reduces to

    u_w = phi~ - u~ + N (e^s - 1 - s) + e^s (eta_A - eta_inf),

where u~ is the Ricci potential of the normalized profile, N = m + n + 1,
eta_inf = b_T log(1 + e^rho) is the potential of the limiting-class
reference metric (b_T the terminal class coefficient) and eta_A is the
same potential plateaued past rho = 2A.  The eta_inf subtraction cancels
the linear growth of phi~ - u~ towards the infinity divisor exactly, so
u_w' -> 0 at both ends; the weight plateau breaks the tie in favour of
the zero section once A passes the largeness scan.  The well edge rho_s
(the vertex) is the base point for the Li-Yau, local Type-I and Harnack
functionals.  Changing the time gauge shifts u_w uniformly in rho, so the
vertex and v = u_w - min u_w + 1 are gauge invariants, and all fitted
constants absorb the gauge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import VertexAtBoundary, WrongSingularityType
from .flow import CONTRACTION, FlowState, RunRecord
from .geometry import arclength, fibre_diameter, radial_laplacian, ricci_potential, scalar_curvature, volume
from .profile import Grid

_SEAM_MARGIN = 6  # nodes skipped inside the active window next to the slaved tails


def resolved_window(state: FlowState, margin: int = _SEAM_MARGIN) -> slice:
    """Active node range minus a stencil-width buffer at the slave seams."""
    lo, hi = state.active
    lo = max(lo + margin, 0)
    hi = min(hi - margin, state.profile.grid.count - 1)
    if hi <= lo:
        raise ValueError("resolved window is empty")
    return slice(lo, hi + 1)


def weight_eta(A: float, b: float, grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Plateaued barrier eta_A and its first two derivatives.

    eta_A = b log(1 + e^g) with g = rho for rho <= 2A, g = 4A for
    rho >= 4A, joined by a quintic-smoothstep C^2 monotone blend of the
    argument on (2A, 4A).
    """
    if not A >= 1.0:
        raise ValueError("weight parameter A must be >= 1")
    rho = grid.rho
    g = rho.copy()
    dg = np.ones_like(rho)
    d2g = np.zeros_like(rho)
    mid = (rho > 2 * A) & (rho < 4 * A)
    if np.any(mid):
        y = (rho[mid] - 2 * A) / (2 * A)
        q = y**3 * (10 - 15 * y + 6 * y * y)
        dq = 30 * y * y * (1 - y) ** 2 / (2 * A)
        d2q = 60 * y * (1 - 3 * y + 2 * y * y) / (2 * A) ** 2
        rest = 4 * A - rho[mid]
        g[mid] = rho[mid] + rest * q
        dg[mid] = 1 - q + rest * dq
        d2g[mid] = -2 * dq + rest * d2q
    top = rho >= 4 * A
    g[top] = 4 * A
    dg[top] = 0.0
    d2g[top] = 0.0
    sig = 1.0 / (1.0 + np.exp(-g))
    eta = b * np.logaddexp(0.0, g)
    deta = b * sig * dg
    d2eta = b * (sig * (1 - sig) * dg * dg + sig * d2g)
    return eta, deta, d2eta


@dataclass(frozen=True)
class PotentialTrack:
    """Weighted-potential snapshot: vertex, minimum and v = u_w - min + 1."""

    s: float
    A: float
    u0: np.ndarray
    u_w: np.ndarray
    du_w: np.ndarray
    d2u_w: np.ndarray
    vertex_rho: float
    a_inf: float
    v: np.ndarray


_VERTEX_OFFSET = 0.5  # height of the well bottom defining the vertex edge


def _vertex_of(rho: np.ndarray, f: np.ndarray, offset: float = _VERTEX_OFFSET) -> tuple[float, float]:
    """Vertex location and refined minimum of the weighted potential.

    On this family the potential decays exponentially onto its infimum
    towards the zero section, so the raw argmin merges into the rho = -inf
    plateau; the vertex is taken as the right edge of the well bottom
    {f <= min f + offset}, which is a Ricci vertex in the bounded-distance
    sense (v <= 1 + offset there) and stays finite and drifting.  For a
    sharply curved interior well this reduces to the argmin within O(h).
    The minimum is refined by a 3-point parabola when interior ties allow.
    """
    i = int(np.argmin(f))  # ties resolve to the smaller rho
    a_inf = float(f[i])
    if 0 < i < f.size - 1:
        denom = f[i + 1] - 2 * f[i] + f[i - 1]
        if denom > 0:
            delta = float(np.clip(0.5 * (f[i - 1] - f[i + 1]) / denom, -0.5, 0.5))
            a_inf = min(a_inf, float(f[i] - 0.25 * (f[i - 1] - f[i + 1]) * delta))
    level = a_inf + offset
    below = np.nonzero(f <= level)[0]
    edge = int(below[-1])
    if edge >= f.size - 4 or edge <= 2:
        raise VertexAtBoundary(
            f"potential-well edge at node {edge} of {f.size}; enlarge the grid or the weight"
        )
    h = rho[1] - rho[0]
    f0, f1 = f[edge] - level, f[edge + 1] - level
    frac = float(-f0 / (f1 - f0)) if f1 > f0 else 0.0
    return float(rho[edge] + frac * h), a_inf


def potential_track(
    record: RunRecord, A: float, weight_b: float | None = None
) -> list[PotentialTrack]:
    """Weighted-potential track at every snapshot of a T = 1 run.

    weight_b defaults to the terminal class coefficient b(1), matching the
    limiting metric both eta_inf and the barrier eta_A represent.
    """
    cfg = record.config
    N = cfg.dim_total
    if weight_b is None:
        weight_b = record.path.b_at(1.0)
    tracks = []
    for st in record.states:
        npf = st.normalized_profile()
        grid = npf.grid
        rho = grid.rho
        a_n = st.normalized_class().a
        u, du, d2u = ricci_potential(cfg, npf, a_n)
        phi = npf.phi()
        es = math.exp(st.s)
        eta, deta, d2eta = weight_eta(A, weight_b, grid)
        sig = 1.0 / (1.0 + np.exp(-rho))
        eta_inf = weight_b * np.logaddexp(0.0, rho)
        u0 = phi - u + N * (es - 1.0 - st.s) - es * eta_inf
        u_w = u0 + es * eta
        du_w = (npf.dphi - du) + es * (deta - weight_b * sig)
        d2u_w = (npf.d2phi - d2u) + es * (d2eta - weight_b * sig * (1.0 - sig))
        vrho, a_inf = _vertex_of(rho, u_w)
        tracks.append(
            PotentialTrack(
                s=st.s,
                A=A,
                u0=u0,
                u_w=u_w,
                du_w=du_w,
                d2u_w=d2u_w,
                vertex_rho=vrho,
                a_inf=a_inf,
                v=u_w - a_inf + 1.0,
            )
        )
    return tracks


def auto_weight(record: RunRecord, weight_b: float | None = None, scan_checkpoints: int = 3) -> float:
    """Weight largeness scan: double A until the vertex satisfies
    rho_s < A on the first few checkpoints, then freeze."""
    A = 1.0
    head = RunRecord(
        config=record.config,
        class0=record.class0,
        path=record.path,
        schedule=record.schedule[:scan_checkpoints],
        states=record.states[:scan_checkpoints],
        termination=record.termination,
    )
    while A <= 2**24:
        try:
            tracks = potential_track(head, A, weight_b)
        except VertexAtBoundary:
            A *= 2.0
            continue
        if all(tr.vertex_rho < A for tr in tracks):
            return A
        A *= 2.0
    raise VertexAtBoundary("weight scan exhausted without confining the vertex")


@dataclass(frozen=True)
class MonotonicityAudit:
    """Smallest B0 making e^-s (a_inf -+ B0) monotone across checkpoints."""

    B0: float
    B0_half: float
    stable: bool

    @property
    def passed(self) -> bool:
        return math.isfinite(self.B0) and self.stable


def _required_b0(s: np.ndarray, a: np.ndarray) -> float:
    need = 0.0
    for i in range(s.size - 1):
        w1, w2 = math.exp(-s[i]), math.exp(-s[i + 1])
        denom = w1 - w2
        if denom <= 0:
            continue
        need = max(need, (w1 * a[i] - w2 * a[i + 1]) / denom)
        need = max(need, (w2 * a[i + 1] - w1 * a[i]) / denom)
    return need


def monotonicity_audit(tracks: list[PotentialTrack], stability_tol: float = 0.2) -> MonotonicityAudit:
    """Fit the two-sided monotonicity constant of the weighted minimum.

    B0 is the smallest constant making e^-s (a_inf - B0) nondecreasing and
    e^-s (a_inf + B0) nonincreasing over consecutive checkpoints; the audit
    passes when the first-half fit agrees with the full fit within 20%.
    """
    if len(tracks) < 2:
        raise ValueError("monotonicity audit needs at least two checkpoints")
    s = np.array([tr.s for tr in tracks])
    a = np.array([tr.a_inf for tr in tracks])
    B0 = _required_b0(s, a)
    half = max(2, len(tracks) // 2)
    B0_half = _required_b0(s[:half], a[:half])
    floor = 1e-12 * max(1.0, float(np.max(np.abs(a))))  # cancellation-level B0 counts as 0
    stable = (B0 - B0_half) <= stability_tol * B0 + floor
    return MonotonicityAudit(B0=B0, B0_half=B0_half, stable=bool(stable))


@dataclass(frozen=True)
class EstimateReport:
    """Per-checkpoint scalars for every audited estimate.

    Vertex-based entries are NaN when no potential track applies (the
    twisted potentials of collapsing runs do not reduce to rho).
    """

    s: float
    t: float
    H_min: float
    H_max: float
    third_ratio_sup: float
    typeI: float
    liyau: float
    local_typeI: float
    harnack: float
    vertex_rho: float
    a_inf: float
    phi_at_vertex: float
    dist_to_P0: float
    fibre_diam: float
    volume_total: float


def entropy_h(state: FlowState, window: slice | None = None) -> np.ndarray:
    """H = log(b phi'' / (phi' (b - phi'))), the two-sided second-derivative
    bound quantity; scale free, so computed from the unnormalized profile."""
    prof = state.profile
    sl = window if window is not None else slice(None)
    dp = prof.dphi[sl]
    return np.log(prof.b * prof.d2phi[sl] / (dp * (prof.b - dp)))


def estimate_sweep(
    record: RunRecord,
    tracks: list[PotentialTrack] | None = None,
    harnack_radius: float = 1.0,
) -> list[EstimateReport]:
    """Fill every estimate entry at every checkpoint.

    Sup-norms are taken over the resolved window (active nodes minus the
    seam buffer).  The Harnack region is the normalized radial metric ball
    of radius harnack_radius around the vertex.
    """
    cfg = record.config
    reports = []
    for k, st in enumerate(record.states):
        npf = st.normalized_profile()
        win = resolved_window(st)
        a_n = st.normalized_class().a
        H = entropy_h(st, win)
        third = float(np.max(np.abs(npf.d3phi[win] / npf.d2phi[win])))
        R, _ = scalar_curvature(cfg, npf, a_n, cfg.lam, mismatch_tol=np.inf)
        typeI = float(np.max(np.abs(R[win])))
        fdiam = fibre_diameter(npf)
        vol = volume(st.profile, cfg, st.class_now.a, np.inf)
        if tracks is not None:
            tr = tracks[k]
            v, dv, d2v = tr.v, tr.du_w, tr.d2u_w
            lap = radial_laplacian(cfg, npf, a_n, dv, d2v)
            grad2 = dv * dv / npf.d2phi
            liyau = float(np.max(((np.abs(lap) + grad2) / v)[win]))
            ell = arclength(npf)
            rho = npf.grid.rho
            ell_v = float(np.interp(tr.vertex_rho, rho, ell))
            dist = np.abs(ell - ell_v)
            local = float(np.max((np.abs(R) / (1.0 + dist**2))[win]))
            ball = dist <= harnack_radius
            harnack = float(np.max(v[ball]) / np.min(v[ball]))
            phi_v = float(np.interp(tr.vertex_rho, rho, npf.dphi))
            dist_p0 = ell_v + 2.0 * float(np.sqrt(npf.d2phi[0]))
            vrho, a_inf = tr.vertex_rho, tr.a_inf
        else:
            liyau = local = harnack = vrho = a_inf = phi_v = dist_p0 = float("nan")
        reports.append(
            EstimateReport(
                s=st.s,
                t=st.t,
                H_min=float(np.min(H)),
                H_max=float(np.max(H)),
                third_ratio_sup=third,
                typeI=typeI,
                liyau=liyau,
                local_typeI=local,
                harnack=harnack,
                vertex_rho=vrho,
                a_inf=a_inf,
                phi_at_vertex=phi_v,
                dist_to_P0=dist_p0,
                fibre_diam=fdiam,
                volume_total=vol,
            )
        )
    return reports


def vertex_geometry(track: PotentialTrack, state: FlowState, sing_type: str) -> dict:
    """phi~'(rho_s) and the normalized radial distance from the vertex to
    the zero section; contraction-type runs only (collapsing runs use
    twisted potentials that do not reduce to rho)."""
    if sing_type != CONTRACTION:
        raise WrongSingularityType(f"vertex geometry applies to contraction runs, not {sing_type}")
    npf = state.normalized_profile()
    rho = npf.grid.rho
    phi_v = float(np.interp(track.vertex_rho, rho, npf.dphi))
    ell = arclength(npf)
    dist = float(np.interp(track.vertex_rho, rho, ell)) + 2.0 * float(np.sqrt(npf.d2phi[0]))
    return {"phi_at_vertex": phi_v, "dist_to_P0": dist}
