"""Type-I rescaling bookkeeping and blow-up limit classification.

The volume of the whole manifold is class arithmetic (the momentum
substitution makes it the exact polynomial int_0^b(t) (a(t)+x)^n x^m dx),
so the trichotomy of limits is detected by finite-horizon volume proxies:
nonvanishing volume (zero-section contraction: soliton on L^(m+1) at the
section, flat space outside), vanishing volume with divergent Type-I
ratio (fibre collapse: C^n x CP^(m+1)), or a stabilizing Type-I ratio
(extinction: the compact soliton).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Inconclusive
from .flow import FlowState, RunRecord
from .geometry import ricci_potential, volume
from .profile import KahlerClass, Profile
from .diagnostics import entropy_h

SOLITON_ON_BUNDLE = "SolitonOnBundle"
PRODUCT_CN_CPM1 = "ProductCnCPm1"
COMPACT_SOLITON = "CompactSoliton"

_THRESHOLDS = {
    "volume_liminf_fraction": 0.5,  # Vol at the last checkpoints vs Vol(s=2)
    "typeI_ratio_band": 0.2,  # relative stability of (1-t)^-N Vol over the last 3
    "typeI_ratio_growth": 2.0,  # monotone growth factor detecting divergence
    "min_s": 6.0,
}


def typeI_rescale(state: FlowState, t_i: float) -> tuple[Profile, KahlerClass]:
    """Parabolic rescaling (1 - t_i)^-1 g at the blow-up base time t_i.

    Pure algebra on the snapshot (profiles scale linearly); rescaling at
    the snapshot's own time reproduces the normalized-flow snapshot
    exactly.
    """
    if not t_i < 1.0:
        raise ValueError("blow-up base time must satisfy t_i < 1")
    factor = 1.0 / (1.0 - t_i)
    cls = KahlerClass(a=state.class_now.a * factor, b=state.class_now.b * factor)
    return state.profile.scaled(factor), cls


@dataclass(frozen=True)
class BlowupVerdict:
    """Classification of the Type-I blow-up limit with its evidence."""

    case: str
    evidence: dict
    thresholds: dict


def _total_volume(record: RunRecord, state: FlowState) -> float:
    return volume(state.profile, record.config, state.class_now.a, math.inf)


def classify_limit(record: RunRecord, comparison=None) -> BlowupVerdict:
    """Volume-trichotomy verdict from the run's checkpoints.

    comparison optionally supplies a momentum-chart reference callable
    w_ref(x) for the evidence field; by default the complete soliton with
    a = lam - m - 1 is used when that is positive, else the Fubini-Study
    profile of the terminal fibre class.
    """
    states = [st for st in record.states]
    if not states or states[-1].s < _THRESHOLDS["min_s"]:
        raise Inconclusive("classification requires the run to reach s >= 6")
    s_vals = np.array([st.s for st in states])
    vols = np.array([_total_volume(record, st) for st in states])
    N = record.config.dim_total
    ratios = np.exp(N * s_vals) * vols

    i_ref = int(np.argmin(np.abs(s_vals - 2.0)))
    last3 = slice(-3, None)
    vol_liminf_proxy = float(np.min(vols[last3]) / vols[i_ref])
    band = float(np.max(ratios[last3]) / np.min(ratios[last3]) - 1.0)
    growth = float(np.min(ratios[last3][1:] / ratios[last3][:-1]))

    if vol_liminf_proxy > _THRESHOLDS["volume_liminf_fraction"]:
        case = SOLITON_ON_BUNDLE
    elif band <= _THRESHOLDS["typeI_ratio_band"]:
        case = COMPACT_SOLITON
    else:
        case = PRODUCT_CN_CPM1

    final = states[-1]
    npf = final.normalized_profile()
    comparison_sup = _comparison_sup(record, final, comparison)
    ic = int(np.argmin(np.abs(npf.dphi - npf.b / 2)))
    rho = npf.grid.rho
    win = np.abs(rho - rho[ic]) <= 3.0
    H_sup_local = float(np.max(np.abs(entropy_h(final)[win])))

    return BlowupVerdict(
        case=case,
        evidence={
            "vol_liminf_proxy": vol_liminf_proxy,
            "vol_typeI_ratio": float(ratios[-1]),
            "typeI_ratio_band": band,
            "typeI_ratio_growth": growth,
            "comparison_sup": comparison_sup,
            "H_sup_local": H_sup_local,
        },
        thresholds=dict(_THRESHOLDS),
    )


def _comparison_sup(record: RunRecord, state: FlowState, comparison) -> float:
    from scipy.interpolate import PchipInterpolator

    from .soliton import flow_to_momentum

    npf = state.normalized_profile()
    if comparison is None:
        a_sol = record.config.lam - record.config.m - 1
        if a_sol > 0:
            from .soliton import solve_c_star, soliton_w

            c = solve_c_star(record.config, a_sol)
            comparison = lambda xs: soliton_w(record.config, a_sol, c, xs)
        else:
            b_n = npf.b
            comparison = lambda xs: xs * (b_n - xs) / b_n
    x_nodes, w_nodes = flow_to_momentum(npf)
    x_hi = min(2.0, 0.5 * float(x_nodes[-1]))
    xs = np.linspace(0.1, max(x_hi, 0.2), 160)
    w_flow = PchipInterpolator(x_nodes, w_nodes)(xs)
    return float(np.max(np.abs(w_flow - comparison(xs))))


def exterior_flatness(record: RunRecord, rho0: float = 0.0) -> np.ndarray:
    """(1-t) |R(rho0, t)| over the checkpoints: the normalized scalar
    curvature at a fixed exterior point, which must decay when the
    blow-up there is flat."""
    cfg = record.config
    vals = []
    for st in record.states:
        npf = st.normalized_profile()
        a_n = st.normalized_class().a
        u, du, d2u = ricci_potential(cfg, npf, a_n)
        R = cfg.n * (cfg.lam - cfg.m - 1 + du) / (a_n + npf.dphi) + (
            cfg.m * du / npf.dphi if cfg.m else 0.0
        ) + d2u / npf.d2phi
        i = int(np.argmin(np.abs(npf.grid.rho - rho0)))
        vals.append(abs(float(R[i])))
    return np.array(vals)
