"""Deterministic CSV/JSON emission for runs, diagnostics and solitons.

All CSVs use 15-significant-digit scientific notation, LF line endings and
a header row; repeated runs of the same config produce byte-identical
files (no RNG anywhere, fixed column and row order, numpy pairwise
summation with a fixed topology).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .diagnostics import EstimateReport
from .flow import FlowState, RunRecord
from .geometry import GeometryFields, geometry_fields


def fmt(x: float) -> str:
    """One float, 15 significant digits, scientific notation."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return f"{float(x):.14e}"


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def write_json(path: Path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="ascii", newline="\n"
    )


_PROFILE_HEADER = [
    "rho",
    "phi",
    "dphi",
    "d2phi",
    "d3phi",
    "d4phi",
    "u",
    "du",
    "d2u",
    "R",
    "proxy_d4_d2sq",
    "proxy_d3_d2",
    "proxy_d2_d1",
    "proxy_d2_ad1",
    "proxy_d2_d1sq",
    "proxy_d2_ad1sq",
]


def snapshot_csv(path: Path, state: FlowState, config) -> None:
    """Profile snapshot with the geometry-field columns appended.

    The dual-route curvature check runs over the state's resolved window
    (tail values near the sections are closure-model territory and are
    emitted as computed)."""
    from .diagnostics import resolved_window

    prof = state.profile
    win = resolved_window(state)
    mask = np.zeros(prof.grid.count, dtype=bool)
    mask[win] = True
    mask &= (prof.dphi >= 1e-4 * prof.b) & (prof.b - prof.dphi >= 1e-4 * prof.b)
    gf: GeometryFields = geometry_fields(config, prof, state.class_now.a, config.lam, conditioned=mask)
    cols = [
        prof.grid.rho,
        prof.phi(),
        prof.dphi,
        prof.d2phi,
        prof.d3phi,
        prof.d4phi,
        gf.u,
        gf.du,
        gf.d2u,
        gf.R,
        gf.proxies.d4_d2sq,
        gf.proxies.d3_d2,
        gf.proxies.d2_d1,
        gf.proxies.d2_ad1,
        gf.proxies.d2_d1sq,
        gf.proxies.d2_ad1sq,
    ]
    write_csv(path, _PROFILE_HEADER, zip(*cols))


_DIAG_HEADER = [
    "s",
    "t",
    "H_min",
    "H_max",
    "third_ratio_sup",
    "typeI",
    "liyau",
    "local_typeI",
    "harnack",
    "vertex_rho",
    "a_inf",
    "phi_at_vertex",
    "dist_to_P0",
    "fibre_diam",
    "volume_total",
]


def diagnostics_csv(path: Path, reports: list[EstimateReport]) -> None:
    rows = [[getattr(r, k) for k in _DIAG_HEADER] for r in reports]
    write_csv(path, _DIAG_HEADER, rows)


def run_json(path: Path, record: RunRecord, extra: dict | None = None) -> None:
    payload = {
        "bundle": {
            "n": record.config.n,
            "m": record.config.m,
            "lambda": record.config.lam,
            "base_volume_factor": record.config.base_volume_factor,
        },
        "class0": {"a0": record.class0.a, "b0": record.class0.b},
        "class_path": {
            "slope_a": record.path.slope_a,
            "slope_b": record.path.slope_b,
            "t_a": record.path.t_a if math.isfinite(record.path.t_a) else "inf",
            "t_b": record.path.t_b,
            "T": record.path.T,
            "sing_type": record.path.sing_type,
            "proportional_to_anticanonical": record.path.proportional_to_anticanonical,
        },
        "schedule": list(record.schedule),
        "termination": record.termination,
    }
    if extra:
        payload.update(extra)
    write_json(path, payload)
