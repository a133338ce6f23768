"""Command-line front end: single runs, soliton tables and config sweeps.

Exit codes: 0 success, 2 configuration/validation error (message names the
offending field), 3 numerical failure (message carries the failing s);
sweep returns 1 when some isolated run failed.  Outputs are byte-stable
across repeated invocations of the same config on one platform.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import blowup as blowup_mod
from .diagnostics import (
    auto_weight,
    estimate_sweep,
    monotonicity_audit,
    potential_track,
)
from .errors import (
    BracketError,
    CalabiflowError,
    Inconclusive,
    InvalidGrid,
    VertexAtBoundary,
)
from .flow import CONTRACTION, StepController, class_path, rescale_to_unit_time, run
from .profile import BundleConfig, KahlerClass, make_grid
from .serialize import diagnostics_csv, fmt, run_json, snapshot_csv, write_csv, write_json
from .soliton import flow_to_momentum, solve_c_star_details, soliton_profile

OUTDIR_ENV = "CALABIFLOW_OUTDIR"


class ConfigError(Exception):
    """Invalid run configuration; the message names the field."""


def _need(cfg: dict, path: str, typ, check=None, default=None, required=True):
    node = cfg
    parts = path.split(".")
    for key in parts[:-1]:
        node = node.get(key) if isinstance(node, dict) else None
        if node is None:
            if not required:
                return default
            raise ConfigError(f"missing section {'.'.join(parts[:-1])!r}")
    if not isinstance(node, dict) or parts[-1] not in node:
        if not required:
            return default
        raise ConfigError(f"missing field {path!r}")
    val = node[parts[-1]]
    if typ is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, typ) or (isinstance(val, bool) and typ is not bool):
        name = getattr(typ, "__name__", "number or string")
        raise ConfigError(f"field {path!r} has the wrong type (expected {name})")
    if check is not None and not check(val):
        raise ConfigError(f"field {path!r} = {val!r} is out of range")
    return val


def parse_run_config(cfg: dict) -> dict:
    """Validate the nested run configuration and normalise defaults."""
    n = _need(cfg, "bundle.n", int, lambda v: v >= 1)
    m = _need(cfg, "bundle.m", int, lambda v: v >= 0)
    lam = _need(cfg, "bundle.lambda", float)
    bvf = _need(cfg, "bundle.base_volume_factor", float, lambda v: v > 0, default=1.0, required=False)
    a0 = _need(cfg, "class.a0", float, lambda v: v > 0)
    b0 = _need(cfg, "class.b0", float, lambda v: v > 0)
    rho_min = _need(cfg, "grid.rho_min", float, lambda v: v < -10)
    rho_max = _need(cfg, "grid.rho_max", float, lambda v: v > 10)
    count = _need(cfg, "grid.count", int, lambda v: v >= 256)
    s_max = _need(cfg, "time.s_max", float, lambda v: v >= 0)
    sigma = _need(cfg, "time.cfl_sigma", float, lambda v: 0 < v <= 0.5, default=0.2, required=False)
    checkpoints = _need(
        cfg, "time.checkpoint_list", list, default=None, required=False
    )
    if checkpoints is None:
        checkpoints = [float(k) for k in range(int(math.floor(s_max)) + 1)]
        if checkpoints[-1] < s_max:
            checkpoints.append(s_max)
    else:
        checkpoints = [float(c) for c in checkpoints]
        if (
            not checkpoints
            or checkpoints[0] < 0
            or any(c2 < c1 for c1, c2 in zip(checkpoints, checkpoints[1:]))
            or checkpoints[-1] > s_max
        ):
            raise ConfigError(
                "field 'time.checkpoint_list' must be increasing, start at or above 0 "
                "and end at or below s_max"
            )
    weight = _need(cfg, "weight.A", (str, float, int), default="auto", required=False)
    if isinstance(weight, str):
        if weight != "auto":
            raise ConfigError("field 'weight.A' must be \"auto\" or a number >= 1")
    elif not float(weight) >= 1:
        raise ConfigError("field 'weight.A' must be \"auto\" or a number >= 1")
    outdir = _need(cfg, "outputs.directory", str)
    emit_profiles = _need(cfg, "outputs.emit_profiles", bool, default=False, required=False)
    emit_plots = _need(cfg, "outputs.emit_plots_data", bool, default=False, required=False)
    seed = _need(cfg, "seed_profile", str, default="canonical", required=False)
    if seed != "canonical":
        raise ConfigError("field 'seed_profile' only supports \"canonical\"")
    return {
        "bundle": BundleConfig(n=n, m=m, lam=lam, base_volume_factor=bvf),
        "class0": KahlerClass(a=a0, b=b0),
        "grid": (rho_min, rho_max, count),
        "s_max": s_max,
        "sigma": sigma,
        "checkpoints": checkpoints,
        "weight": weight,
        "outdir": outdir,
        "emit_profiles": emit_profiles,
        "emit_plots": emit_plots,
    }


def _closest(states, s_target: float) -> int:
    return int(np.argmin([abs(st.s - s_target) for st in states]))


def _audit_report(record, reports, tracks, aud) -> dict:
    """Pass/fail summary of every estimate audit with its threshold."""
    cfg = record.config
    states = record.states
    s_last = states[-1].s
    horizon_ok = s_last >= 6.0
    i_last = len(states) - 1
    i_mid = _closest(states, s_last / 2.0)
    i_prev = _closest(states, 0.75 * s_last)
    h_lower = math.log((cfg.m + 1) / (cfg.m + cfg.n + 1)) - 0.05
    h_upper = math.log(4 * cfg.m + 1) + 0.05
    h_min = min(r.H_min for r in reports)
    h_max = max(r.H_max for r in reports)
    out = {
        "sufficient_horizon": horizon_ok,
        "h_bounds": {
            "min": h_min,
            "max": h_max,
            "lower": h_lower,
            "upper": h_upper,
            "passed": h_lower <= h_min and h_max <= h_upper,
        },
        "third_ratio": {
            "mid": reports[i_mid].third_ratio_sup,
            "last": reports[i_last].third_ratio_sup,
            "threshold": 1.5,
            "passed": reports[i_last].third_ratio_sup <= 1.5 * reports[i_mid].third_ratio_sup,
        },
        "type_i_plateau": {
            "prev": reports[i_prev].typeI,
            "last": reports[i_last].typeI,
            "band": [0.5, 2.0],
            "passed": 0.5 <= reports[i_last].typeI / reports[i_prev].typeI <= 2.0,
        },
    }
    if tracks is not None:
        ly = reports[i_last].liyau / reports[i_mid].liyau
        hr = reports[i_last].harnack / reports[i_mid].harnack
        out["li_yau_plateau"] = {"ratio": ly, "threshold": 1.5, "passed": ly <= 1.5}
        out["harnack_plateau"] = {"ratio": hr, "threshold": 1.5, "passed": hr <= 1.5}
        out["vertex_confinement"] = {
            "A": tracks[0].A,
            "max_vertex_rho": max(tr.vertex_rho for tr in tracks),
            "passed": all(tr.vertex_rho < tr.A for tr in tracks),
        }
        out["local_le_global"] = {
            "passed": all(r.local_typeI <= r.typeI for r in reports)
        }
        out["monotonicity"] = {
            "B0": aud.B0,
            "B0_half": aud.B0_half,
            "stable": aud.stable,
            "passed": aud.passed,
        }
    return out


def cmd_run(config_path: str) -> int:
    try:
        raw = json.loads(Path(config_path).read_text())
    except OSError as err:
        print(f"error: cannot read config: {err}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as err:
        print(f"error: config is not valid JSON: {err}", file=sys.stderr)
        return 2
    try:
        settings = parse_run_config(raw)
        grid = make_grid(*settings["grid"])
    except (ConfigError, InvalidGrid, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    outdir = Path(os.environ.get(OUTDIR_ENV) or settings["outdir"])
    bundle = settings["bundle"]
    path0 = class_path(bundle, settings["class0"])
    path, class0 = rescale_to_unit_time(path0, settings["class0"])
    controller = StepController(cfl_sigma=settings["sigma"])
    record = run(bundle, class0, grid, settings["checkpoints"], controller)

    outdir.mkdir(parents=True, exist_ok=True)
    if not record.termination["completed"]:
        run_json(outdir / "run.json", record)
        print(
            f"error: run failed at s={record.termination['s_reached']:.6f}: "
            f"{record.termination['reason']}",
            file=sys.stderr,
        )
        return 3

    tracks = None
    aud = None
    weight_A = None
    if record.path.sing_type == CONTRACTION:
        try:
            weight_A = (
                auto_weight(record) if settings["weight"] == "auto" else float(settings["weight"])
            )
            tracks = potential_track(record, weight_A)
            aud = monotonicity_audit(tracks)
        except (VertexAtBoundary, CalabiflowError) as err:
            print(f"warning: vertex tracking unavailable: {err}", file=sys.stderr)
            tracks, aud, weight_A = None, None, None
    reports = estimate_sweep(record, tracks)
    diagnostics_csv(outdir / "diagnostics.csv", reports)

    try:
        verdict = blowup_mod.classify_limit(record)
        verdict_payload = {
            "case": verdict.case,
            "evidence": verdict.evidence,
            "thresholds": verdict.thresholds,
        }
    except Inconclusive as err:
        verdict_payload = {"case": None, "reason": str(err)}
    write_json(outdir / "verdict.json", verdict_payload)

    report = _audit_report(record, reports, tracks, aud)
    if weight_A is not None:
        report["weight_A"] = weight_A
    flat = blowup_mod.exterior_flatness(record)
    report["exterior_flatness"] = {"values": list(map(float, flat))}
    write_json(outdir / "report.json", report)
    run_json(outdir / "run.json", record, extra={"verdict": verdict_payload.get("case")})

    if settings["emit_profiles"]:
        snapdir = outdir / "snapshots"
        snapdir.mkdir(exist_ok=True)
        for st in record.states:
            snapshot_csv(snapdir / f"s_{st.s:.4f}.csv", st, bundle)
    if settings["emit_plots"]:
        rows = []
        for st in record.states:
            x, w = flow_to_momentum(st.normalized_profile())
            lo, hi = st.active
            for i in range(lo, min(hi + 1, x.size), 4):
                rows.append((st.s, x[i], w[i]))
        write_csv(outdir / "momentum.csv", ["s", "x", "w"], rows)
    return 0


def cmd_soliton(m: int, n: int, a: float, x_max: float, outdir: str) -> int:
    if m < 0 or n < 1:
        print("error: require m >= 0 and n >= 1", file=sys.stderr)
        return 2
    if not a > 0:
        print("error: soliton base coefficient a must be positive", file=sys.stderr)
        return 2
    if not x_max > 1:
        print("error: x_max must exceed 1", file=sys.stderr)
        return 2
    bundle = BundleConfig(n=n, m=m, lam=float(a + m + 1))
    try:
        c_star, bracket = solve_c_star_details(bundle, a)
        prof = soliton_profile(bundle, a, c_star, x_max=x_max)
    except (BracketError, CalabiflowError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    out = Path(os.environ.get(OUTDIR_ENV) or outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "soliton.csv", ["x", "w", "residual"], zip(prof.x, prof.w, prof.residual))
    write_json(
        out / "soliton.json",
        {
            "m": m,
            "n": n,
            "a": a,
            "c_star": c_star,
            "I_bracket": list(bracket),
            "x_max": x_max,
            "asymptotic_slope": prof.asymptotic_slope,
        },
    )
    return 0


_SWEEP_FIELDS = [
    "s",
    "t",
    "H_min",
    "H_max",
    "third_ratio_sup",
    "typeI",
    "liyau",
    "local_typeI",
    "harnack",
    "fibre_diam",
    "volume_total",
]


def _sweep_one(config_path: str) -> dict:
    """One isolated run for the sweep; never raises."""
    name = Path(config_path).stem
    try:
        raw = json.loads(Path(config_path).read_text())
        settings = parse_run_config(raw)
        grid = make_grid(*settings["grid"])
        bundle = settings["bundle"]
        path0 = class_path(bundle, settings["class0"])
        path, class0 = rescale_to_unit_time(path0, settings["class0"])
        record = run(bundle, class0, grid, settings["checkpoints"], StepController(cfl_sigma=settings["sigma"]))
        if not record.termination["completed"]:
            return {"config": name, "status": "failed", "detail": record.termination["reason"]}
        tracks = None
        if record.path.sing_type == CONTRACTION:
            try:
                tracks = potential_track(record, auto_weight(record))
            except CalabiflowError:
                tracks = None
        reports = estimate_sweep(record, tracks)
        try:
            case = blowup_mod.classify_limit(record).case
        except Inconclusive:
            case = "Inconclusive"
        row = {"config": name, "status": "ok", "case": case}
        final = reports[-1]
        for f in _SWEEP_FIELDS:
            row[f] = getattr(final, f)
        return row
    except (CalabiflowError, ConfigError, ValueError, OSError, json.JSONDecodeError) as err:
        return {"config": name, "status": "failed", "detail": f"{type(err).__name__}: {err}"}


def cmd_sweep(config_dir: str, jobs: int, outdir: str) -> int:
    paths = sorted(str(p) for p in Path(config_dir).glob("*.json"))
    if not paths:
        print(f"error: no config files in {config_dir!r}", file=sys.stderr)
        return 2
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, paths))
    else:
        rows = [_sweep_one(p) for p in paths]
    rows.sort(key=lambda r: r["config"])
    out = Path(os.environ.get(OUTDIR_ENV) or outdir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["config", "status", "case"] + _SWEEP_FIELDS
    lines = [",".join(header)]
    for r in rows:
        cells = [r["config"], r["status"], str(r.get("case", ""))]
        for f in _SWEEP_FIELDS:
            cells.append(fmt(r[f]) if f in r else "")
        lines.append(",".join(cells))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        print(f"failed: {r['config']}: {r.get('detail','')}", file=sys.stderr)
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="calabiflow",
        description="Kahler-Ricci flow laboratory for projective bundles with Calabi symmetry",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="integrate one flow configuration")
    p_run.add_argument("config", help="path to a JSON run configuration")
    p_sol = sub.add_parser("soliton", help="compute the shrinking soliton profile")
    p_sol.add_argument("--m", type=int, required=True)
    p_sol.add_argument("--n", type=int, required=True)
    p_sol.add_argument("--a", type=float, required=True)
    p_sol.add_argument("--x-max", type=float, default=1e3)
    p_sol.add_argument("--outdir", default="soliton_out")
    p_sweep = sub.add_parser("sweep", help="run every config in a directory")
    p_sweep.add_argument("config_dir")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--outdir", default="sweep_out")
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "soliton":
        return cmd_soliton(args.m, args.n, args.a, args.x_max, args.outdir)
    return cmd_sweep(args.config_dir, args.jobs, args.outdir)


if __name__ == "__main__":
    sys.exit(main())
