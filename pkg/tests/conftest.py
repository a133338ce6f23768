"""Shared fixtures: the three benchmark runs are integrated once per
session (roughly two minutes each at the acceptance resolution)."""

import numpy as np
import pytest

from calabiflow import (
    BundleConfig,
    KahlerClass,
    StepController,
    class_path,
    make_grid,
    rescale_to_unit_time,
    run,
)

BENCHMARK_CLASSES = {
    "contraction": (1.0, 3.0),
    "collapse": (2.0, 2.0),
    "extinction": (1.0, 2.0),
}


@pytest.fixture(scope="session")
def bundle():
    return BundleConfig(n=1, m=0, lam=2.0)


@pytest.fixture(scope="session")
def benchmark_grid():
    return make_grid(-30.0, 30.0, 2049)


def _benchmark(bundle, grid, a0, b0):
    cls = KahlerClass(a=a0, b=b0)
    path = class_path(bundle, cls)
    path, cls = rescale_to_unit_time(path, cls)
    record = run(bundle, cls, grid, schedule=list(range(9)), controller=StepController(cfl_sigma=0.2))
    assert record.termination["completed"], record.termination
    return record


@pytest.fixture(scope="session")
def contraction_run(bundle, benchmark_grid):
    return _benchmark(bundle, benchmark_grid, *BENCHMARK_CLASSES["contraction"])


@pytest.fixture(scope="session")
def collapse_run(bundle, benchmark_grid):
    return _benchmark(bundle, benchmark_grid, *BENCHMARK_CLASSES["collapse"])


@pytest.fixture(scope="session")
def extinction_run(bundle, benchmark_grid):
    return _benchmark(bundle, benchmark_grid, *BENCHMARK_CLASSES["extinction"])


@pytest.fixture(scope="session")
def contraction_tracks(contraction_run):
    from calabiflow import auto_weight, potential_track

    A = auto_weight(contraction_run)
    return potential_track(contraction_run, A)


@pytest.fixture(scope="session")
def contraction_reports(contraction_run, contraction_tracks):
    from calabiflow import estimate_sweep

    return estimate_sweep(contraction_run, contraction_tracks)


def momentum_chart(state):
    """Monotone-cubic momentum reconstruction of a snapshot."""
    from scipy.interpolate import PchipInterpolator

    from calabiflow import flow_to_momentum

    x, w = flow_to_momentum(state.normalized_profile())
    return PchipInterpolator(x, w, extrapolate=False)


_ACCEPTANCE_LINES: list[str] = []


def check(name: str, ok: bool, detail: str = ""):
    line = f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
    print(line)
    _ACCEPTANCE_LINES.append(line)
    assert ok, f"{name} failed: {detail}"


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
