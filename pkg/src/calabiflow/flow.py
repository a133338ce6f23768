"""Time evolution of the Calabi-symmetric Kahler-Ricci flow.

The Kahler class moves linearly, a(t) = a0 - (lam-m-1) t and
b(t) = b0 - (m+2) t, and the first zero is the singular time T with the
trichotomy Contraction (a first), Collapse (b first), Extinction (tie).
After rescaling to T = 1 the flow is integrated in normalized time
s = -ln(1-t), where the profile equation reads

    d phi'/ds = phi'''/phi'' + m phi''/phi' + n phi''/(a+phi') - (m+1) + phi'

with the normalized class a(s) = e^s (a0 - slope_a) + slope_a and likewise
for b.  Stepping is classical explicit RK4 with the parabolic step size
dt = sigma h^2 min(phi'') (the linearised diffusivity is 1/phi'').  The
diffusivity diverges in the exponential tails, where the profile is pure
closure asymptotics to machine accuracy, so nodes with phi' or b - phi'
under a floor are slaved to the closure anchored at the active interface
and the CFL minimum runs over the active nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConeViolation, NumericalBlowup
from .profile import (
    BundleConfig,
    Grid,
    KahlerClass,
    Profile,
    differentiate,
    initial_profile,
)

CONTRACTION = "Contraction"
COLLAPSE = "Collapse"
EXTINCTION = "Extinction"

_EXTINCTION_TIE = 1e-12  # |t_a - t_b| <= tie * T classifies as Extinction


@dataclass(frozen=True)
class ClassPath:
    """Linear Kahler-class trajectory and its singularity classification."""

    a0: float
    b0: float
    slope_a: float
    slope_b: float
    t_a: float
    t_b: float
    T: float
    sing_type: str
    proportional_to_anticanonical: bool

    def a_at(self, t: float) -> float:
        return self.a0 - self.slope_a * t

    def b_at(self, t: float) -> float:
        return self.b0 - self.slope_b * t

    def a_norm(self, s: float) -> float:
        """e^s a(t(s)) for T = 1: constant plus a growing multiple of e^s."""
        return math.exp(s) * (self.a0 - self.slope_a) + self.slope_a

    def b_norm(self, s: float) -> float:
        return math.exp(s) * (self.b0 - self.slope_b) + self.slope_b

    def db_norm(self, s: float) -> float:
        return math.exp(s) * (self.b0 - self.slope_b)


def class_path(config: BundleConfig, class0: KahlerClass) -> ClassPath:
    """Class trajectory from the initial class; the singular time is always
    finite because b decays at the fixed rate m + 2 > 0."""
    slope_a = config.lam - config.m - 1
    slope_b = float(config.m + 2)
    t_a = class0.a / slope_a if slope_a > 0 else math.inf
    t_b = class0.b / slope_b
    T = min(t_a, t_b)
    if math.isfinite(t_a) and abs(t_a - t_b) <= _EXTINCTION_TIE * T:
        sing = EXTINCTION
    elif t_a < t_b:
        sing = CONTRACTION
    else:
        sing = COLLAPSE
    proportional = abs(class0.a * slope_b - class0.b * slope_a) <= 1e-12 * class0.a * slope_b
    return ClassPath(
        a0=class0.a,
        b0=class0.b,
        slope_a=slope_a,
        slope_b=slope_b,
        t_a=t_a,
        t_b=t_b,
        T=T,
        sing_type=sing,
        proportional_to_anticanonical=proportional,
    )


def rescale_to_unit_time(path: ClassPath, class0: KahlerClass) -> tuple[ClassPath, KahlerClass]:
    """Parabolic rescaling g -> T^-1 g(T t): divides the class by T, keeps
    the slopes, and moves the singular time to 1."""
    if not math.isfinite(path.T):
        raise ValueError("singular time is not finite; nothing to rescale")
    cls = KahlerClass(a=class0.a / path.T, b=class0.b / path.T)
    m = int(round(path.slope_b - 2))
    cfg_like = BundleConfig(n=1, m=m, lam=path.slope_a + m + 1)
    return class_path(cfg_like, cls), cls


@dataclass(frozen=True)
class StepController:
    """Explicit-step policy: cfl_sigma in (0, 0.5] is the parabolic safety
    factor; tail_floor is the fraction of the (rescaled) initial b below
    which phi' and b - phi' are slaved to the closure asymptotics; dt_max
    optionally caps the step below the parabolic bound."""

    cfl_sigma: float = 0.2
    tail_floor: float = 0.02
    dt_max: float | None = None
    max_steps: int = 200_000_000

    def __post_init__(self):
        if not (0.0 < self.cfl_sigma <= 0.5):
            raise ValueError("cfl_sigma must lie in (0, 0.5]")
        if not (0.0 < self.tail_floor < 0.2):
            raise ValueError("tail_floor must lie in (0, 0.2)")
        if self.dt_max is not None and not self.dt_max > 0:
            raise ValueError("dt_max must be positive when given")


def compute_dt(cfl_sigma: float, h: float, min_d2phi: float) -> float:
    """Parabolic step bound dt = sigma h^2 min(phi'')."""
    return cfl_sigma * h * h * min_d2phi


@dataclass(frozen=True)
class FlowState:
    """Snapshot of the flow at one time, in unnormalized variables.

    profile holds phi' etc. of g(t); the normalized metric of the
    s-parametrization is the exact rescaling e^s * profile.  phi_anchor is
    phi at the grid's anchor node in the gauge where the flow potential
    carries no normalisation constant.  active marks the node range that
    was dynamically evolved (the tails outside follow the closures).
    """

    t: float
    s: float
    profile: Profile
    class_now: KahlerClass
    phi_anchor: float
    active: tuple[int, int]

    def normalized_profile(self) -> Profile:
        return self.profile.scaled(math.exp(self.s))

    def normalized_class(self) -> KahlerClass:
        e = math.exp(self.s)
        return KahlerClass(a=self.class_now.a * e, b=self.class_now.b * e)

    @property
    def phi_anchor_normalized(self) -> float:
        return self.phi_anchor * math.exp(self.s)


def rhs_dphi(state: FlowState, parametrization: str = "unnormalized") -> np.ndarray:
    """d phi'/dt (or d phi~'/ds for parametrization="normalized") at every
    node, from the state's own stencil derivatives."""
    prof = state.profile if parametrization == "unnormalized" else state.normalized_profile()
    cls = state.class_now if parametrization == "unnormalized" else state.normalized_class()
    if not (np.all(prof.dphi > 0) and np.all(prof.dphi < cls.b)):
        raise ConeViolation("phi' outside (0, b)")
    if prof.d2phi is None:
        prof = differentiate(prof)
    if not np.all(prof.d2phi > 0):
        raise ConeViolation("phi'' nonpositive")
    n, m = _infer_nm(state)
    rhs = prof.d3phi / prof.d2phi + n * prof.d2phi / (cls.a + prof.dphi) - (m + 1)
    if m:
        rhs = rhs + m * prof.d2phi / prof.dphi
    if parametrization == "normalized":
        rhs = rhs + prof.dphi
    return rhs


def _infer_nm(state: FlowState) -> tuple[int, int]:
    cfg = getattr(state, "_config", None)
    if cfg is None:
        raise ValueError("state carries no bundle config; use flow_rhs with explicit config")
    return cfg.n, cfg.m


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one integration: scheduled snapshots plus termination."""

    config: BundleConfig
    class0: KahlerClass
    path: ClassPath
    schedule: tuple[float, ...]
    states: tuple[FlowState, ...]
    termination: dict


class _Integrator:
    """Normalized- or unnormalized-time RK4 core with slaved tails."""

    def __init__(
        self,
        config: BundleConfig,
        path: ClassPath,
        grid: Grid,
        controller: StepController,
        parametrization: str,
    ):
        if abs(path.T - 1.0) > 1e-9:
            raise ValueError("integration requires the class path rescaled to T = 1")
        if parametrization not in ("normalized", "unnormalized"):
            raise ValueError(f"unknown parametrization {parametrization!r}")
        self.config = config
        self.path = path
        self.grid = grid
        self.ctrl = controller
        self.normalized = parametrization == "normalized"
        self.h = grid.h
        self.N = grid.count
        self.i_anchor = grid.anchor_index
        self.cut_ref = controller.tail_floor * path.b0
        # state
        self.y = None  # phi' in the working parametrization
        self.anchor = 0.0
        self.tau = 0.0  # s if normalized else t
        self.i_lo = 0
        self.i_hi = self.N - 1
        self.steps = 0
        self._exp_lo = None
        self._exp_hi = None
        k = np.arange(1, 4)
        self._mlo = np.exp(-self.h * k[::-1])
        self._mhi = np.exp(-self.h * k)

    # -- class coefficients in the working parametrization ------------
    def _ab(self, tau: float) -> tuple[float, float]:
        if self.normalized:
            return self.path.a_norm(tau), self.path.b_norm(tau)
        return self.path.a_at(tau), self.path.b_at(tau)

    def _cut(self, tau: float) -> float:
        if self.normalized:
            return self.cut_ref
        return self.cut_ref * (1.0 - tau)

    # -- tail slaving ---------------------------------------------------
    def _project(self, y: np.ndarray, b: float) -> np.ndarray:
        # The upper gap is floored at 1e-11 b: below that the saturated
        # profile is beyond double resolution against the analytic class
        # coefficients (b(t) itself carries ~1e-13 b cancellation noise).
        if self.i_lo > 0:
            y[: self.i_lo] = y[self.i_lo] * self._exp_lo
        if self.i_hi < self.N - 1:
            gap = np.maximum((b - y[self.i_hi]) * self._exp_hi, 1e-11 * b)
            y[self.i_hi + 1 :] = b - gap
        return y

    # -- right-hand side ------------------------------------------------
    def _stage(
        self, core: np.ndarray, anchor_val: float, tau: float
    ) -> tuple[np.ndarray, float, np.ndarray]:
        """rhs on the active core; `core` are the values on [i_lo, i_hi].

        The three stencil margins on each side follow the closure anchored
        at the core endpoints whether they fall on slaved grid nodes or
        beyond the grid, so no full-grid state is needed per stage.
        """
        a, b = self._ab(tau)
        p = np.concatenate((core[0] * self._mlo, core, b - (b - core[-1]) * self._mhi))
        h = self.h
        d2 = (p[1:-5] - 8 * p[2:-4] + 8 * p[4:-2] - p[5:-1]) / (12 * h)
        d3 = (-p[1:-5] + 16 * p[2:-4] - 30 * p[3:-3] + 16 * p[4:-2] - p[5:-1]) / (12 * h * h)
        n, m = self.config.n, self.config.m
        rhs = d3 / d2 + n * d2 / (a + core) - (m + 1)
        if m:
            rhs += m * d2 / core
        if self.normalized:
            rhs += core
        # anchor-node data: closure-model values when rho ~ 0 sits in a tail
        if self.i_anchor < self.i_lo:
            x0 = core[0] * math.exp(self.h * (self.i_anchor - self.i_lo))
            w0 = x0
        elif self.i_anchor > self.i_hi:
            gap = (b - core[-1]) * math.exp(-self.h * (self.i_anchor - self.i_hi))
            x0, w0 = b - gap, gap
        else:
            j = self.i_anchor - self.i_lo
            x0 = core[j]
            w0 = d2[j]
        logvol = n * math.log(a + x0) + m * math.log(x0) + math.log(w0)
        if self.normalized:
            anchor_rhs = anchor_val + logvol - self.config.dim_total * tau
        else:
            anchor_rhs = logvol
        return rhs, anchor_rhs, d2

    def seed(self, profile: Profile, anchor: float, tau: float) -> None:
        self.y = np.array(profile.dphi, dtype=float)
        self.anchor = float(anchor)
        self.tau = float(tau)
        _, b = self._ab(tau)
        self._update_active(b, self._cut(tau))
        self._project(self.y, b)

    def _update_active(self, b: float, cut: float) -> None:
        y = self.y
        i_lo = int(np.searchsorted(y, cut))
        i_hi = int(np.searchsorted(y, b - cut, side="right")) - 1
        i_lo = min(i_lo, self.N - 1)
        i_hi = max(i_hi, 0)
        if i_hi - i_lo < 16:
            raise ConeViolation(
                f"active region collapsed to [{i_lo}, {i_hi}]; profile unresolved on this grid"
            )
        if (i_lo, i_hi) != (self.i_lo, self.i_hi) or self._exp_lo is None:
            self._exp_lo = np.exp(self.h * (np.arange(i_lo) - i_lo))
            self._exp_hi = np.exp(-self.h * (np.arange(i_hi + 1, self.N) - i_hi))
        self.i_lo, self.i_hi = i_lo, i_hi

    def step(self, dt_cap: float) -> float:
        """One adaptive RK4 step, at most dt_cap; returns the dt taken."""
        tau = self.tau
        _, b = self._ab(tau)
        self._update_active(b, self._cut(tau))
        act = slice(self.i_lo, self.i_hi + 1)
        y0 = self.y[act]
        k1, ka1, d2 = self._stage(y0, self.anchor, tau)
        min_d2 = float(np.min(d2))
        if not np.isfinite(min_d2) or min_d2 <= 0.0:
            raise ConeViolation(f"phi'' lost positivity on the active region at s/t={tau:.6f}")
        dt = min(compute_dt(self.ctrl.cfl_sigma, self.h, min_d2), dt_cap)
        if self.ctrl.dt_max is not None:
            dt = min(dt, self.ctrl.dt_max)
        half = 0.5 * dt
        k2, ka2, _ = self._stage(y0 + half * k1, self.anchor + half * ka1, tau + half)
        k3, ka3, _ = self._stage(y0 + half * k2, self.anchor + half * ka2, tau + half)
        k4, ka4, _ = self._stage(y0 + dt * k3, self.anchor + dt * ka3, tau + dt)
        y_new_core = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y_new_core)):
            raise NumericalBlowup(f"non-finite profile values after step at s/t={tau:.6f}")
        self.y[act] = y_new_core
        _, b_new = self._ab(tau + dt)
        self._project(self.y, b_new)
        self.anchor = self.anchor + (dt / 6.0) * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4)
        self.tau = tau + dt
        self.steps += 1
        return dt

    def advance_to(self, tau_target: float) -> None:
        while self.tau < tau_target - 1e-14:
            if self.steps >= self.ctrl.max_steps:
                raise NumericalBlowup(f"step budget exhausted at tau={self.tau:.6f}")
            self.step(tau_target - self.tau)
        # land exactly on the checkpoint (the residual slip is O(1e-14),
        # far below dt); keeps scheduled s values exact in the snapshots
        self.tau = tau_target

    # -- snapshots --------------------------------------------------------
    def snapshot(self) -> FlowState:
        if self.normalized:
            s = self.tau
            t = 1.0 - math.exp(-s)
            scale = math.exp(-s)
        else:
            t = self.tau
            s = -math.log(1.0 - t)
            scale = 1.0
        a_t, b_t = self.path.a_at(t), self.path.b_at(t)
        dphi_un = self.y * scale
        prof = differentiate(
            Profile(grid=self.grid, phi0=self.anchor * scale, b=b_t, dphi=dphi_un)
        )
        state = FlowState(
            t=t,
            s=s,
            profile=prof,
            class_now=KahlerClass(a=a_t, b=b_t),
            phi_anchor=self.anchor * scale,
            active=(self.i_lo, self.i_hi),
        )
        object.__setattr__(state, "_config", self.config)
        return state


def _seed_state(config: BundleConfig, class0: KahlerClass, grid: Grid) -> tuple[Profile, float]:
    prof = initial_profile(class0, grid, derivatives="stencil")
    return prof, prof.phi0


def step(state: FlowState, controller: StepController | None = None) -> FlowState:
    """One adaptive RK4 step of the normalized flow from a snapshot."""
    controller = controller or StepController()
    config = getattr(state, "_config", None)
    if config is None:
        raise ValueError("state was not produced by this module's run/seeding helpers")
    path = class_path(config, KahlerClass(
        a=state.class_now.a + (config.lam - config.m - 1) * state.t,
        b=state.class_now.b + (config.m + 2) * state.t,
    ))
    integ = _Integrator(config, path, state.profile.grid, controller, "normalized")
    integ.seed(state.normalized_profile(), state.phi_anchor_normalized, state.s)
    integ.step(math.inf)
    out = integ.snapshot()
    cone = _post_cone_check(out)
    if not cone:
        raise ConeViolation("step output failed the cone validation")
    return out


def _post_cone_check(state: FlowState) -> bool:
    from .profile import validate_cone

    rep = validate_cone(state.profile, state.class_now, tol=1e-3)
    return rep.ok


def make_state(
    config: BundleConfig,
    class0: KahlerClass,
    grid: Grid,
    profile: Profile | None = None,
    phi_anchor: float | None = None,
) -> FlowState:
    """Initial FlowState at t = 0 (canonical seed unless a profile is given)."""
    if profile is None:
        profile, anchor = _seed_state(config, class0, grid)
    else:
        if profile.d2phi is None:
            profile = differentiate(profile)
        anchor = profile.phi0 if phi_anchor is None else phi_anchor
    state = FlowState(
        t=0.0,
        s=0.0,
        profile=profile,
        class_now=class0,
        phi_anchor=anchor,
        active=(0, grid.count - 1),
    )
    object.__setattr__(state, "_config", config)
    return state


def run(
    config: BundleConfig,
    class0: KahlerClass,
    grid: Grid,
    schedule: list[float],
    controller: StepController | None = None,
    parametrization: str = "normalized",
    initial_state: FlowState | None = None,
    on_checkpoint=None,
) -> RunRecord:
    """Integrate from s = 0 through the scheduled s checkpoints.

    Requires the class path already rescaled to T = 1.  Emits one snapshot
    per checkpoint (s = 0 included only if scheduled); on ConeViolation or
    NumericalBlowup the record carries the failing s in termination and the
    snapshots collected so far.
    """
    controller = controller or StepController()
    schedule = tuple(float(s) for s in schedule)
    if not schedule:
        raise ValueError("schedule must contain at least one checkpoint")
    if any(s2 < s1 for s1, s2 in zip(schedule, schedule[1:])) or schedule[0] < 0:
        raise ValueError("schedule must be an increasing list of s >= 0")
    path = class_path(config, class0)
    integ = _Integrator(config, path, grid, controller, parametrization)
    if initial_state is None:
        prof, anchor = _seed_state(config, class0, grid)
    else:
        prof, anchor = initial_state.profile, initial_state.phi_anchor
        if initial_state.t != 0.0:
            raise ValueError("initial_state must sit at t = 0")
    integ.seed(prof, anchor, 0.0)

    states: list[FlowState] = []
    termination = {"completed": True, "reason": "schedule exhausted", "s_reached": 0.0, "steps": 0}
    try:
        for s_k in schedule:
            tau_k = s_k if parametrization == "normalized" else 1.0 - math.exp(-s_k)
            integ.advance_to(tau_k)
            snap = integ.snapshot()
            states.append(snap)
            if on_checkpoint is not None:
                on_checkpoint(snap)
    except (ConeViolation, NumericalBlowup) as err:
        s_fail = integ.tau if parametrization == "normalized" else -math.log(1.0 - integ.tau)
        termination = {
            "completed": False,
            "reason": f"{type(err).__name__}: {err}",
            "s_reached": s_fail,
            "steps": integ.steps,
        }
    else:
        s_done = integ.tau if parametrization == "normalized" else -math.log(1.0 - integ.tau)
        termination["s_reached"] = s_done
        termination["steps"] = integ.steps
    return RunRecord(
        config=config,
        class0=class0,
        path=path,
        schedule=schedule,
        states=tuple(states),
        termination=termination,
    )
