"""IMEX time stepping with positivity-preserving step control.

One step of length ``dt`` solves

    (I - dt Δ) u'         = u + dt (-∇·J(u, v) - uv + ρu - μu^{2+γ})
    ((1 + dt) I - dt Δ) v' = v + dt uv

where ``J`` is the upwind taxis flux.  The linear decay of ``v`` sits on the
implicit side so that ``min v' >= min v / (1 + dt)`` holds by the discrete
maximum principle, which gives ``min v(t) >= e^{-t} min v0`` with no slack.
Nonnegativity of ``u'`` comes from restricting ``dt`` so every cell keeps a
nonnegative explicit right-hand side; values are never clamped.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .diagnostics import DiagnosticsConfig, DiagnosticsRecord, RunningIntegrals
from .errors import DegeneracyError, NumericalFailure, StepFailure, UsageError
from .grid import Grid, gradient_centered, taxis_terms
from .linsolve import ShiftedLaplaceSolver, SolverError
from .model import Parameters, reaction_u

logger = logging.getLogger(__name__)

GROW_AFTER = 10
GROW_FACTOR = 1.2


@dataclass(frozen=True)
class State:
    t: float
    u: np.ndarray
    v: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.grid.check(self.u, "u")
        self.grid.check(self.v, "v")
        if not math.isfinite(self.t):
            raise UsageError("state time must be finite")


@dataclass(frozen=True)
class StepControl:
    dt_init: float = 1e-3
    dt_min: float = 1e-9
    cfl_safety: float = 0.9
    v_guard: float | None = None  # None: 1e-12 * min v0, resolved by run()
    t_end: float = 1.0
    output_every: float = 0.1
    solver_rtol: float = 1e-10

    def __post_init__(self):
        if not (self.dt_init > 0 and self.dt_min > 0):
            raise UsageError("dt_init and dt_min must be positive")
        if self.dt_min > self.dt_init:
            raise UsageError("dt_min must not exceed dt_init")
        if not 0 < self.cfl_safety <= 1:
            raise UsageError("cfl_safety must lie in (0, 1]")
        if self.v_guard is not None and not self.v_guard > 0:
            raise UsageError("v_guard must be positive")
        if not self.output_every > 0:
            raise UsageError("output_every must be positive")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise UsageError("t_end must be finite and nonnegative")


@dataclass(frozen=True)
class Thresholds:
    u_sup_max: float = math.inf
    v_w1inf_max: float = math.inf
    v_min: float = 0.0


@dataclass(frozen=True)
class BlowupStatus:
    kind: str = "none"  # none | u_sup_blowup | v_w1inf_blowup | v_degeneracy
    value: float = math.nan
    time: float = math.nan

    @property
    def triggered(self) -> bool:
        return self.kind != "none"


@dataclass(frozen=True)
class StepResult:
    state: State
    dt: float
    rejections: int
    solver_iterations: int


@dataclass
class RunStats:
    steps: int = 0
    rejections: int = 0
    clamps: int = 0  # stays 0: the scheme never clamps
    dt_smallest: float = math.inf
    dt_largest: float = 0.0
    solver_iterations: int = 0


@dataclass(frozen=True)
class RunResult:
    state: State
    status: BlowupStatus
    stats: RunStats


class _Reject(Exception):
    pass


_solvers: dict[tuple, ShiftedLaplaceSolver] = {}


def _solver(grid: Grid, rtol: float) -> ShiftedLaplaceSolver:
    key = (grid, rtol)
    if key not in _solvers:
        _solvers[key] = ShiftedLaplaceSolver(grid, rtol=rtol)
    return _solvers[key]


def _check_finite(state: State, arr: np.ndarray, name: str, info: dict) -> None:
    # a NaN or inf anywhere makes the sum non-finite
    if not math.isfinite(float(np.sum(arr))):
        raise NumericalFailure(f"non-finite values in {name}", state=state, info=info)


def _advance(state: State, p: Parameters | None, ctrl: StepControl, dt: float, heat_only: bool):
    grid = state.grid
    u, v = state.u, state.v
    solver = _solver(grid, ctrl.solver_rtol)
    if heat_only:
        rhs_u, rhs_v, shift_v = u, v, 1.0
    else:
        div, outflow = taxis_terms(u, v, p, grid)
        rate = outflow + v + max(-p.rho, 0.0)
        rate = rate + p.mu * (u if p.gamma == 0 else u ** (1.0 + p.gamma))
        rate_max = float(np.max(rate))
        if dt * rate_max > ctrl.cfl_safety:
            raise _Reject(f"positivity restriction: dt*rate = {dt * rate_max:.3e}")
        rhs_u = u + dt * (reaction_u(u, v, p) - div)
        if np.any(rhs_u < 0):
            raise _Reject("negative explicit right-hand side")
        rhs_v = v + dt * (u * v)
        shift_v = 1.0 + dt
    info = {"t": state.t, "dt": dt}
    _check_finite(state, rhs_u, "u right-hand side", info)
    _check_finite(state, rhs_v, "v right-hand side", info)
    try:
        u_new, v_new, its = solver.solve_pair(rhs_u, rhs_v, dt, 1.0, shift_v)
    except SolverError as exc:
        raise _Reject(str(exc)) from exc
    _check_finite(state, u_new, "u", info)
    _check_finite(state, v_new, "v", info)
    if np.any(u_new < 0):
        raise _Reject("negative u after diffusion solve")
    return u_new, v_new, its


def step_imex(state: State, p: Parameters | None, ctrl: StepControl, dt: float | None = None,
              *, heat_only: bool = False) -> StepResult:
    """Advance ``state`` by one accepted step, halving ``dt`` on rejection.

    ``heat_only`` switches off taxis, reactions and coupling so both
    components follow the pure heat flow (``p`` may then be ``None``).
    """
    if p is None and not heat_only:
        raise UsageError("parameters are required unless heat_only is set")
    dt = ctrl.dt_init if dt is None else float(dt)
    guard = 0.0 if ctrl.v_guard is None else ctrl.v_guard
    rejections = 0
    if not heat_only and np.any(state.v <= guard):
        raise DegeneracyError("v at or below the positivity guard", state=state,
                              info={"t": state.t, "min_v": float(np.min(state.v))})
    while True:
        if dt < ctrl.dt_min:
            raise StepFailure(f"time step underflow (dt={dt:.3e} < dt_min={ctrl.dt_min:.3e})",
                              state=state, info={"t": state.t, "rejections": rejections})
        try:
            u_new, v_new, its = _advance(state, p, ctrl, dt, heat_only)
        except _Reject as exc:
            logger.debug("step at t=%g rejected with dt=%g: %s", state.t, dt, exc)
            rejections += 1
            dt *= 0.5
            continue
        break
    if not heat_only and np.any(v_new <= guard):
        raise DegeneracyError("v fell to the positivity guard", state=state,
                              info={"t": state.t + dt, "min_v": float(np.min(v_new))})
    return StepResult(State(state.t + dt, u_new, v_new, state.grid), dt, rejections, its)


def detect_blowup(state: State, thresholds: Thresholds) -> BlowupStatus:
    """First threshold crossed among sup u, max(|v| + |∇v|) and min v."""
    u_max = float(np.max(state.u))
    if u_max > thresholds.u_sup_max:
        return BlowupStatus("u_sup_blowup", u_max, state.t)
    if math.isfinite(thresholds.v_w1inf_max):
        gx, gy = gradient_centered(state.v, state.grid)
        w = float(np.max(np.abs(state.v) + np.sqrt(gx * gx + gy * gy)))
        if w > thresholds.v_w1inf_max:
            return BlowupStatus("v_w1inf_blowup", w, state.t)
    v_min = float(np.min(state.v))
    if v_min < thresholds.v_min:
        return BlowupStatus("v_degeneracy", v_min, state.t)
    return BlowupStatus()


Sink = Callable[[DiagnosticsRecord, State], None]


def run(s0: State, p: Parameters | None, ctrl: StepControl, sink: Sink | None = None,
        thresholds: Thresholds = Thresholds(),
        diag: DiagnosticsConfig = DiagnosticsConfig(), *, heat_only: bool = False) -> RunResult:
    """Step from ``s0`` to ``ctrl.t_end``, emitting a record at every multiple of ``output_every``.

    Steps are shortened so that output times are hit exactly.  The step size
    is halved on rejection and grows by 1.2x after ten accepted steps, never
    beyond ``dt_init``.  Step errors propagate with the last good state attached.
    """
    if ctrl.v_guard is None:
        ctrl = replace(ctrl, v_guard=1e-12 * float(np.min(s0.v)) if not heat_only else None)
    stats = RunStats()
    params = p if p is not None else Parameters()
    acc = RunningIntegrals(s0, params, diag)
    if sink is not None:
        sink(acc.record(s0), s0)
    state = s0
    status = detect_blowup(state, thresholds)
    if status.triggered or ctrl.t_end <= s0.t:
        return RunResult(state, status, stats)
    dt = ctrl.dt_init
    streak = 0
    k_out = math.floor(s0.t / ctrl.output_every + 1e-9) + 1
    while state.t < ctrl.t_end:
        # rounded so decimal output spacings give decimal times (0.075, not 0.07500000000000001)
        next_out = round(k_out * ctrl.output_every, 12)
        target = min(next_out, ctrl.t_end)
        gap = target - state.t
        clipped = gap <= dt * (1.0 + 1e-6)
        trial = gap if clipped else dt
        try:
            res = step_imex(state, p, ctrl, trial, heat_only=heat_only)
        except StepFailure as exc:
            exc.info.setdefault("steps", stats.steps)
            if exc.state is None:
                exc.state = state
            raise
        new = res.state
        if res.rejections:
            dt = min(dt, res.dt)
            streak = 0
            clipped = False
        else:
            streak += 1
        if clipped:
            new = replace(new, t=target)
        stats.steps += 1
        stats.rejections += res.rejections
        stats.solver_iterations += res.solver_iterations
        stats.dt_smallest = min(stats.dt_smallest, res.dt)
        stats.dt_largest = max(stats.dt_largest, res.dt)
        acc.advance(new, res.dt)
        state = new
        if streak >= GROW_AFTER and dt < ctrl.dt_init:
            dt = min(dt * GROW_FACTOR, ctrl.dt_init)
            streak = 0
        if state.t >= next_out * (1 - 1e-12) or state.t >= ctrl.t_end:
            if state.t >= next_out * (1 - 1e-12):
                k_out += 1
            if sink is not None:
                sink(acc.record(state), state)
        status = detect_blowup(state, thresholds)
        if status.triggered:
            break
    return RunResult(state, status, stats)


@dataclass
class TrajectoryCollector:
    """Sink that keeps every emitted record and, optionally, the fields."""

    keep_fields: bool = True
    records: list[DiagnosticsRecord] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    us: list[np.ndarray] = field(default_factory=list)
    vs: list[np.ndarray] = field(default_factory=list)

    def __call__(self, record: DiagnosticsRecord, state: State) -> None:
        self.records.append(record)
        self.times.append(state.t)
        if self.keep_fields:
            self.us.append(state.u)
            self.vs.append(state.v)

    def trajectory(self, grid: Grid):
        from .diagnostics import Trajectory

        return Trajectory(grid, np.array(self.times), np.array(self.us), np.array(self.vs),
                          list(self.records))
