from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from crimetaxis.errors import DegeneracyError, StepFailure, UsageError
from crimetaxis.grid import Grid, integrate
from crimetaxis.model import Parameters
from crimetaxis.stepper import (State, StepControl, Thresholds, TrajectoryCollector, detect_blowup,
                                run, step_imex)

G = Grid(16, 16)


def bump_state(grid=G, amp=1.0, width=0.2):
    X, Y = grid.centers()
    g = np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / width**2)
    return State(0.0, 0.5 + amp * g, 1.0 + 0.3 * g, grid)


def test_fixed_point_step_is_stationary():
    s = State(0.0, np.ones(G.shape), np.ones(G.shape), G)
    res = step_imex(s, Parameters(rho=2, mu=1, chi=7), StepControl())
    assert np.max(np.abs(res.state.u - 1)) <= 1e-13
    assert np.max(np.abs(res.state.v - 1)) <= 1e-13
    assert res.rejections == 0


def test_pure_decay_recurrence():
    s = State(0.0, np.zeros(G.shape), np.ones(G.shape), G)
    ctrl = StepControl(dt_init=0.01, t_end=1.0, output_every=0.25)
    col = TrajectoryCollector()
    res = run(s, Parameters(), ctrl, col)
    assert res.stats.steps == 100
    assert not res.state.u.any()
    np.testing.assert_allclose(res.state.v, 1.01**-100, rtol=1e-12)
    for t, v in zip(col.times, col.vs):
        assert np.min(v) >= math.exp(-t)


def test_t_end_zero_returns_initial_state():
    s = bump_state()
    res = run(s, Parameters(), StepControl(t_end=0.0))
    assert res.state is s and not res.status.triggered and res.stats.steps == 0


def test_output_times_hit_exactly():
    col = TrajectoryCollector(keep_fields=False)
    run(bump_state(), Parameters(), StepControl(dt_init=0.003, t_end=0.1, output_every=0.025), col)
    assert col.times == [0.0, 0.025, 0.05, 0.075, 0.1]


def test_detect_blowup_kinds():
    ones = np.ones(G.shape)
    assert detect_blowup(State(0.0, ones, ones, G), Thresholds(1e6, 1e6, 0.1)).kind == "none"
    u = ones.copy()
    u[2, 3] = 1e9
    st_ = detect_blowup(State(1.5, u, ones, G), Thresholds(u_sup_max=1e6))
    assert (st_.kind, st_.value, st_.time) == ("u_sup_blowup", 1e9, 1.5)
    X, _ = G.centers()
    assert detect_blowup(State(0.0, ones, 1 + 50 * X, G), Thresholds(v_w1inf_max=40)).kind \
        == "v_w1inf_blowup"


def test_degeneracy_reported_near_ln2():
    s = State(0.0, np.zeros(G.shape), np.ones(G.shape), G)
    res = run(s, Parameters(), StepControl(dt_init=1e-3, t_end=1.0), thresholds=Thresholds(v_min=0.5))
    assert res.status.kind == "v_degeneracy"
    assert abs(res.status.time - math.log(2)) <= 2e-3
    assert res.status.value < 0.5


def test_positivity_guard_raises_with_state():
    s = State(0.0, np.zeros(G.shape), np.ones(G.shape), G)
    with pytest.raises(DegeneracyError) as exc:
        run(s, Parameters(), StepControl(dt_init=0.01, v_guard=0.9, t_end=1.0))
    assert exc.value.state is not None and np.min(exc.value.state.v) > 0.9


def test_rejection_halves_step_without_clamping():
    s = bump_state(amp=20.0, width=0.1)
    res = step_imex(s, Parameters(chi=5), StepControl(dt_init=0.05))
    assert res.rejections >= 1
    assert res.dt == 0.05 / 2**res.rejections
    assert np.min(res.state.u) >= 0


def test_dt_underflow_is_a_step_failure():
    s = bump_state(amp=20.0, width=0.1)
    with pytest.raises(StepFailure):
        step_imex(s, Parameters(chi=5), StepControl(dt_init=0.05, dt_min=0.04))


def test_parameters_required():
    with pytest.raises(UsageError):
        step_imex(bump_state(), None, StepControl())


@pytest.mark.parametrize("kw", [dict(dt_init=0), dict(dt_min=1.0), dict(cfl_safety=1.5),
                                dict(v_guard=0.0), dict(output_every=0), dict(t_end=-1)])
def test_control_validation(kw):
    with pytest.raises(UsageError):
        StepControl(**kw)


def test_heat_only_conserves_both_masses():
    s = bump_state()
    res = run(s, None, StepControl(dt_init=0.01, t_end=0.2), heat_only=True)
    for a, b in ((s.u, res.state.u), (s.v, res.state.v)):
        assert integrate(b, G) == pytest.approx(integrate(a, G), rel=1e-12)


def test_large_sensitivity_stress_run_is_structured():
    # strong taxis on a tall bump: the run finishes (recorded outcome) and stays nonnegative
    g = Grid(32, 32)
    X, Y = g.centers()
    bump = np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / 0.01)
    s = State(0.0, 0.5 + 10 * bump, 1 + 0.3 * bump, g)
    res = run(s, Parameters(chi=20), StepControl(t_end=0.5, output_every=0.1),
              thresholds=Thresholds(u_sup_max=1e6))
    assert res.status.kind in ("none", "u_sup_blowup")
    assert np.min(res.state.u) >= 0 and res.stats.clamps == 0


G6 = Grid(6, 6)


@settings(max_examples=25)
@given(arrays(np.float64, G6.shape, elements=st.floats(0.0, 20.0)),
       arrays(np.float64, G6.shape, elements=st.floats(0.05, 10.0)),
       st.floats(0.5, 10.0), st.floats(-2.0, 4.0), st.floats(0.0, 2.0))
def test_step_preserves_positivity(u, v, chi, rho, gamma):
    p = Parameters(rho=rho, mu=1.0, chi=chi, gamma=gamma)
    s = State(0.0, u, v, G6)
    res = step_imex(s, p, StepControl(dt_init=0.01, dt_min=1e-12))
    assert np.min(res.state.u) >= 0
    assert np.min(res.state.v) >= np.min(v) / (1 + res.dt) * (1 - 1e-12)


def test_reruns_are_bit_identical():
    def once():
        col = TrajectoryCollector()
        run(bump_state(amp=5.0, width=0.15), Parameters(chi=4, eps=0.2),
            StepControl(dt_init=5e-3, t_end=0.2, output_every=0.05), col)
        return col
    a, b = once(), once()
    assert all(np.array_equal(x, y) for x, y in zip(a.us + a.vs, b.us + b.vs))
    assert a.records == b.records
