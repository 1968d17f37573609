"""Supervisor transitions, AVOID phase timing and the recovery spiral."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from lfl.control import STOP
from lfl.supervisor import (AvoidPhase, FsmInputs, FsmParams, Mode, SupervisorState,
                            commanded_radius, fsm_step, spiral_command, spiral_radius)

DT = 0.05
CLEAR = FsmInputs(False, None, True, False)
NEAR = FsmInputs(False, 0.15, True, False)

EDGES = {
    (Mode.FOLLOW, Mode.DETECT), (Mode.FOLLOW, Mode.SEARCH), (Mode.DETECT, Mode.AVOID),
    (Mode.DETECT, Mode.FOLLOW), (Mode.AVOID, Mode.AVOID), (Mode.AVOID, Mode.RECOVER),
    (Mode.RECOVER, Mode.FOLLOW), (Mode.RECOVER, Mode.SEARCH), (Mode.SEARCH, Mode.FOLLOW),
}


def test_confirmed_debounce_enters_detect():
    s, d = fsm_step(SupervisorState(), FsmInputs(True, 0.15, True, False), DT)
    assert s.mode is Mode.DETECT and d.kind == "pid_confirm" and s.trigger


def test_far_sample_returns_to_follow():
    s = SupervisorState(mode=Mode.DETECT)
    s, d = fsm_step(s, FsmInputs(False, 0.25, True, False), DT)
    assert s.mode is Mode.FOLLOW and d.kind == "pid"


def test_second_confirmation_enters_avoid():
    s = SupervisorState(mode=Mode.DETECT)
    s, _ = fsm_step(s, NEAR, DT)
    assert s.mode is Mode.DETECT
    s, d = fsm_step(s, NEAR, DT)
    assert s.mode is Mode.AVOID and s.avoid_phase is AvoidPhase.STOP and d.command == STOP


def test_lost_line_enters_search():
    s, d = fsm_step(SupervisorState(), FsmInputs(False, None, False, True), DT)
    assert s.mode is Mode.SEARCH and d.kind == "search"


def _avoid_phases(params=FsmParams()):
    s, _ = fsm_step(SupervisorState(mode=Mode.DETECT, detect_hits=1), NEAR, DT, params)
    phases = [s.avoid_phase]
    while s.mode is Mode.AVOID:
        s, _ = fsm_step(s, CLEAR, DT, params)
        phases.append(s.avoid_phase if s.mode is Mode.AVOID else s.mode)
    return phases, s


def test_avoid_phase_boundaries():
    phases, end = _avoid_phases()
    # tick k after entry is at t0 + k*DT; phase changes on exact multiples
    first = {p: phases.index(p) for p in (AvoidPhase.REVERSE, AvoidPhase.TURN,
                                          AvoidPhase.FORWARD)}
    assert first[AvoidPhase.REVERSE] * DT == pytest.approx(1.0)
    assert first[AvoidPhase.TURN] * DT == pytest.approx(1.5)
    assert first[AvoidPhase.FORWARD] * DT == pytest.approx(2.5)
    assert end.mode is Mode.RECOVER


def test_avoid_commands():
    s = SupervisorState(mode=Mode.AVOID, avoid_phase=AvoidPhase.STOP)
    kinds = set()
    for _ in range(80):
        s, d = fsm_step(s, CLEAR, DT)
        if s.mode is not Mode.AVOID:
            break
        kinds.add((s.avoid_phase, d.command))
    cmds = dict(kinds)
    assert cmds[AvoidPhase.STOP] == STOP
    rev = cmds[AvoidPhase.REVERSE]
    assert rev.reverse_left and rev.reverse_right
    assert cmds[AvoidPhase.TURN][:2] == (40, 125)


def test_obstacle_still_present_restarts_avoid():
    s = SupervisorState(mode=Mode.AVOID, avoid_phase=AvoidPhase.FORWARD, odometer=0.2)
    s, d = fsm_step(s, NEAR, DT)
    assert s.mode is Mode.AVOID and s.avoid_phase is AvoidPhase.STOP and s.trigger


def test_recover_times_out_after_five_seconds():
    s = SupervisorState(mode=Mode.RECOVER)
    lost = FsmInputs(False, None, False, False)
    t = 0.0
    while s.mode is Mode.RECOVER:
        s, _ = fsm_step(s, lost, DT)
        t += DT
        assert s.recover_elapsed <= 5.0 and s.spiral_radius <= 0.30
    assert s.mode is Mode.SEARCH
    assert t == pytest.approx(5.0)
    assert t < 5.05


def test_recover_and_search_exit_on_line():
    s, _ = fsm_step(SupervisorState(mode=Mode.RECOVER), CLEAR, DT)
    assert s.mode is Mode.FOLLOW
    s, _ = fsm_step(SupervisorState(mode=Mode.SEARCH), CLEAR, DT)
    assert s.mode is Mode.FOLLOW


@pytest.mark.parametrize("t, r", [(0.0, 0.05), (2.5, 0.175), (5.0, 0.30), (9.0, 0.30)])
def test_spiral_radius(t, r):
    assert spiral_radius(t) == pytest.approx(r, abs=1e-12)


@pytest.mark.parametrize("t", [0.0, 1.0, 2.5, 4.0, 5.0])
def test_spiral_command_traces_radius(t):
    cmd = spiral_command(t)
    assert commanded_radius(cmd, FsmParams().wheel_base) == pytest.approx(spiral_radius(t),
                                                                          rel=0.05)


modes = st.sampled_from(list(Mode))
phases = st.sampled_from(list(AvoidPhase))
inputs = st.builds(FsmInputs, st.booleans(), st.one_of(st.none(), st.floats(0.0, 1.0)),
                   st.booleans(), st.booleans())


@settings(max_examples=300)
@given(st.lists(inputs, max_size=200))
def test_only_defined_edges_and_pure(seq):
    a = b = SupervisorState()
    for inp in seq:
        na, da = fsm_step(a, inp, DT)
        nb, db = fsm_step(b, inp, DT)
        assert (na, da) == (nb, db)
        if na.trigger:
            assert (a.mode, na.mode) in EDGES
        else:
            assert na.mode is a.mode
        assert na.phase_clock >= 0.0
        if na.mode is Mode.AVOID:
            assert na.avoid_phase is not None and da.command is not None
        if na.mode is Mode.DETECT:
            assert na.detect_hits < FsmParams().confirm_samples
        a, b = na, nb


@given(st.lists(inputs, max_size=200))
def test_detect_resolves_within_two_samples(seq):
    s = SupervisorState()
    run = 0
    for inp in seq:
        s, _ = fsm_step(s, inp, DT)
        run = run + 1 if s.mode is Mode.DETECT else 0
        assert run <= 2
