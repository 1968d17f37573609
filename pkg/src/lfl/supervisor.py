"""Five-mode supervisor arbitrating between the line controller and open-loop
obstacle maneuvers.

Modes and edges::

    FOLLOW  -> DETECT   three consecutive ranges below 0.20 m (debounced)
    FOLLOW  -> SEARCH   line lost for more than 10 ticks
    DETECT  -> AVOID    two further consecutive ranges below 0.20 m
    DETECT  -> FOLLOW   any range at or beyond 0.20 m
    AVOID   -> AVOID    obstacle still in range after the forward leg
    AVOID   -> RECOVER  forward leg done, path clear
    RECOVER -> FOLLOW   line seen
    RECOVER -> SEARCH   5 s of spiral without the line
    SEARCH  -> FOLLOW   line seen

AVOID runs STOP 1.0 s, REVERSE 0.5 s, TURN (left) 1.0 s, then FORWARD until
10 cm of commanded travel.  All timing is counted in whole control ticks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

from .control import STOP, MotorCommand
from .plant import V_MAX, pwm_to_speed, speed_to_pwm
from .sensors import DEBOUNCE_DISTANCE, round_half_away

_EPS = 1e-9


class Mode(str, Enum):
    FOLLOW = "FOLLOW"
    DETECT = "DETECT"
    AVOID = "AVOID"
    RECOVER = "RECOVER"
    SEARCH = "SEARCH"


class AvoidPhase(str, Enum):
    STOP = "STOP"
    REVERSE = "REVERSE"
    TURN = "TURN"
    FORWARD = "FORWARD"


@dataclass(frozen=True)
class FsmParams:
    threshold: float = DEBOUNCE_DISTANCE
    confirm_samples: int = 2
    stop_s: float = 1.0
    reverse_s: float = 0.5
    turn_s: float = 1.0
    forward_m: float = 0.10
    reverse_pwm: int = 120
    turn_pwm_left: int = 40
    turn_pwm_right: int = 125
    forward_pwm: int = 150
    search_pwm: int = 100
    search_ccw: bool = True
    recover_max_s: float = 5.0
    spiral_r0: float = 0.05
    spiral_r1: float = 0.30
    spiral_pwm: int = 120
    spiral_cw: bool = True
    wheel_base: float = 0.14


class SupervisorState(NamedTuple):
    mode: Mode = Mode.FOLLOW
    phase_ticks: int = 0
    phase_clock: float = 0.0
    avoid_phase: Optional[AvoidPhase] = None
    detect_hits: int = 0
    recover_elapsed: float = 0.0
    spiral_radius: float = 0.0
    odometer: float = 0.0
    trigger: str = ""


class FsmInputs(NamedTuple):
    debounce_confirmed: bool
    distance: Optional[float]
    line_seen: bool
    lost: bool


class Directive(NamedTuple):
    """What the actuators do this tick.

    ``kind`` is ``pid`` (FOLLOW), ``pid_confirm`` (DETECT), ``maneuver`` (AVOID),
    ``spiral`` (RECOVER) or ``search`` (SEARCH); ``command`` is ``None`` when the
    line controller drives.
    """

    kind: str
    command: Optional[MotorCommand] = None


def spiral_radius(recover_elapsed: float, params: FsmParams = FsmParams()) -> float:
    """Turn radius growing linearly over the recovery window."""
    f = min(max(recover_elapsed / params.recover_max_s, 0.0), 1.0)
    return params.spiral_r0 + f * (params.spiral_r1 - params.spiral_r0)


def spiral_command(recover_elapsed: float, params: FsmParams = FsmParams()) -> MotorCommand:
    """Wheel command tracing the recovery spiral at the spiral forward speed.

    If the outer wheel would exceed the top speed both wheels are scaled down
    together, which keeps the turn radius and gives up forward speed.
    """
    r = spiral_radius(recover_elapsed, params)
    v = pwm_to_speed(params.spiral_pwm)
    k = params.wheel_base / (2.0 * r)
    outer, inner = v * (1.0 + k), v * (1.0 - k)
    if outer > V_MAX:
        inner *= V_MAX / outer
        outer = V_MAX
    p_out = round_half_away(speed_to_pwm(outer))
    p_in = round_half_away(speed_to_pwm(abs(inner)))
    if params.spiral_cw:
        return MotorCommand(p_out, p_in, False, inner < 0)
    return MotorCommand(p_in, p_out, inner < 0, False)


def _search_command(params: FsmParams) -> MotorCommand:
    p = params.search_pwm
    return MotorCommand(p, p, params.search_ccw, not params.search_ccw)


def _ticks(seconds: float, dt: float) -> int:
    return max(1, int(round(seconds / dt)))


def _enter(mode: Mode, trigger: str, **fields) -> SupervisorState:
    return SupervisorState(mode=mode, trigger=trigger, **fields)


def _avoid_entry(trigger: str) -> tuple[SupervisorState, Directive]:
    return (_enter(Mode.AVOID, trigger, avoid_phase=AvoidPhase.STOP),
            Directive("maneuver", STOP))


def _follow(trigger: str) -> tuple[SupervisorState, Directive]:
    return _enter(Mode.FOLLOW, trigger), Directive("pid")


def _search(trigger: str, params: FsmParams) -> tuple[SupervisorState, Directive]:
    return _enter(Mode.SEARCH, trigger), Directive("search", _search_command(params))


def _below(distance: Optional[float], params: FsmParams) -> bool:
    return distance is not None and distance < params.threshold


def fsm_step(state: SupervisorState, inputs: FsmInputs, dt: float,
             params: FsmParams = FsmParams()) -> tuple[SupervisorState, Directive]:
    """One supervisor tick.  ``state.trigger`` is non-empty on transition ticks."""
    mode = state.mode

    if mode is Mode.FOLLOW:
        if inputs.debounce_confirmed:
            return _enter(Mode.DETECT, "debounce confirmed"), Directive("pid_confirm")
        if inputs.lost:
            return _search("line lost", params)
        return state._replace(trigger=""), Directive("pid")

    if mode is Mode.DETECT:
        if not _below(inputs.distance, params):
            return _follow("detect cleared")
        hits = state.detect_hits + 1
        if hits >= params.confirm_samples:
            return _avoid_entry("obstacle confirmed")
        return state._replace(detect_hits=hits, trigger=""), Directive("pid_confirm")

    if mode is Mode.AVOID:
        phase = state.avoid_phase
        ticks = state.phase_ticks + 1
        odometer = state.odometer
        if phase is AvoidPhase.STOP and ticks >= _ticks(params.stop_s, dt):
            phase, ticks = AvoidPhase.REVERSE, 0
        elif phase is AvoidPhase.REVERSE and ticks >= _ticks(params.reverse_s, dt):
            phase, ticks = AvoidPhase.TURN, 0
        elif phase is AvoidPhase.TURN and ticks >= _ticks(params.turn_s, dt):
            phase, ticks, odometer = AvoidPhase.FORWARD, 0, 0.0
        elif phase is AvoidPhase.FORWARD and odometer >= params.forward_m - _EPS:
            if _below(inputs.distance, params):
                return _avoid_entry("obstacle persists")
            return (_enter(Mode.RECOVER, "forward leg done",
                           spiral_radius=spiral_radius(0.0, params)),
                    Directive("spiral", spiral_command(0.0, params)))
        if phase is AvoidPhase.STOP:
            cmd = STOP
        elif phase is AvoidPhase.REVERSE:
            cmd = MotorCommand(params.reverse_pwm, params.reverse_pwm, True, True)
        elif phase is AvoidPhase.TURN:
            cmd = MotorCommand(params.turn_pwm_left, params.turn_pwm_right)
        else:
            cmd = MotorCommand(params.forward_pwm, params.forward_pwm)
            # odometry from the commanded wheel speed; there are no encoders
            odometer += pwm_to_speed(params.forward_pwm) * dt
        new = state._replace(avoid_phase=phase, phase_ticks=ticks, phase_clock=ticks * dt,
                             odometer=odometer, trigger="")
        return new, Directive("maneuver", cmd)

    if mode is Mode.RECOVER:
        if inputs.line_seen:
            return _follow("line reacquired")
        ticks = state.phase_ticks + 1
        elapsed = ticks * dt
        if elapsed >= params.recover_max_s - _EPS:
            return _search("recover timeout", params)
        new = state._replace(phase_ticks=ticks, phase_clock=elapsed, recover_elapsed=elapsed,
                             spiral_radius=spiral_radius(elapsed, params), trigger="")
        return new, Directive("spiral", spiral_command(elapsed, params))

    # SEARCH
    if inputs.line_seen:
        return _follow("line found")
    ticks = state.phase_ticks + 1
    return (state._replace(phase_ticks=ticks, phase_clock=ticks * dt, trigger=""),
            Directive("search", _search_command(params)))


def commanded_radius(cmd: MotorCommand, wheel_base: float) -> float:
    """Turn radius implied by a wheel command at steady state (inf when straight)."""
    vl = pwm_to_speed(cmd.pwm_left) * (-1 if cmd.reverse_left else 1)
    vr = pwm_to_speed(cmd.pwm_right) * (-1 if cmd.reverse_right else 1)
    if vl == vr:
        return math.inf
    return abs(wheel_base / 2.0 * (vl + vr) / (vr - vl))
