"""Differential-drive plant with first-order motor lag.

Wheel speeds relax exponentially toward the steady-state speed for the
commanded PWM, and the pose is integrated with the exact constant-twist (arc)
update so that splitting a step never changes the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numba

PWM_ANCHORS = ((100, 0.25), (125, 0.32), (150, 0.40), (175, 0.47), (200, 0.55))
PWM_DEADZONE = 30
WHEEL_DIAMETER = 0.065
OMEGA_EPS = 1e-9
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Geometry:
    """Chassis layout in metres.

    ``ir_left_side`` is the lateral sign of the sensor feeding S_L (+1 robot's
    left, -1 robot's right).  The control law speeds up the left wheel when S_L
    reads the line, so on a straddling sensor bar that sensor must sit on the
    right for the loop to steer toward the line.
    """

    wheel_base: float = 0.14
    sensor_forward_offset: float = 0.10
    sensor_lateral_spacing: float = 0.03
    ultrasonic_forward_offset: float = 0.10
    ir_left_side: int = -1


@dataclass(frozen=True)
class PlantParams:
    tau_m: float = 0.08
    deadzone: int = PWM_DEADZONE
    gain_left: float = 1.0
    gain_right: float = 1.0


class RobotState(NamedTuple):
    x: float
    y: float
    heading: float
    v_left: float = 0.0
    v_right: float = 0.0
    geometry: Geometry = Geometry()


def _slope(i: int) -> float:
    (p0, v0), (p1, v1) = PWM_ANCHORS[i], PWM_ANCHORS[i + 1]
    return (v1 - v0) / (p1 - p0)


def pwm_to_speed(pwm: int, deadzone: int = PWM_DEADZONE) -> float:
    """Steady-state wheel surface speed (m/s) for a PWM duty value.

    Piecewise linear through the measured anchors, extrapolated on the end
    slopes, and zero inside the dead zone.
    """
    if not 0 <= pwm <= 255:
        raise ValueError(f"pwm must be in [0, 255], got {pwm}")
    if pwm < deadzone:
        return 0.0
    if pwm <= PWM_ANCHORS[0][0]:
        return PWM_ANCHORS[0][1] + (pwm - PWM_ANCHORS[0][0]) * _slope(0)
    for i in range(len(PWM_ANCHORS) - 1):
        p1 = PWM_ANCHORS[i + 1][0]
        if pwm <= p1:
            p0, v0 = PWM_ANCHORS[i]
            return v0 + (pwm - p0) * _slope(i)
    p0, v0 = PWM_ANCHORS[-1]
    return v0 + (pwm - p0) * _slope(len(PWM_ANCHORS) - 2)


V_MAX = pwm_to_speed(255)


def speed_to_pwm(speed: float, deadzone: int = PWM_DEADZONE) -> float:
    """Inverse of :func:`pwm_to_speed` for a non-negative speed (unrounded).

    Speeds below the dead-zone edge map to 0; speeds above ``V_MAX`` map to 255.
    """
    if speed <= 0.0:
        return 0.0
    floor = pwm_to_speed(deadzone, deadzone) if deadzone > 0 else 0.0
    if speed < floor:
        return 0.0 if speed < floor / 2 else float(deadzone)
    if speed >= V_MAX:
        return 255.0
    if speed <= PWM_ANCHORS[0][1]:
        return PWM_ANCHORS[0][0] + (speed - PWM_ANCHORS[0][1]) / _slope(0)
    for i in range(len(PWM_ANCHORS) - 1):
        v1 = PWM_ANCHORS[i + 1][1]
        if speed <= v1:
            p0, v0 = PWM_ANCHORS[i]
            return p0 + (speed - v0) / _slope(i)
    p0, v0 = PWM_ANCHORS[-1]
    return p0 + (speed - v0) / _slope(len(PWM_ANCHORS) - 2)


def wheel_targets(pwm_left: int, pwm_right: int, params: PlantParams,
                  reverse_left: bool = False, reverse_right: bool = False) -> tuple[float, float]:
    tl = params.gain_left * pwm_to_speed(pwm_left, params.deadzone)
    tr = params.gain_right * pwm_to_speed(pwm_right, params.deadzone)
    return (-tl if reverse_left else tl), (-tr if reverse_right else tr)


def _lag_factors(dt: float, tau: float) -> tuple[float, float]:
    """(end-of-step weight, step-mean weight) of the initial speed."""
    if tau <= 0.0:
        return 0.0, 0.0
    a = math.exp(-dt / tau)
    return a, tau / dt * (1.0 - a)


def step_dynamics(state: RobotState, pwm_left: int, pwm_right: int, dt: float,
                  params: PlantParams = PlantParams(), *,
                  reverse_left: bool = False, reverse_right: bool = False) -> RobotState:
    """Advance the plant by ``dt`` seconds under a constant motor command.

    Wheel speeds follow the first-order lag exactly; the pose is moved along
    the arc defined by the step-mean wheel speeds.
    """
    if not 0 < dt <= 0.05:
        raise ValueError(f"dt must be in (0, 0.05] s, got {dt}")
    tl, tr = wheel_targets(pwm_left, pwm_right, params, reverse_left, reverse_right)
    a, m = _lag_factors(dt, params.tau_m)
    x, y, h, vl, vr = _substep(state.x, state.y, state.heading, state.v_left, state.v_right,
                               tl, tr, state.geometry.wheel_base, a, m, dt)
    return RobotState(x, y, h, vl, vr, state.geometry)


def _substep(x, y, h, vl, vr, tl, tr, b, a, m, dt):
    ml = tl + (vl - tl) * m
    mr = tr + (vr - tr) * m
    v = 0.5 * (ml + mr)
    w = (mr - ml) / b
    if abs(w) < OMEGA_EPS:
        x += v * dt * math.cos(h)
        y += v * dt * math.sin(h)
        h1 = h
    else:
        h1 = h + w * dt
        r = v / w
        x += r * (math.sin(h1) - math.sin(h))
        y -= r * (math.cos(h1) - math.cos(h))
    # wrap into [-pi, pi]
    h1 -= TWO_PI * math.floor(h1 / TWO_PI + 0.5)
    return x, y, h1, tl + (vl - tl) * a, tr + (vr - tr) * a


_substep_jit = numba.njit(cache=True)(_substep)


@numba.njit(cache=True)
def _advance_jit(x, y, h, vl, vr, tl, tr, b, a, m, dt, n):
    for _ in range(n):
        x, y, h, vl, vr = _substep_jit(x, y, h, vl, vr, tl, tr, b, a, m, dt)
    return x, y, h, vl, vr


def advance(state: RobotState, targets: tuple[float, float], duration: float,
            substep: float, params: PlantParams) -> RobotState:
    """Repeated :func:`step_dynamics` over ``duration`` in ``substep`` pieces (compiled)."""
    n = int(round(duration / substep))
    a, m = _lag_factors(substep, params.tau_m)
    x, y, h, vl, vr = _advance_jit(state.x, state.y, state.heading, state.v_left,
                                   state.v_right, targets[0], targets[1],
                                   state.geometry.wheel_base, a, m, substep, n)
    return RobotState(x, y, h, vl, vr, state.geometry)
