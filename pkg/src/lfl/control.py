"""Line-following control law: binary error, discrete PID with integral clamp,
differential motor mixing, and the bang-bang baseline."""

from __future__ import annotations

from dataclasses import dataclass
from math import floor
from typing import NamedTuple


INTEGRAL_LIMIT = 50.0
LOST_LIMIT = 10
PWM_MAX = 255


@dataclass(frozen=True)
class PidGains:
    kp: float = 4.8
    ki: float = 22.0
    kd: float = 0.18
    t_s: float = 0.05

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError(f"gains must be >= 0, got {self}")
        if not self.t_s > 0:
            raise ValueError("t_s must be > 0")


class PidState(NamedTuple):
    integral: float = 0.0
    prev_error: float = 0.0
    lost_counter: int = 0
    v_base: int = 150


class MotorCommand(NamedTuple):
    pwm_left: int
    pwm_right: int
    reverse_left: bool = False
    reverse_right: bool = False


STOP = MotorCommand(0, 0)


def compute_error(s_left: int, s_right: int, lost_counter: int) -> tuple[float, int]:
    """Position error from two line bits, with the consecutive-loss counter."""
    if s_left == 0 and s_right == 0:
        return 0.0, lost_counter + 1
    return (s_left - s_right) / 2.0, 0


def pid_step(state: PidState, gains: PidGains, error: float) -> tuple[PidState, float]:
    t_s = gains.t_s
    integral = state.integral + error * t_s
    # clamp after accumulation
    if integral > INTEGRAL_LIMIT:
        integral = INTEGRAL_LIMIT
    elif integral < -INTEGRAL_LIMIT:
        integral = -INTEGRAL_LIMIT
    derivative = (error - state.prev_error) / t_s
    u = gains.kp * error + gains.ki * integral + gains.kd * derivative
    return PidState(integral, error, state.lost_counter, state.v_base), u


def _clip_pwm(v: float) -> int:
    # round half away from zero, then clip
    p = int(floor(v + 0.5)) if v >= 0 else -int(floor(0.5 - v))
    return 0 if p < 0 else (PWM_MAX if p > PWM_MAX else p)


def mix_motors(v_base: int, u: float) -> MotorCommand:
    """Left wheel gets ``v_base + u``, right ``v_base - u``, both clipped to [0, 255]."""
    if not 0 <= v_base <= PWM_MAX:
        raise ValueError(f"v_base must be in [0, 255], got {v_base}")
    return MotorCommand(_clip_pwm(v_base + u), _clip_pwm(v_base - u))


def onoff_step(s_left: int, s_right: int, v_base: int, v_turn: int = 60) -> MotorCommand:
    """Bang-bang baseline: a fixed +-v_turn differential whenever exactly one bit is set.

    Steers in the same sense as :func:`mix_motors` does for a positive error,
    so both controllers agree on which way a given bit pattern turns the robot.
    """
    if s_left == s_right:
        return MotorCommand(v_base, v_base)
    u = v_turn if s_left else -v_turn
    return mix_motors(v_base, u)


class ControlOutput(NamedTuple):
    state: PidState
    command: MotorCommand
    lost: bool
    error: float
    u: float


def control_tick(frame, state: PidState, gains: PidGains) -> tuple[PidState, MotorCommand, bool]:
    out = pid_tick(frame.bit_left, frame.bit_right, state, gains)
    return out.state, out.command, out.lost


def pid_tick(s_left: int, s_right: int, state: PidState, gains: PidGains) -> ControlOutput:
    error, lost_counter = compute_error(s_left, s_right, state.lost_counter)
    state, u = pid_step(state._replace(lost_counter=lost_counter), gains, error)
    return ControlOutput(state, mix_motors(state.v_base, u), lost_counter > LOST_LIMIT, error, u)


def onoff_tick(s_left: int, s_right: int, state: PidState, v_turn: int) -> ControlOutput:
    error, lost_counter = compute_error(s_left, s_right, state.lost_counter)
    cmd = onoff_step(s_left, s_right, state.v_base, v_turn)
    u = 0.0 if s_left == s_right else (float(v_turn) if s_left else -float(v_turn))
    state = state._replace(lost_counter=lost_counter, prev_error=error)
    return ControlOutput(state, cmd, lost_counter > LOST_LIMIT, error, u)
