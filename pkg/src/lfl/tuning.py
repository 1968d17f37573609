"""Ziegler-Nichols Type 2 (ultimate gain) tuning.

The closed loop is run P-only while the proportional gain is bisected
between a decaying and a growing response.  The midpoint is the ultimate
gain K_u and the oscillation period there is T_u; :func:`zn_gains` turns the
pair into PID gains with the classic table.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import signal

from .config import Config
from .control import PidGains
from .sim import Setup, run_scenario

MIN_TRACE_S = 10.0
TRANSIENT_S = 2.0
BAND = 0.05
DEFAULT_TOLERANCE = 0.05
RATIO_EPS = 1e-6


class TuningError(RuntimeError):
    """Raised when no oscillation can be classified or no critical gain bracketed."""

    def __init__(self, message: str, traces: Optional[dict] = None):
        super().__init__(message)
        self.traces = traces or {}


class NoOscillation(TuningError):
    pass


class Oscillation(NamedTuple):
    classification: str  # decaying | sustained | growing
    period: float
    amplitude: float
    ratio: float


class ClosedLoopRun(NamedTuple):
    trace: Sequence[float]
    dt: float
    diverged: bool = False


@dataclass
class OscillationReport:
    ku: float
    tu: float
    amplitude: float
    classification: str
    iterations: int = 0
    history: list = field(default_factory=list)
    trace: Sequence[float] = ()
    dt: float = 0.05


def _crossings(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Linearly interpolated sign-change instants."""
    s = np.signbit(x)
    idx = np.nonzero(s[1:] != s[:-1])[0]
    x0, x1 = x[idx], x[idx + 1]
    frac = np.where(x1 != x0, x0 / (x0 - x1), 0.0)
    return t[idx] + frac * (t[idx + 1] - t[idx])


def classify_oscillation(trace: Sequence[float], dt: float = 0.05, *,
                         transient: float = TRANSIENT_S, band: float = BAND) -> Oscillation:
    """Classify an error trace as decaying, sustained or growing.

    Peak magnitudes of successive half-cycles are fitted with a log-linear
    trend; the cycle-to-cycle amplitude ratio ``r`` is the square of the
    per-half-cycle factor.  ``r`` inside ``1 +- band`` counts as sustained.

    Raises:
        ValueError: trace shorter than 10 s.
        NoOscillation: fewer than four zero crossings after the transient.
    """
    x = np.asarray(trace, dtype=float)
    if len(x) * dt < MIN_TRACE_S - 1e-9:
        raise ValueError(f"trace too short: {len(x) * dt:.2f} s < {MIN_TRACE_S:.0f} s")
    skip = int(round(transient / dt))
    x = x[skip:]
    t = np.arange(len(x)) * dt
    xc = _crossings(t, x)
    if len(xc) < 4:
        raise NoOscillation("no oscillation: fewer than 4 zero crossings")
    period = 2.0 * float(np.mean(np.diff(xc)))
    peaks = []
    for a, b in zip(xc[:-1], xc[1:]):
        seg = x[(t >= a) & (t <= b)]
        if len(seg):
            peaks.append(float(np.max(np.abs(seg))))
    peaks = np.asarray(peaks)
    amplitude = float(np.mean(peaks))
    if len(peaks) < 2 or np.any(peaks <= 0):
        ratio = 1.0
    else:
        slope = np.polyfit(np.arange(len(peaks)), np.log(peaks), 1)[0]
        ratio = float(math.exp(2.0 * slope))
    if ratio < 1.0 - band:
        kind = "decaying"
    elif ratio > 1.0 + band:
        kind = "growing"
    else:
        kind = "sustained"
    return Oscillation(kind, period, amplitude, ratio)


def zn_gains(ku: float, tu: float, t_s: float = 0.05) -> PidGains:
    """Classic ZN table: kp = 0.6 ku, ki = 2 kp / tu, kd = kp tu / 8.

    Evaluated in decimal on the shortest repr of the inputs, so decimal inputs
    such as (8.5, 0.4) give the nearest floats to the decimal results.
    """
    if not tu > 0:
        raise ValueError("tu must be > 0")
    if ku < 0:
        raise ValueError("ku must be >= 0")
    dku, dtu = Decimal(repr(float(ku))), Decimal(repr(float(tu)))
    kp = Decimal("0.6") * dku
    return PidGains(float(kp), float(2 * kp / dtu), float(kp * dtu / 8), t_s)


def _judge(run: ClosedLoopRun) -> tuple[str, float, Optional[Oscillation]]:
    """(verdict, ratio, oscillation) with verdict 'low' or 'high' relative to K_u."""
    if run.diverged:
        return "high", math.inf, None
    try:
        osc = classify_oscillation(run.trace, run.dt)
    except NoOscillation:
        return "low", 0.0, None
    # a relay-like limit cycle has ratio 1 up to rounding, so allow a hair below
    return ("high" if osc.ratio >= 1.0 - RATIO_EPS else "low"), osc.ratio, osc


def find_critical_gain(closed_loop: Callable[[float], ClosedLoopRun],
                       kp_range: tuple[float, float],
                       tolerance: float = DEFAULT_TOLERANCE) -> OscillationReport:
    """Bisect the P gain until the decaying/growing bracket is narrower than ``tolerance``.

    Raises:
        TuningError: the range does not bracket the critical gain.
    """
    lo, hi = kp_range
    if not 0 <= lo < hi:
        raise ValueError(f"kp_range must satisfy 0 <= lo < hi, got {kp_range}")
    if not tolerance > 0:
        raise ValueError("tolerance must be > 0")
    history = []
    judged = []
    for k in (lo, hi):
        run = closed_loop(k)
        verdict, ratio, osc = _judge(run)
        judged.append((run, verdict, osc))
        history.append((k, verdict, ratio))
    if judged[0][1] != "low" or judged[1][1] != "high":
        raise TuningError(
            f"range [{lo}, {hi}] does not bracket the critical gain "
            f"(lo is {judged[0][1]}, hi is {judged[1][1]})",
            {lo: list(judged[0][0].trace), hi: list(judged[1][0].trace)})
    best_run, best_osc = judged[1][0], judged[1][2]
    iterations = 0
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        run = closed_loop(mid)
        verdict, ratio, osc = _judge(run)
        history.append((mid, verdict, ratio))
        iterations += 1
        if verdict == "high":
            hi = mid
            if osc is not None:
                best_run, best_osc = run, osc
        else:
            lo = mid
    if best_osc is None:
        raise TuningError("the loop diverged at every gain above the critical one",
                          {hi: list(best_run.trace)})
    # T_u comes from the lowest gain seen to oscillate
    return OscillationReport(0.5 * (lo + hi), best_osc.period, best_osc.amplitude,
                             best_osc.classification, iterations, history,
                             list(best_run.trace), best_run.dt)


# --- closed loops -------------------------------------------------------------

class ReferencePlant:
    """Third-order test plant 1/(s(s+1)(s+2)) in unity feedback.

    Discretised with the bilinear transform, which keeps the phase-crossover
    gain of the continuous plant (K_u = 6) and only slightly warps the period
    (T_u = 2 pi / sqrt 2 in continuous time).
    """

    KU = 6.0
    TU = 2.0 * math.pi / math.sqrt(2.0)

    def __init__(self, dt: float = 0.05, duration: float = 60.0, setpoint: float = 1.0):
        self.dt = dt
        self.duration = duration
        self.setpoint = setpoint
        num, den, _ = signal.cont2discrete(([1.0], [1.0, 3.0, 2.0, 0.0]), dt, method="bilinear")
        b = np.ravel(num)
        a = np.ravel(den)
        self.b = b / a[0]
        self.a = a / a[0]

    def __call__(self, kp: float) -> ClosedLoopRun:
        b, a = self.b, self.a
        n = int(round(self.duration / self.dt))
        order = len(a) - 1
        u_hist = [0.0] * order
        y_hist = [0.0] * order
        r = self.setpoint
        trace = []
        for _ in range(n):
            # y_k = b0 u_k + s, u_k = kp (r - y_k): solve the algebraic loop
            s = sum(b[i + 1] * u_hist[i] for i in range(order)) \
                - sum(a[i + 1] * y_hist[i] for i in range(order))
            y = (b[0] * kp * r + s) / (1.0 + b[0] * kp)
            u = kp * (r - y)
            u_hist = [u] + u_hist[:-1]
            y_hist = [y] + y_hist[:-1]
            trace.append(r - y)
            if not math.isfinite(y) or abs(y) > 1e9:
                return ClosedLoopRun(trace, self.dt, True)
        return ClosedLoopRun(trace, self.dt)


class RobotLoop:
    """P-only line following from a 1 cm offset, the robot-side tuning experiment."""

    def __init__(self, config: Config, duration: float = 10.0, seed: Optional[int] = None):
        self.config = config.updated({
            "track": "tuning",
            "fsm.enabled": False,
            "controller.kind": "pid",
            "pid.ki": 0.0,
            "pid.kd": 0.0,
            "sim.initial_offset": 0.01,
            "sim.initial_offset_sigma": 0.0,
            "sim.initial_heading_sigma": 0.0,
        })
        self.duration = duration
        self.seed = config["seed"] if seed is None else seed
        self.setup = Setup.from_config(self.config)

    def __call__(self, kp: float) -> ClosedLoopRun:
        su = self.setup
        setup = dataclasses.replace(su, gains=PidGains(kp, 0.0, 0.0, su.gains.t_s))
        result = run_scenario(setup, self.duration, self.seed)
        trace = [row.lateral_error for row in result.ticks]
        return ClosedLoopRun(trace, su.period, result.status != "ok")
