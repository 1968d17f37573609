"""Fixed-rate scenario runner.

One control tick every ``controller.period`` seconds (20 Hz by default):
read sensors at the current pose, run the line controller and supervisor,
then integrate the plant in 1 ms sub-steps under the resulting command.

Each IR channel is read as a burst of five ADC conversions at the start of
the tick and the median of the burst is binarised (``ir.median_mode =
burst``).  ``rolling`` instead keeps one sample per tick in a five-tick
window, which delays every line edge by two ticks.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional, Sequence, TextIO

from .config import Config
from .control import PidGains, PidState, onoff_tick, pid_tick
from .plant import Geometry, PlantParams, RobotState, advance, wheel_targets
from .rng import NormalStream
from .sensors import (DebounceState, IrSensorModel, UltrasonicModel, debounce_update,
                      measure_distance, read_ir, read_ir_burst)
from .supervisor import FsmInputs, FsmParams, Mode, SupervisorState, fsm_step
from .track import OFF_TRACK_LIMIT, Track, load_track

TICK_FIELDS = ("t", "x", "y", "heading", "lateral_error", "raw_left", "raw_right",
               "filt_left", "filt_right", "bit_left", "bit_right", "ultrasonic", "mode",
               "pwm_left", "pwm_right", "error", "integral", "u")

_PID_MODES = (Mode.FOLLOW, Mode.DETECT)


class TickLog(NamedTuple):
    t: float
    x: float
    y: float
    heading: float
    lateral_error: float
    raw_left: int
    raw_right: int
    filt_left: int
    filt_right: int
    bit_left: int
    bit_right: int
    ultrasonic: Optional[float]
    mode: str
    pwm_left: int
    pwm_right: int
    error: float
    integral: float
    u: float


class Event(NamedTuple):
    t: float
    from_mode: str
    to_mode: str
    trigger: str


@dataclass(frozen=True)
class Setup:
    """Everything a scenario needs, resolved from a :class:`Config`."""

    track: Track
    geometry: Geometry = Geometry()
    plant: PlantParams = PlantParams()
    ir: IrSensorModel = IrSensorModel()
    us: UltrasonicModel = UltrasonicModel()
    gains: PidGains = PidGains()
    fsm: FsmParams = FsmParams()
    controller: str = "pid"
    v_base: int = 150
    v_turn: int = 60
    threshold_left: int = 450
    threshold_right: int = 450
    median_mode: str = "burst"
    fsm_enabled: bool = False
    substep: float = 0.001
    initial_offset: float = 0.0
    initial_heading: float = 0.0
    initial_offset_sigma: float = 0.0
    initial_heading_sigma: float = 0.0

    @property
    def period(self) -> float:
        return self.gains.t_s

    @classmethod
    def from_config(cls, cfg: Config, track: Optional[Track] = None) -> "Setup":
        if track is None:
            track = load_track(cfg["track"])
        if cfg["ir.edge_blend"] and not track.edge_blend:
            track = Track(track.segments, track.line_width, track.reflect_line,
                          track.reflect_surface, track.obstacles, True, track.min_radius)
        kind = cfg["controller.kind"]
        if kind not in ("pid", "onoff"):
            raise ValueError(f"controller.kind must be pid or onoff, got {kind!r}")
        if cfg["ir.median_mode"] not in ("burst", "rolling"):
            raise ValueError("ir.median_mode must be burst or rolling")
        side = cfg["plant.ir_left_side"]
        if side not in (-1, 1):
            raise ValueError("plant.ir_left_side must be -1 or 1")
        geometry = Geometry(cfg["plant.wheel_base"], cfg["plant.sensor_forward_offset"],
                            cfg["plant.sensor_spacing"], cfg["plant.ultrasonic_offset"], side)
        period = cfg["controller.period"]
        return cls(
            track=track,
            geometry=geometry,
            plant=PlantParams(cfg["plant.tau_m"], cfg["plant.deadzone"],
                              cfg["plant.gain_left"], cfg["plant.gain_right"]),
            ir=IrSensorModel(cfg["ir.gain"], cfg["ir.noise_sigma"]),
            us=UltrasonicModel(cfg["us.max_range"], cfg["us.min_range"], cfg["us.temperature"],
                               cfg["us.jitter_sigma"], 1.0 / period),
            gains=PidGains(cfg["pid.kp"], cfg["pid.ki"], cfg["pid.kd"], period),
            fsm=FsmParams(turn_pwm_left=cfg["fsm.turn_pwm_left"],
                          turn_pwm_right=cfg["fsm.turn_pwm_right"],
                          reverse_pwm=cfg["fsm.reverse_pwm"],
                          forward_pwm=cfg["fsm.forward_pwm"],
                          search_pwm=cfg["fsm.search_pwm"],
                          spiral_pwm=cfg["fsm.spiral_pwm"],
                          wheel_base=cfg["plant.wheel_base"]),
            controller=kind,
            v_base=cfg["pid.base_pwm"],
            v_turn=cfg["onoff.v_turn"],
            threshold_left=cfg["ir.threshold_left"],
            threshold_right=cfg["ir.threshold_right"],
            median_mode=cfg["ir.median_mode"],
            fsm_enabled=cfg["fsm.enabled"],
            substep=cfg["sim.substep"],
            initial_offset=cfg["sim.initial_offset"],
            initial_heading=cfg["sim.initial_heading"],
            initial_offset_sigma=cfg["sim.initial_offset_sigma"],
            initial_heading_sigma=cfg["sim.initial_heading_sigma"],
        )


def start_state(setup: Setup, seed: int) -> RobotState:
    """Robot placed with its sensor midpoint on the start of the path.

    ``initial_offset`` moves the robot to the left of the line (metres);
    seeded perturbations come from the ``init`` substream.
    """
    x0, y0, h0 = setup.track.start_pose()
    offset, dh = setup.initial_offset, setup.initial_heading
    if setup.initial_offset_sigma > 0 or setup.initial_heading_sigma > 0:
        init = NormalStream(seed, "init")
        offset += setup.initial_offset_sigma * init.standard_normal()
        dh += setup.initial_heading_sigma * init.standard_normal()
    f = setup.geometry.sensor_forward_offset
    mx, my = x0 - offset * math.sin(h0), y0 + offset * math.cos(h0)
    h = h0 + dh
    return RobotState(mx - f * math.cos(h), my - f * math.sin(h), h, 0.0, 0.0, setup.geometry)


class Simulation:
    """Stateful scenario stepped one control tick at a time."""

    def __init__(self, setup: Setup, seed: int, state: Optional[RobotState] = None):
        self.setup = setup
        self.seed = seed
        self.state = state if state is not None else start_state(setup, seed)
        self.k = 0
        self.pid = PidState(v_base=setup.v_base)
        self.sup = SupervisorState()
        self.debounce = DebounceState()
        self.events: list[Event] = []
        self.status = "ok"
        self._noise_l = NormalStream(seed, "ir_left")
        self._noise_r = NormalStream(seed, "ir_right")
        self._noise_us = NormalStream(seed, "us")
        self._win_l: Optional[list] = None
        self._win_r: Optional[list] = None
        self.frame_distance: Optional[float] = None

    @property
    def t(self) -> float:
        return self.k * self.setup.period

    def step(self) -> Optional[TickLog]:
        """Run one control tick; returns ``None`` (and sets status) when off track."""
        su = self.setup
        track = su.track
        st = self.state
        t = self.k * su.period
        c, s = math.cos(st.heading), math.sin(st.heading)
        g = su.geometry
        mx = st.x + g.sensor_forward_offset * c
        my = st.y + g.sensor_forward_offset * s

        half = g.ir_left_side * g.sensor_lateral_spacing / 2
        dist, qx, qy, refl_l, refl_r = track.probe(mx, my, -half * s, half * c)
        if dist > OFF_TRACK_LIMIT:
            self.status = "off-track"
            return None
        lat = 100.0 * dist if c * (qy - my) - s * (qx - mx) >= 0 else -100.0 * dist

        ir = su.ir
        if su.median_mode == "burst":
            nl, nr = self._noise_l, self._noise_r
            wl = read_ir_burst(ir, refl_l, nl)
            wr = read_ir_burst(ir, refl_r, nr)
            raw_l, raw_r = wl[4], wr[4]
        else:
            raw_l = read_ir(ir, refl_l, self._noise_l)
            raw_r = read_ir(ir, refl_r, self._noise_r)
            if self._win_l is None:
                self._win_l = [raw_l] * 5
                self._win_r = [raw_r] * 5
            wl, wr = self._win_l, self._win_r
            wl.pop(0)
            wl.append(raw_l)
            wr.pop(0)
            wr.append(raw_r)
        filt_l = sorted(wl)[2]
        filt_r = sorted(wr)[2]
        bit_l = 1 if filt_l > su.threshold_left else 0
        bit_r = 1 if filt_r > su.threshold_right else 0

        distance = (measure_distance(su.us, track, st, t, self._noise_us)
                    if track.obstacles else None)
        self.debounce, confirmed = debounce_update(self.debounce, distance)
        self.frame_distance = distance

        out = None
        if not su.fsm_enabled:
            out = self._control(bit_l, bit_r)
            cmd = out.command
        else:
            prev = self.sup.mode
            lost = False
            if prev in _PID_MODES:
                out = self._control(bit_l, bit_r)
                lost = out.lost
            self.sup, directive = fsm_step(
                self.sup, FsmInputs(confirmed, distance, bool(bit_l or bit_r), lost),
                su.period, su.fsm)
            if self.sup.trigger:
                self.events.append(Event(t, prev.value, self.sup.mode.value, self.sup.trigger))
            if directive.command is None:
                if out is None:
                    self.pid = PidState(v_base=su.v_base)
                    out = self._control(bit_l, bit_r)
                cmd = out.command
            else:
                cmd = directive.command

        if out is not None:
            self.pid = out.state
            error, u = out.error, out.u
        else:
            error, u = 0.0, 0.0

        log = TickLog(t, st.x, st.y, st.heading, lat, raw_l, raw_r, filt_l, filt_r, bit_l,
                      bit_r, distance, self.sup.mode.value, cmd.pwm_left, cmd.pwm_right,
                      error, self.pid.integral, u)
        targets = wheel_targets(cmd.pwm_left, cmd.pwm_right, su.plant,
                                cmd.reverse_left, cmd.reverse_right)
        self.state = advance(st, targets, su.period, su.substep, su.plant)
        self.k += 1
        return log

    def _control(self, bit_l: int, bit_r: int):
        if self.setup.controller == "pid":
            return pid_tick(bit_l, bit_r, self.pid, self.setup.gains)
        return onoff_tick(bit_l, bit_r, self.pid, self.setup.v_turn)


@dataclass
class ScenarioResult:
    ticks: list
    events: list
    status: str
    seed: int
    end_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = TICK_FIELDS.index(name)
        return [row[i] for row in self.ticks]


def run_scenario(setup: Setup, duration: float, seed: int, *,
                 state: Optional[RobotState] = None,
                 stop_when: Optional[Callable[[Simulation, TickLog], bool]] = None,
                 keep_ticks: bool = True,
                 on_tick: Optional[Callable[[TickLog], None]] = None) -> ScenarioResult:
    """Run ``duration`` seconds (``round(duration / period)`` ticks).

    ``stop_when`` ends the run early after the tick it returns true for;
    leaving the 1 m corridor around the path ends it with status ``off-track``.
    """
    if not duration > 0:
        raise ValueError("duration must be > 0")
    sim = Simulation(setup, seed, state)
    n = int(round(duration / setup.period))
    ticks = []
    for _ in range(n):
        row = sim.step()
        if row is None:
            break
        if keep_ticks:
            ticks.append(row)
        if on_tick is not None:
            on_tick(row)
        if stop_when is not None and stop_when(sim, row):
            break
    return ScenarioResult(ticks, sim.events, sim.status, seed, sim.t)


def rmse(ticks: Sequence[TickLog], window: Optional[tuple] = None) -> float:
    """Root-mean-square lateral error (cm) over ``window = (t0, t1)``, inclusive."""
    vals = [row.lateral_error for row in ticks
            if window is None or window[0] <= row.t <= window[1]]
    if not vals:
        raise ValueError("no ticks inside the window")
    return math.sqrt(math.fsum(v * v for v in vals) / len(vals))


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def format_row(row: Iterable) -> list:
    return [_fmt(v) for v in row]


def write_ticks_csv(ticks: Iterable[TickLog], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TICK_FIELDS)
    for row in ticks:
        w.writerow(format_row(row))


def ticks_csv_text(ticks: Iterable[TickLog]) -> str:
    buf = io.StringIO()
    write_ticks_csv(ticks, buf)
    return buf.getvalue()


def write_events_csv(events: Iterable[Event], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("t", "from", "to", "trigger"))
    for e in events:
        w.writerow((_fmt(e.t), e.from_mode, e.to_mode, e.trigger))
