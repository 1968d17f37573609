"""Virtual TCRT5000 reflectance sensors and HC-SR04 ranger.

Covers the perception chain: ADC quantisation and noise, the 5-sample median
filter, two-surface threshold calibration, binarisation, consistency check,
temperature-compensated echo ranging and the three-sample obstacle debounce.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .track import Track, raycast_obstacle

ADC_MAX = 1023
MIN_CALIBRATION_SAMPLES = 50
CONSISTENCY_LIMIT = 8.0
DEBOUNCE_DISTANCE = 0.20
DEBOUNCE_REQUIRED = 3


class CalibrationError(ValueError):
    pass


def round_half_away(x: float) -> int:
    """Nearest integer, ties away from zero."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


@dataclass(frozen=True)
class IrSensorModel:
    gain: float = 900.0
    noise_sigma: float = 6.0
    invert: bool = True

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def read_ir(model: IrSensorModel, reflectance: float, rng) -> int:
    """One 10-bit ADC sample for a surface of the given reflectance.

    ``rng`` needs a ``standard_normal()`` method; it is not touched when the
    model is noiseless.
    """
    if not 0.0 <= reflectance <= 1.0:
        raise ValueError(f"reflectance must be in [0, 1], got {reflectance}")
    level = model.gain * ((1.0 - reflectance) if model.invert else reflectance)
    if model.noise_sigma > 0:
        level += model.noise_sigma * rng.standard_normal()
    counts = round_half_away(level)
    return 0 if counts < 0 else (ADC_MAX if counts > ADC_MAX else counts)


def read_ir_burst(model: IrSensorModel, reflectance: float, rng, n: int = 5) -> list:
    """``n`` back-to-back conversions; identical to ``n`` calls of :func:`read_ir`."""
    if not 0.0 <= reflectance <= 1.0:
        raise ValueError(f"reflectance must be in [0, 1], got {reflectance}")
    level = model.gain * ((1.0 - reflectance) if model.invert else reflectance)
    if model.noise_sigma > 0:
        sigma = model.noise_sigma
        levels = [level + sigma * z for z in rng.take(n)]
    else:
        levels = [level] * n
    out = []
    for x in levels:
        c = int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))
        out.append(0 if c < 0 else (ADC_MAX if c > ADC_MAX else c))
    return out


def median5(window: Sequence[int]) -> int:
    if len(window) != 5:
        raise ValueError(f"median window needs 5 samples, got {len(window)}")
    return sorted(window)[2]


class CalibrationRecord(NamedTuple):
    v_white_mean: float
    v_black_mean: float
    v_threshold: int
    sample_std: float
    sample_count: int


def calibrate_threshold(white_samples: Sequence[int],
                        black_samples: Sequence[int]) -> CalibrationRecord:
    """Midpoint threshold between white and black surface means."""
    n = min(len(white_samples), len(black_samples))
    if n < MIN_CALIBRATION_SAMPLES:
        raise CalibrationError(
            f"need at least {MIN_CALIBRATION_SAMPLES} samples per surface, got {n}")
    mw = statistics.fmean(white_samples)
    mb = statistics.fmean(black_samples)
    if mb <= mw:
        raise CalibrationError(
            f"surfaces indistinguishable: black mean {mb:.1f} <= white mean {mw:.1f}")
    ss = (statistics.variance(white_samples) * (len(white_samples) - 1)
          + statistics.variance(black_samples) * (len(black_samples) - 1))
    pooled = math.sqrt(ss / (len(white_samples) + len(black_samples) - 2))
    threshold = round_half_away((mw + mb) / 2)
    if not mw < threshold < mb:
        raise CalibrationError("surfaces indistinguishable: no integer threshold between means")
    return CalibrationRecord(mw, mb, threshold, pooled,
                             min(len(white_samples), len(black_samples)))


def binarize(counts: int, record) -> int:
    """1 for black (strictly above threshold), else 0.

    ``record`` may be a :class:`CalibrationRecord` or a bare threshold.
    """
    th = record.v_threshold if isinstance(record, CalibrationRecord) else record
    return 1 if counts > th else 0


class ConsistencyResult(NamedTuple):
    passed: bool
    std: float


def verify_consistency(samples: Sequence[int]) -> ConsistencyResult:
    """Pass when the sample standard deviation is below 8 LSB."""
    if len(samples) < MIN_CALIBRATION_SAMPLES:
        raise CalibrationError(
            f"need at least {MIN_CALIBRATION_SAMPLES} samples, got {len(samples)}")
    std = statistics.stdev(samples)
    return ConsistencyResult(std < CONSISTENCY_LIMIT, std)


# --- ultrasonic -------------------------------------------------------------

@dataclass(frozen=True)
class UltrasonicModel:
    max_range: float = 4.0
    min_range: float = 0.02
    temperature: float = 25.0
    timing_jitter_sigma: float = 50e-6
    sample_rate: float = 20.0


def speed_of_sound(temperature: float) -> float:
    """Speed of sound in air (m/s) at ``temperature`` degrees Celsius."""
    if not -40.0 <= temperature <= 60.0:
        raise ValueError(f"temperature must be in [-40, 60] C, got {temperature}")
    return 331.3 * math.sqrt(1.0 + temperature / 273.15)


def echo_to_distance(round_trip: float, temperature: float,
                     model: UltrasonicModel = UltrasonicModel()) -> Optional[float]:
    """Range for an echo round-trip time; ``None`` outside the sensor envelope."""
    if round_trip < 0:
        raise ValueError("round_trip must be >= 0")
    d = speed_of_sound(temperature) * round_trip / 2.0
    if d < model.min_range or d > model.max_range:
        return None
    return d


def measure_distance(model: UltrasonicModel, track: Track, pose, t: float,
                     rng) -> Optional[float]:
    """Ray-cast the world, synthesise a jittered echo and convert it back to range."""
    hit = raycast_obstacle(track, pose, model.max_range, t)
    if hit is None:
        return None
    v = speed_of_sound(model.temperature)
    round_trip = 2.0 * hit / v
    if model.timing_jitter_sigma > 0:
        round_trip += model.timing_jitter_sigma * rng.standard_normal()
        if round_trip < 0:
            return None
    return echo_to_distance(round_trip, model.temperature, model)


class DebounceState(NamedTuple):
    consecutive_below: int = 0
    threshold_distance: float = DEBOUNCE_DISTANCE
    required: int = DEBOUNCE_REQUIRED


def debounce_update(state: DebounceState,
                    distance: Optional[float]) -> tuple[DebounceState, bool]:
    if distance is not None and distance < state.threshold_distance:
        n = min(state.consecutive_below + 1, state.required)
    else:
        n = 0
    return state._replace(consecutive_below=n), n >= state.required


class SensorFrame(NamedTuple):
    """One control tick of perception."""

    raw_left: int
    raw_right: int
    filt_left: int
    filt_right: int
    bit_left: int
    bit_right: int
    distance: Optional[float] = None
    debounce_count: int = 0
    debounce_confirmed: bool = False

    @property
    def line_seen(self) -> bool:
        return bool(self.bit_left or self.bit_right)
