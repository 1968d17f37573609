"""IR front end, calibration, ultrasonic ranging and debounce."""

import math
import statistics

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lfl.plant import Geometry, RobotState
from lfl.rng import NormalStream, derive_seed, substream
from lfl.sensors import (CalibrationError, CalibrationRecord, DebounceState, IrSensorModel,
                         UltrasonicModel, binarize, calibrate_threshold, debounce_update,
                         echo_to_distance, measure_distance, median5, read_ir, read_ir_burst,
                         round_half_away, speed_of_sound, verify_consistency)
from lfl.track import Obstacle, parse_track

NOISELESS = IrSensorModel(noise_sigma=0.0)


def test_round_half_away():
    assert [round_half_away(x) for x in (0.5, 1.5, 2.5, -0.5, -1.5, 2.49)] == [1, 2, 3, -1, -2, 2]


# --- IR reads ----------------------------------------------------------------

def test_white_mirror_reads_zero():
    assert read_ir(NOISELESS, 1.0, None) == 0


def test_black_reads_gain():
    assert read_ir(NOISELESS, 0.0, None) == 900


def test_line_mean_matches_expectation():
    model = IrSensorModel(gain=900.0, noise_sigma=6.0)
    rng = NormalStream(7, "mc")
    draws = [read_ir(model, 0.08, rng) for _ in range(10_000)]
    assert abs(statistics.fmean(draws) - 900 * 0.92) <= 0.2


def test_reads_clip_to_adc_range():
    hot = IrSensorModel(gain=2000.0, noise_sigma=0.0)
    assert read_ir(hot, 0.0, None) == 1023


def test_reflectance_domain():
    with pytest.raises(ValueError):
        read_ir(NOISELESS, 1.5, None)


def test_burst_matches_single_reads():
    model = IrSensorModel()
    a, b = NormalStream(3, "x"), NormalStream(3, "x")
    burst = [v for _ in range(40) for v in read_ir_burst(model, 0.3, a)]
    single = [read_ir(model, 0.3, b) for _ in range(200)]
    assert burst == single


def test_streams_are_reproducible_and_distinct():
    assert derive_seed(1, "ir_left") == derive_seed(1, "ir_left")
    assert derive_seed(1, "ir_left") != derive_seed(1, "ir_right")
    a = substream(5, "us").standard_normal(4)
    b = substream(5, "us").standard_normal(4)
    assert np.array_equal(a, b)


# --- median ----------------------------------------------------------------

@pytest.mark.parametrize("window, expected", [
    ([500, 500, 500, 500, 500], 500),
    ([100, 900, 500, 900, 100], 500),
    ([500, 500, 1023, 500, 500], 500),
])
def test_median5_examples(window, expected):
    assert median5(window) == expected


def test_median5_needs_five():
    with pytest.raises(ValueError):
        median5([1, 2, 3])


@given(st.lists(st.integers(0, 1023), min_size=5, max_size=5), st.randoms())
def test_median5_member_and_permutation_invariant(window, rnd):
    m = median5(window)
    assert m in window
    shuffled = list(window)
    rnd.shuffle(shuffled)
    assert median5(shuffled) == m


# --- calibration --------------------------------------------------------------

def test_threshold_is_midpoint():
    rec = calibrate_threshold([200] * 50, [800] * 50)
    assert rec.v_threshold == 500
    assert rec.v_white_mean == 200 and rec.v_black_mean == 800
    assert rec.sample_std == 0.0 and rec.sample_count == 50


def test_indistinguishable_surfaces():
    with pytest.raises(CalibrationError, match="indistinguishable"):
        calibrate_threshold([300] * 50, [300] * 50)


def test_too_few_samples():
    with pytest.raises(CalibrationError):
        calibrate_threshold([200] * 49, [800] * 49)


def test_monte_carlo_threshold():
    rng = np.random.default_rng(11)
    white = np.rint(rng.normal(180, 5, 50)).astype(int).tolist()
    black = np.rint(rng.normal(820, 5, 50)).astype(int).tolist()
    assert 495 <= calibrate_threshold(white, black).v_threshold <= 505


def test_binarize_is_strict():
    assert binarize(501, 500) == 1
    assert binarize(500, 500) == 0
    assert binarize(0, 500) == 0
    rec = CalibrationRecord(200.0, 800.0, 500, 0.0, 50)
    assert binarize(501, rec) == 1


@given(st.integers(0, 1023), st.integers(0, 1023), st.integers(1, 1022))
def test_binarize_monotone(a, b, th):
    lo, hi = sorted((a, b))
    assert binarize(lo, th) <= binarize(hi, th)


def test_consistency_identical_samples():
    res = verify_consistency([512] * 50)
    assert res.passed and res.std == 0.0


def test_consistency_two_point_fails():
    samples = [490, 510] * 25
    res = verify_consistency(samples)
    # sample std of +-10 with n - 1 = 49: 10 * sqrt(50 / 49)
    assert res.std == pytest.approx(10 * math.sqrt(50 / 49), abs=1e-9)
    assert round(res.std, 1) == 10.1
    assert not res.passed


def test_consistency_nominal_noise_passes():
    model = IrSensorModel(noise_sigma=6.0)
    rng = NormalStream(42, "still")
    res = verify_consistency([read_ir(model, 0.5, rng) for _ in range(50)])
    assert res.passed and 4.5 <= res.std <= 7.5


def test_consistency_doubled_noise_fails():
    model = IrSensorModel(noise_sigma=12.0)
    rng = NormalStream(42, "still")
    assert not verify_consistency([read_ir(model, 0.5, rng) for _ in range(500)]).passed


# --- ultrasonic ---------------------------------------------------------------

def test_speed_of_sound():
    assert speed_of_sound(0.0) == 331.3
    assert speed_of_sound(25.0) == pytest.approx(331.3 * math.sqrt(1 + 25 / 273.15))
    assert speed_of_sound(25.0) == pytest.approx(346.2, abs=0.1)
    with pytest.raises(ValueError):
        speed_of_sound(-273.15)


@given(st.floats(-40, 59.9))
def test_speed_of_sound_increasing(t):
    assert speed_of_sound(t + 0.1) > speed_of_sound(t)


def test_echo_examples():
    assert echo_to_distance(0.0, 25.0) is None
    assert echo_to_distance(1.156e-3, 25.0) == pytest.approx(0.200, abs=5e-4)
    far = speed_of_sound(25.0) * 30e-3 / 2
    assert far == pytest.approx(5.19, abs=0.01)
    assert echo_to_distance(30e-3, 25.0) is None


def _pose_facing(ux):
    g = Geometry()
    return RobotState(ux - g.ultrasonic_forward_offset, 0.0, 0.0, geometry=g)


def test_noiseless_range():
    track = parse_track("straight 0 0 5 0\n").with_obstacles([Obstacle((1.25, 0.0), 0.05)])
    model = UltrasonicModel(timing_jitter_sigma=0.0)
    d = measure_distance(model, track, _pose_facing(1.0), 0.0, None)
    assert d == pytest.approx(0.200, abs=1e-12)


def test_no_obstacle_no_range():
    track = parse_track("straight 0 0 5 0\n")
    assert measure_distance(UltrasonicModel(), track, _pose_facing(1.0), 0.0, None) is None


def test_jitter_propagates_to_range_spread():
    track = parse_track("straight 0 0 5 0\n").with_obstacles([Obstacle((1.35, 0.0), 0.05)])
    model = UltrasonicModel(timing_jitter_sigma=50e-6)
    rng = NormalStream(99, "us")
    pose = _pose_facing(1.0)
    ds = [measure_distance(model, track, pose, 0.0, rng) for _ in range(10_000)]
    expected = speed_of_sound(25.0) * 50e-6 / 2
    assert expected == pytest.approx(8.66e-3, abs=1e-5)
    assert statistics.stdev(ds) == pytest.approx(expected, rel=0.05)
    assert statistics.fmean(ds) == pytest.approx(0.30, abs=5e-4)


# --- debounce -----------------------------------------------------------------

def _run(distances):
    s = DebounceState()
    out = []
    for d in distances:
        s, ok = debounce_update(s, d)
        out.append(ok)
    return out


def test_three_below_confirms():
    assert _run([0.15, 0.15, 0.15]) == [False, False, True]


def test_reset_on_far_sample():
    assert _run([0.15, 0.25, 0.15, 0.15, 0.15]) == [False, False, False, False, True]


def test_far_or_missing_never_confirms():
    assert not any(_run([0.20, 0.25, None, 3.0, 0.20]))


@given(st.lists(st.one_of(st.none(), st.floats(0.0, 0.4)), max_size=60))
def test_confirmation_implies_last_three_below(ds):
    flags = _run(ds)
    for i, ok in enumerate(flags):
        recent = ds[max(0, i - 2):i + 1]
        below = len(recent) == 3 and all(d is not None and d < 0.20 for d in recent)
        assert ok == below
