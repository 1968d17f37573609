"""Oscillation classification, ultimate-gain search and the ZN table."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lfl.tuning import (ClosedLoopRun, NoOscillation, ReferencePlant, TuningError,
                        classify_oscillation, find_critical_gain, zn_gains)

DT = 0.05
T = np.arange(0, 20, DT)


def test_sinusoid_is_sustained():
    osc = classify_oscillation(np.sin(2 * np.pi * T / 0.4 + 0.3))
    assert osc.classification == "sustained"
    assert osc.period == pytest.approx(0.40, rel=0.02)


def test_decaying_sinusoid():
    osc = classify_oscillation(np.exp(-T) * np.sin(2 * np.pi * T / 0.4 + 0.3))
    assert osc.classification == "decaying"


def test_growing_sinusoid():
    osc = classify_oscillation(np.exp(0.2 * T) * np.sin(2 * np.pi * T / 3.0))
    assert osc.classification == "growing"


def test_constant_trace_has_no_oscillation():
    with pytest.raises(NoOscillation):
        classify_oscillation(np.zeros_like(T))


def test_short_trace_rejected():
    with pytest.raises(ValueError, match="too short"):
        classify_oscillation(np.sin(np.arange(0, 5, DT)))


@pytest.mark.parametrize("ku, tu, expected", [
    (8.5, 0.4, (5.1, 25.5, 0.255)),
    (1, 1, (0.6, 1.2, 0.075)),
    (10, 0.5, (6.0, 24.0, 0.375)),
])
def test_zn_table(ku, tu, expected):
    g = zn_gains(ku, tu)
    assert (g.kp, g.ki, g.kd) == expected


def test_zn_rejects_nonpositive_period():
    with pytest.raises(ValueError):
        zn_gains(1.0, 0.0)


@given(st.floats(0.1, 50), st.floats(0.05, 10), st.floats(0.1, 10))
def test_zn_linear_in_ku(ku, tu, c):
    a, b = zn_gains(ku, tu), zn_gains(c * ku, tu)
    for x, y in ((a.kp, b.kp), (a.ki, b.ki), (a.kd, b.kd)):
        assert y == pytest.approx(c * x, rel=1e-12)


def test_reference_plant_oracle():
    plant = ReferencePlant()
    rep = find_critical_gain(plant, (1.0, 20.0), 0.05)
    assert abs(rep.ku - 6.0) / 6.0 < 0.05
    assert abs(rep.tu - 2 * math.pi / math.sqrt(2)) / (2 * math.pi / math.sqrt(2)) < 0.05
    assert rep.iterations <= math.ceil(math.log2((20.0 - 1.0) / 0.05))


def test_search_is_deterministic():
    plant = ReferencePlant()
    a = find_critical_gain(plant, (1.0, 20.0), 0.5)
    b = find_critical_gain(plant, (1.0, 20.0), 0.5)
    assert (a.ku, a.tu, a.history) == (b.ku, b.tu, b.history)


def test_range_without_critical_gain_fails():
    with pytest.raises(TuningError) as exc:
        find_critical_gain(ReferencePlant(), (1.0, 4.0), 0.05)
    assert exc.value.traces


def test_synthetic_loop_bisection():
    """A loop whose cycle ratio is kp/7 has its critical gain at 7."""

    def loop(kp):
        r = kp / 7.0
        k = np.arange(400)
        trace = r ** (k * DT / 2.0) * np.sin(2 * np.pi * k * DT / 2.0 + 0.1)
        return ClosedLoopRun(list(trace), DT)

    rep = find_critical_gain(loop, (1.0, 20.0), 0.01)
    assert rep.ku == pytest.approx(7.0, abs=0.01)
    assert rep.tu == pytest.approx(2.0, rel=0.02)
