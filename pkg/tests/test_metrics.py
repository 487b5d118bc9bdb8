import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from scopectl.controllers import Reference
from scopectl.integrator import SimTrace
from scopectl.metrics import (
    DegenerateReferenceError, TransientMetrics, analyze, comparison_rows, fitness_integral,
    format_comparison, overshoot_pct, read_comparison_csv, read_metrics_csv, rise_time,
    settling_time, write_comparison_csv, write_metrics_csv,
)

T = np.arange(0, 10.0 + 1e-12, 1e-3)


def first_order(t, tau=1.0):
    return 1 - np.exp(-t / tau)


def critically_damped(t, w=5.0):
    return 1 - (1 + w * t) * np.exp(-w * t)


def underdamped(t, zeta=0.5, wn=4.0):
    wd = wn * math.sqrt(1 - zeta**2)
    phi = math.acos(zeta)
    return 1 - np.exp(-zeta * wn * t) / math.sqrt(1 - zeta**2) * np.sin(wd * t + phi)


def test_rise_instant():
    assert rise_time(np.ones(10), 1.0, np.arange(10.0)) == 0.0


def test_rise_never():
    assert rise_time(0.85 * first_order(T), 1.0, T) is None


def test_rise_first_order():
    assert rise_time(first_order(T), 1.0, T) == pytest.approx(math.log(9), abs=1e-3)


def test_settling_constant():
    assert settling_time(np.full(50, 2.0), 2.0, np.arange(50.0)) == 0.0


def test_settling_last_reentry():
    t = np.arange(10.0)
    s = np.array([0.0, 0.99, 1.0, 1.1, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    # inside at t=1, out again at t=3, back in from t=4
    st_ = settling_time(s, 1.0, t)
    assert 3.0 < st_ <= 4.0


def test_settling_never():
    assert settling_time(first_order(T[:1000]), 1.0, T[:1000]) is None


def test_settling_critically_damped():
    h = T[1] - T[0]
    analytic = brentq(lambda t: (1 + 5 * t) * math.exp(-5 * t) - 0.02, 0.1, 5.0)
    assert settling_time(critically_damped(T), 1.0, T) == pytest.approx(analytic, abs=h)


def test_overshoot_cases():
    assert overshoot_pct(first_order(T), 1.0) == 0.0
    s = np.concatenate([np.linspace(0, 1.017, 50), np.full(20, 1.0)])
    assert overshoot_pct(s, 1.0) == pytest.approx(1.7, abs=1e-9)
    expected = 100 * math.exp(-0.5 * math.pi / math.sqrt(1 - 0.25))
    assert overshoot_pct(underdamped(T), 1.0) == pytest.approx(expected, abs=0.1)
    assert expected == pytest.approx(16.3, abs=0.05)


def test_negative_step_mirrored():
    s = -underdamped(T)
    assert overshoot_pct(s, -1.0) == pytest.approx(overshoot_pct(-s, 1.0))
    assert rise_time(s, -1.0, T) == pytest.approx(rise_time(-s, 1.0, T))
    assert settling_time(s, -1.0, T) == pytest.approx(settling_time(-s, 1.0, T))


@pytest.mark.parametrize("fn", [rise_time, settling_time])
def test_zero_step_is_degenerate(fn):
    with pytest.raises(DegenerateReferenceError):
        fn(np.zeros(5), 0.0, np.arange(5.0))
    with pytest.raises(DegenerateReferenceError):
        overshoot_pct(np.zeros(5), 0.0)


@given(st.floats(-100, 100))
def test_time_shift_invariance(shift):
    s = underdamped(T[:4000])
    t = T[:4000]
    assert rise_time(s, 1.0, t + shift) == pytest.approx(rise_time(s, 1.0, t), abs=1e-9)
    assert settling_time(s, 1.0, t + shift) == pytest.approx(settling_time(s, 1.0, t), abs=1e-9)


@given(st.floats(0.25, 4.0))
def test_time_dilation_scaling(k):
    # x(t / k) sampled on t * k is the same samples on a stretched axis
    s = critically_damped(T)
    assert rise_time(s, 1.0, T * k) == pytest.approx(k * rise_time(s, 1.0, T), rel=1e-9)
    assert settling_time(s, 1.0, T * k) == pytest.approx(k * settling_time(s, 1.0, T), rel=1e-9)


@given(st.floats(1e-3, 1e3))
def test_overshoot_scale_invariance(c):
    s = underdamped(T)
    assert overshoot_pct(c * s, c) == pytest.approx(overshoot_pct(s, 1.0), rel=1e-9)


def test_fitness_constant_error():
    h = 1e-3
    n = 1000
    e = np.tile([1.0, 0.0], (n + 1, 1))
    assert fitness_integral(e, np.zeros_like(e), h) == pytest.approx(0.01, abs=1e-12)
    assert fitness_integral(np.zeros_like(e), np.zeros_like(e), h) == 0.0


def _pinned_trace(n=100, h=0.01, target=(0.5, 0.25)):
    times = np.arange(n) * h
    theta = np.tile(target, (n, 1))
    zeros = np.zeros((n, 2))
    return SimTrace(times, theta, zeros.copy(), zeros.copy(), zeros.copy())


def test_analyze_perfect_trace():
    m = analyze(_pinned_trace(), Reference((0.5, 0.25)))
    assert m == TransientMetrics((0.0, 0.0), (0.0, 0.0), (0.0, 0.0), 0.0)


def test_analyze_zero_target_is_absent():
    m = analyze(_pinned_trace(target=(0.0, 0.25)), Reference((0.0, 0.25)))
    assert m.rise_time[0] is None and m.overshoot_pct[0] is None
    assert m.rise_time[1] == 0.0


def test_metrics_csv_round_trip(tmp_path):
    m = TransientMetrics((0.2, None), (0.5, None), (0.0, 1.5), 0.0123)
    p = tmp_path / "m.csv"
    write_metrics_csv(m, p)
    assert read_metrics_csv(p) == m
    q = tmp_path / "m2.csv"
    write_metrics_csv(read_metrics_csv(p), q)
    assert p.read_bytes() == q.read_bytes()


def test_comparison_table(tmp_path):
    results = {
        "GA-FLC": TransientMetrics((0.2, 0.3), (0.33, 0.48), (0.0, 0.0), 0.1),
        "PD": None,
    }
    rows = comparison_rows(results)
    assert rows[0] == ["metric", "GA-FLC RA", "GA-FLC DEC", "PD RA", "PD DEC"]
    assert [r[0] for r in rows[1:]] == ["Rise Time", "Settling Time", "Overshoot"]
    assert rows[1][3:] == ["NA", "NA"]
    p = tmp_path / "c.csv"
    write_comparison_csv(results, p)
    back = read_comparison_csv(p)
    assert back["PD"] is None
    assert back["GA-FLC"].rise_time == (0.2, 0.3)
    text = format_comparison(results)
    assert "Rise Time" in text and "0.2000" in text
