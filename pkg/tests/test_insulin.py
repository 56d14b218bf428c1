"""Activation curve and net-IOB checks against numerical oracles.

The quadrature oracle (trapezoid over the activity density) and the
micro-dose brute force below are written independently of the closed
forms they check and were used to freeze the expected values.
"""

from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from aidloop.core import InsulinDelivery
from aidloop.insulin import ActivationCurve, activity_density, iob_fraction, net_iob

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)
CURVE = ActivationCurve()  # peak 65, duration 360


def trapezoid(f, a, b, step):
    n = int(round((b - a) / step))
    total = 0.5 * (f(a) + f(b))
    for i in range(1, n):
        total += f(a + i * step)
    return total * step


# frozen from the 0.1-minute trapezoid oracle over activity_density:
# 1 - integral(0..65) with tp=65, td=360
IOB_AT_PEAK_QUADRATURE = 0.706496808542427


class TestActivationCurve:
    def test_peak_must_be_before_half_duration(self):
        with pytest.raises(ValueError):
            ActivationCurve(peak_minutes=180.0, duration_minutes=360.0)
        with pytest.raises(ValueError):
            ActivationCurve(peak_minutes=0.0, duration_minutes=360.0)
        ActivationCurve(peak_minutes=179.9, duration_minutes=360.0)


class TestIobFraction:
    def test_nothing_absorbed_at_zero(self):
        assert iob_fraction(CURVE, 0.0) == 1.0

    def test_fully_absorbed_at_duration(self):
        assert iob_fraction(CURVE, 360.0) == 0.0
        assert iob_fraction(CURVE, 720.0) == 0.0

    def test_peak_value_matches_quadrature_oracle(self):
        assert iob_fraction(CURVE, 65.0) == pytest.approx(IOB_AT_PEAK_QUADRATURE, abs=1e-6)

    def test_monotone_non_increasing_on_minute_grid(self):
        values = [iob_fraction(CURVE, float(m)) for m in range(0, 361)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_matches_cumulative_quadrature_everywhere(self):
        step = 0.1
        grid = [activity_density(CURVE, i * step) for i in range(3601)]
        cumulative = [0.0]
        for i in range(1, len(grid)):
            cumulative.append(cumulative[-1] + 0.5 * (grid[i - 1] + grid[i]) * step)
        for minute in range(0, 361):
            expected = 1.0 - cumulative[int(round(minute / step))]
            assert iob_fraction(CURVE, float(minute)) == pytest.approx(expected, abs=1e-6)

    @given(
        tp=st.floats(min_value=30.0, max_value=100.0),
        td=st.floats(min_value=210.0, max_value=480.0),
    )
    @hyp_settings(max_examples=50, deadline=None)
    def test_fraction_bounded_and_decreasing_for_any_curve(self, tp, td):
        curve = ActivationCurve(peak_minutes=tp, duration_minutes=td)
        prev = 1.0
        for m in range(0, int(td) + 2, 3):
            value = iob_fraction(curve, float(m))
            assert 0.0 <= value <= prev + 1e-12
            prev = value


class TestActivityDensity:
    def test_zero_outside_active_window(self):
        assert activity_density(CURVE, 0.0) == 0.0
        assert activity_density(CURVE, 360.0) == 0.0
        assert activity_density(CURVE, -5.0) == 0.0

    def test_argmax_on_grid_is_the_peak_time(self):
        step = 0.1
        best_t = max(range(1, 3600), key=lambda i: activity_density(CURVE, i * step)) * step
        assert abs(best_t - CURVE.peak_minutes) <= step

    def test_integrates_to_one(self):
        integral = trapezoid(lambda t: activity_density(CURVE, t), 0.0, 360.0, 0.1)
        assert integral == pytest.approx(1.0, abs=1e-6)

    def test_non_negative(self):
        assert all(activity_density(CURVE, m / 2) >= 0.0 for m in range(0, 722))


class TestNetIob:
    def test_empty_history_is_zero(self):
        assert net_iob([], 1.0, CURVE, T0) == 0.0

    def test_bolus_fully_absorbed_after_duration(self):
        history = [InsulinDelivery.bolus(T0, 1.0)]
        assert net_iob(history, 1.0, CURVE, T0 + timedelta(minutes=360)) == 0.0
        assert net_iob(history, 1.0, CURVE, T0 + timedelta(minutes=500)) == 0.0

    def test_fresh_bolus_counts_in_full(self):
        history = [InsulinDelivery.bolus(T0, 2.5)]
        assert net_iob(history, 1.0, CURVE, T0) == pytest.approx(2.5)

    def test_suspension_matches_micro_dose_oracle(self):
        # 30-minute suspension (rate 0 against baseline 1.0), queried at its end.
        history = [InsulinDelivery.basal_segment(T0, rate=0.0, duration=30.0)]
        queried = T0 + timedelta(minutes=30)
        # brute force: 30 one-minute micro-doses of -1/60 U at the minute starts
        expected = sum(
            (-1.0 / 60.0) * iob_fraction(CURVE, 30.0 - m) for m in range(30)
        )
        value = net_iob(history, 1.0, CURVE, queried)
        assert value == pytest.approx(expected, abs=1e-12)
        assert value == pytest.approx(-0.4836668588828767, abs=1e-9)  # frozen oracle output
        assert -0.5 < value < -0.45

    def test_baseline_only_history_is_exactly_zero(self):
        history = [
            InsulinDelivery.basal_segment(T0 + timedelta(minutes=5 * i), rate=1.0, duration=5.0)
            for i in range(24)
        ]
        assert net_iob(history, 1.0, CURVE, T0 + timedelta(minutes=120)) == 0.0

    def test_additive_over_history_split(self):
        h1 = [InsulinDelivery.bolus(T0 + timedelta(minutes=10), 1.2)]
        h2 = [
            InsulinDelivery.basal_segment(T0, rate=2.0, duration=45.0),
            InsulinDelivery.bolus(T0 + timedelta(minutes=70), 0.4),
        ]
        now = T0 + timedelta(minutes=90)
        combined = net_iob(h1 + h2, 1.0, CURVE, now)
        assert combined == pytest.approx(
            net_iob(h1, 1.0, CURVE, now) + net_iob(h2, 1.0, CURVE, now), abs=1e-12
        )

    def test_windup_free_resume_means_negative_iob_after_suspension(self):
        # The anti-windup behavior is pure accounting: after a suspension the
        # net IOB is strictly negative, nothing else carries state.
        history = [InsulinDelivery.basal_segment(T0, rate=0.0, duration=45.0)]
        value = net_iob(history, 1.0, CURVE, T0 + timedelta(minutes=45))
        assert value < 0.0

    def test_future_micro_doses_do_not_count(self):
        # a segment extending past `now` only counts its elapsed slices
        history = [InsulinDelivery.basal_segment(T0, rate=3.0, duration=60.0)]
        partial = net_iob(history, 1.0, CURVE, T0 + timedelta(minutes=10))
        expected = sum(
            (2.0 / 60.0) * iob_fraction(CURVE, 10.0 - m) for m in range(10 + 1)
        )
        assert partial == pytest.approx(expected, abs=1e-12)
