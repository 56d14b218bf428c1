"""Dosing rule arithmetic, safety clamps, and tick-level behavior."""

import random
from datetime import datetime, timedelta, timezone

import pytest

from aidloop.controller import ControllerState, closed_loop_tick, commanded_rate_for
from aidloop.core import (
    MODE_NORMAL,
    MODE_SHUTOFF,
    GlucoseReading,
    InsulinDelivery,
    SettingsError,
    TherapeuticSettings,
)
from aidloop.insulin import ActivationCurve

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)
CURVE = ActivationCurve()


def make_settings(**overrides):
    base = dict(baseline_basal_rate=1.0, insulin_sensitivity=42.0)
    base.update(overrides)
    return TherapeuticSettings(**base)


def random_settings(rng):
    # baselines live on the pump's 0.05 U/hr grid; off-grid rates are not
    # programmable on real hardware
    return TherapeuticSettings(
        baseline_basal_rate=round(rng.randint(1, 80) * 0.05, 6),
        insulin_sensitivity=rng.uniform(10.0, 120.0),
        target_glucose=rng.uniform(80.0, 120.0),
        shutoff_threshold=rng.uniform(70.0, 90.0),
        max_basal_multiplier=rng.choice([3.0, 4.0, 5.0]),
        temp_duration=rng.choice([15.0, 30.0, 60.0]),
        proportional_gain=rng.uniform(0.05, 1.0),
    )


class TestDosingRule:
    def test_at_target_with_no_iob_commands_baseline(self):
        rate, mode = commanded_rate_for(90.0, 0.0, make_settings())
        assert rate == 1.0 and mode == MODE_NORMAL

    def test_below_shutoff_commands_zero(self):
        rate, mode = commanded_rate_for(75.0, 0.0, make_settings())
        assert rate == 0.0 and mode == MODE_SHUTOFF

    def test_one_unit_correction_doubles_the_rate(self):
        # (132-90)/42 = 1 U correction; Kp 0.5 over a 30-min window adds 1 U/hr
        rate, mode = commanded_rate_for(132.0, 0.0, make_settings())
        assert rate == pytest.approx(2.0)
        assert mode == MODE_NORMAL

    def test_large_error_clamps_to_four_times_baseline(self):
        # raw would be 1 + 5*0.5*2 = 6 U/hr
        rate, _ = commanded_rate_for(300.0, 0.0, make_settings())
        assert rate == pytest.approx(4.0)

    def test_surplus_iob_floors_at_zero(self):
        rate, mode = commanded_rate_for(90.0, 5.0, make_settings())
        assert rate == 0.0 and mode == MODE_NORMAL

    def test_negative_iob_raises_the_rate(self):
        with_deficit, _ = commanded_rate_for(100.0, -1.0, make_settings())
        without, _ = commanded_rate_for(100.0, 0.0, make_settings())
        assert with_deficit > without

    def test_boundary_glucose_is_not_shutoff(self):
        _, mode = commanded_rate_for(80.0, 0.0, make_settings())
        assert mode == MODE_NORMAL

    def test_rate_is_quantized(self):
        rate, _ = commanded_rate_for(100.0, 0.0, make_settings())
        assert rate == pytest.approx(round(round(rate / 0.05) * 0.05, 6))


class TestSafetyProperties:
    def test_random_cases_stay_in_bounds_and_monotone(self):
        rng = random.Random(2024)
        for _ in range(2000):
            s = random_settings(rng)
            glucose = rng.uniform(40.0, 400.0)
            iob = rng.uniform(-5.0, 5.0)
            rate, mode = commanded_rate_for(glucose, iob, s)
            assert 0.0 <= rate <= s.max_basal_rate + 1e-9
            if glucose < s.shutoff_threshold:
                assert rate == 0.0 and mode == MODE_SHUTOFF
            higher_g, _ = commanded_rate_for(min(glucose + 25.0, 400.0), iob, s)
            assert higher_g >= rate - 1e-12
            more_iob, _ = commanded_rate_for(glucose, iob + 1.0, s)
            if glucose >= s.shutoff_threshold:
                assert more_iob <= rate + 1e-12


class TestClosedLoopTick:
    def reading(self, value, minutes=0):
        return GlucoseReading(at=T0 + timedelta(minutes=minutes), value=value)

    def test_decision_snapshot_and_state(self):
        state, decision = closed_loop_tick(
            ControllerState(), self.reading(132.0), [], make_settings(), CURVE
        )
        assert decision.commanded_rate == pytest.approx(2.0)
        assert decision.net_iob == 0.0
        assert decision.correction_units == pytest.approx(1.0)
        assert state.mode == MODE_NORMAL
        assert state.last_decision is decision

    def test_stale_reading_returns_no_decision(self):
        state, first = closed_loop_tick(
            ControllerState(), self.reading(100.0, minutes=5), [], make_settings(), CURVE
        )
        state2, second = closed_loop_tick(state, self.reading(110.0, minutes=5), [], make_settings(), CURVE)
        assert second is None and state2 is state
        state3, third = closed_loop_tick(state, self.reading(110.0, minutes=0), [], make_settings(), CURVE)
        assert third is None and state3 is state

    def test_invalid_settings_refused(self):
        with pytest.raises(SettingsError):
            closed_loop_tick(
                ControllerState(),
                self.reading(100.0),
                [],
                make_settings(proportional_gain=2.0),
                CURVE,
            )

    def test_shutoff_then_hysteresis_free_resume(self):
        state, low = closed_loop_tick(ControllerState(), self.reading(75.0), [], make_settings(), CURVE)
        assert low.mode == MODE_SHUTOFF and low.commanded_rate == 0.0
        state, resumed = closed_loop_tick(
            state, self.reading(80.0, minutes=5), [], make_settings(), CURVE
        )
        assert resumed.mode == MODE_NORMAL

    def test_resume_correction_comes_from_net_iob_alone(self):
        # Same reading, one history with a 30-min suspension: the suspension
        # run must command more insulin, with no controller state involved.
        suspended = [InsulinDelivery.basal_segment(T0, rate=0.0, duration=30.0)]
        fresh_state = ControllerState()
        _, with_suspension = closed_loop_tick(
            fresh_state, self.reading(85.0, minutes=30), suspended, make_settings(), CURVE
        )
        _, without = closed_loop_tick(
            fresh_state, self.reading(85.0, minutes=30), [], make_settings(), CURVE
        )
        assert with_suspension.net_iob < 0.0
        assert with_suspension.correction_units > without.correction_units
        assert with_suspension.commanded_rate >= without.commanded_rate

    def test_determinism_bit_for_bit(self):
        history = [InsulinDelivery.basal_segment(T0, rate=2.0, duration=25.0)]
        results = {
            closed_loop_tick(
                ControllerState(), self.reading(137.5, minutes=40), history, make_settings(), CURVE
            )[1]
            for _ in range(5)
        }
        assert len(results) == 1
