from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epe.errors import DataError
from epe.timeseries import (
    AlignmentError, TimeSeries, Unit, UnitMismatchError, WeatherSeries, aggregate, align, contiguous_runs,
    fill_short_gaps, total, watts_to_mj,
)

T0 = datetime(2021, 1, 1)


def ts(vals, start=T0, step=3600.0, unit=Unit.W):
    return TimeSeries(start, step, np.asarray(vals, float), unit)


def test_values_are_read_only_and_nan_rejected():
    s = ts([1, 2, 3])
    with pytest.raises(ValueError):
        s.values[0] = 5
    with pytest.raises(DataError):
        ts([1, np.nan])
    with pytest.raises(ValueError):
        TimeSeries(T0, 0.0, [1.0])


def test_arithmetic_needs_alignment_and_units():
    a, b = ts([1, 2]), ts([3, 4])
    assert np.allclose((a + b).values, [4, 6])
    assert np.allclose((a - b).values, [-2, -2])
    assert np.allclose((2 * a).values, [2, 4])
    with pytest.raises(AlignmentError):
        a + ts([1, 2], start=T0 + timedelta(hours=1))
    with pytest.raises(UnitMismatchError):
        a + ts([1, 2], unit=Unit.DEG_C)


def test_align_intersection_of_identical_series_is_identity():
    a, b = ts([1, 2, 3]), ts([4, 5, 6])
    a2, b2 = align([a, b])
    assert len(a2) == len(b2) == 3 and np.array_equal(a2.values, a.values)


def test_align_shifted_series_loses_one_step_each():
    a = ts([1, 2, 3, 4])
    b = ts([10, 20, 30, 40], start=T0 + timedelta(hours=1))
    a2, b2 = align([a, b])
    assert len(a2) == len(b2) == 3
    assert list(a2.values) == [2, 3, 4] and list(b2.values) == [10, 20, 30]


def test_align_minute_with_hourly_asks_for_aggregation():
    minute = TimeSeries(T0, 60.0, np.ones(120), Unit.W)
    with pytest.raises(AlignmentError, match="aggregate"):
        align([minute, ts([1, 2])])


def test_align_non_overlapping_and_uncovered_window():
    with pytest.raises(AlignmentError):
        align([ts([1, 2]), ts([1, 2], start=T0 + timedelta(hours=5))])
    with pytest.raises(AlignmentError):
        align([ts([1, 2])], window=(T0, T0 + timedelta(hours=3)))


def test_aggregate_examples():
    temp = TimeSeries(T0, 60.0, np.full(60, 20.0), Unit.DEG_C)
    assert aggregate(temp, 3600.0).values.tolist() == [20.0]
    power = TimeSeries(T0, 60.0, np.full(60, 1000.0), Unit.W)
    assert aggregate(power, 3600.0).values.tolist() == [1000.0]
    ramp = TimeSeries(T0, 60.0, np.arange(60.0), Unit.W)
    assert aggregate(ramp, 3600.0).values[0] == pytest.approx(29.5)


def test_aggregate_sum_converts_energy_to_mean_power():
    wh = TimeSeries(T0, 60.0, np.full(60, 1000.0 / 60.0), Unit.WH)  # 1 kWh over the hour
    out = aggregate(wh, 3600.0, "sum")
    assert out.unit == Unit.W and out.values[0] == pytest.approx(1000.0)
    with pytest.raises(UnitMismatchError):
        aggregate(TimeSeries(T0, 60.0, np.ones(60), Unit.W), 3600.0, "sum")


def test_aggregate_rejects_non_integer_ratio_and_drops_partial():
    s = TimeSeries(T0, 60.0, np.ones(150), Unit.W)
    with pytest.raises(AlignmentError):
        aggregate(s, 90.5)
    assert len(aggregate(s, 3600.0)) == 2


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.sampled_from([1, 2, 3, 6]))
def test_aggregate_idempotent_at_same_step(vals, k):
    s = TimeSeries(T0, 600.0, np.array(vals), Unit.W)
    once = aggregate(s, 600.0 * k)
    if len(once) == 0:
        return
    twice = aggregate(once, 600.0 * k)
    assert np.array_equal(once.values, twice.values)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=60), st.integers(0, 20), st.integers(0, 20))
def test_align_preserves_order_and_never_fabricates(vals, off_a, off_b):
    a = ts(vals, start=T0 + timedelta(hours=off_a))
    b = ts(vals[::-1], start=T0 + timedelta(hours=off_b))
    try:
        a2, b2 = align([a, b])
    except AlignmentError:
        assert a.end <= b.start or b.end <= a.start
        return
    i = a.index_of(a2.start)
    assert np.array_equal(a2.values, a.values[i:i + len(a2)])
    assert a2.aligned_with(b2)


def test_fill_short_gaps_and_runs():
    v = fill_short_gaps([1.0, np.nan, np.nan, 4.0, np.nan, np.nan, np.nan, 8.0])
    assert v[:4].tolist() == [1.0, 2.0, 3.0, 4.0]
    assert np.isnan(v[4:7]).all()
    assert contiguous_runs([1, 1, 0, 1, 0, 0, 1]) == [(0, 2), (3, 4), (6, 7)]


def test_total_and_mj_conversion():
    s = total([ts([1, 2]), ts([3, 4])])
    assert s.values.tolist() == [4, 6]
    assert watts_to_mj(ts([1e6 / 3600.0])) == pytest.approx([1.0])


def test_weather_checks_alignment_and_irradiance():
    ok = ts([0, 1], unit=Unit.W_M2)
    t = ts([10, 11], unit=Unit.DEG_C)
    with pytest.raises(DataError):
        WeatherSeries(t, ts([-1, 0], unit=Unit.W_M2), ok, ok, ts([1, 1], unit=Unit.M_S), ts([0, 0], unit=Unit.DIMENSIONLESS))
    with pytest.raises(AlignmentError):
        WeatherSeries(t, ts([0], unit=Unit.W_M2), ok, ok, ts([1, 1], unit=Unit.M_S), ts([0, 0], unit=Unit.DIMENSIONLESS))
