from dataclasses import replace
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epe.engine import (
    BuildingModel, Layer, RunSpec, Surface, Window, Zone, discretize, simulate, solar_gains, steady_state_blc,
)
from epe.errors import ConfigError, DataError, NumericalError
from epe.solar import Orientation, Site, sun_position
from epe.synthetic import massless_box, medium_office_analog, synthetic_weather
from epe.timeseries import TimeSeries, Unit, WeatherSeries

from conftest import T0, constant_weather, series


def hand_u(surface):
    r = sum(la.thickness / la.conductivity for la in surface.layers) + 1 / surface.interior_film
    if surface.exterior:
        r += 1 / surface.exterior_film
    return 1 / r


def hand_blc(model):
    total = 0.0
    for z in model.zones:
        total += sum(hand_u(s) * s.area for s in z.surfaces if s.exterior)
        total += sum(w.u_value * w.area for w in z.windows)
        total += 1.2 * 1006.0 * z.infiltration_ach * z.volume / 3600.0
    return total


def track(model, weather, temp, lep=0.0, **kw):
    zones = model.zone_names
    lep_d = {z: TimeSeries.constant(weather.start, 3600.0, len(weather), lep, Unit.W) for z in zones}
    sp = {z: TimeSeries.constant(weather.start, 3600.0, len(weather), temp, Unit.DEG_C) for z in zones}
    return simulate(discretize(model), RunSpec(weather, lep_d, setpoints=sp, **kw))


def test_massless_box_has_only_air_capacitance_and_ua_gain():
    box = massless_box()
    sys_ = discretize(box)
    assert np.count_nonzero(sys_.C) == 1 and sys_.C[sys_.air_index[0]] > 0
    expected = 0.5 * 80 + 0.3 * 25 + 2.5 * 6
    assert steady_state_blc(sys_) == pytest.approx(expected, rel=1e-12)
    assert hand_blc(box) == pytest.approx(expected, rel=1e-12)


def test_one_layer_surface_chain_conductances():
    layer = Layer(0.2, 0.8, 1000.0, 900.0)
    s = Surface("w", 10.0, (layer,), exterior_film=20.0, interior_film=5.0)
    model = BuildingModel("m", (Zone("z", 1e5, (s,), lep_radiative_fraction=0.0),))
    sy = discretize(model)
    idx = {n.split("/", 1)[1]: i for i, n in enumerate(sy.nodes)}
    ext, mid, inner, air = idx["w/ext"], idx["w/L0"], idx["w/int"], idx["air"]
    half = 2 * 0.8 * 10.0 / 0.2  # two half-layer resistors
    assert -sy.G[ext, mid] == pytest.approx(half)
    assert -sy.G[mid, inner] == pytest.approx(half)
    assert -sy.G[inner, air] == pytest.approx(5.0 * 10.0)
    assert sy.b_out[ext] == pytest.approx(20.0 * 10.0)
    assert sy.C[mid] == pytest.approx(0.2 * 1000 * 900 * 10)
    assert steady_state_blc(sy) == pytest.approx(hand_u(s) * 10.0)


def test_two_identical_zones_are_block_diagonal():
    z = medium_office_analog().zones[0]
    model = BuildingModel("two", (replace(z, name="a"), replace(z, name="b")))
    sy = discretize(model)
    n = sy.n // 2
    assert not np.any(sy.G[:n, n:]) and not np.any(sy.G[n:, :n])
    assert np.allclose(sy.G[:n, :n], sy.G[n:, n:])


def test_isolated_node_is_rejected():
    model = BuildingModel("m", (Zone("z", 1e5, lep_radiative_fraction=0.0),))
    with pytest.raises(NumericalError, match="singular"):
        discretize(model)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0.005, 0.3), st.floats(0.02, 50.0), st.floats(0.0, 3000.0)), min_size=1, max_size=4),
       st.floats(2.0, 40.0), st.floats(1.0, 20.0), st.booleans())
def test_steady_gain_matches_series_resistance(layers, h_out, h_in, exterior):
    s = Surface("s", 7.5, tuple(Layer(d, k, rho, 900.0) for d, k, rho in layers),
                exterior=exterior, exterior_film=h_out, interior_film=h_in)
    if not exterior:
        return  # an interior surface never reaches outdoors
    model = BuildingModel("m", (Zone("z", 1e5, (s,), lep_radiative_fraction=0.0),))
    assert steady_state_blc(discretize(model)) == pytest.approx(hand_u(s) * 7.5, rel=1e-10)


def test_massless_box_constant_conditions_give_blc_times_delta():
    box = massless_box()
    res = track(box, constant_weather(48, t_out=10.0), 20.0)
    blc = hand_blc(box)
    # heat delivered to the air (gain), so heating is positive
    assert np.allclose(res.ideal_load["box"].values, blc * 10.0, rtol=1e-10)


def test_equilibrium_gives_zero_load():
    model = medium_office_analog()
    res = track(model, constant_weather(72, t_out=21.0), 21.0, zero_solar=True, zero_lep=True)
    assert np.max(np.abs(res.ideal_load["office"].values)) < 1e-6


def test_doubling_all_conductances_doubles_load():
    # layers, films and glazing together; layer conductivity alone is diluted by the films
    def box(k):
        s = Surface("w", 50.0, (Layer(0.1, 0.05 * k, 0.0, 0.0),), exterior_film=25.0 * k, interior_film=8.0 * k)
        return BuildingModel("b", (Zone("z", 1e5, (s,), (Window("g", 4.0, 2.0 * k, 0.5),), lep_radiative_fraction=0.0),))

    wx = constant_weather(24, t_out=0.0)
    q1 = track(box(1.0), wx, 20.0).ideal_load["z"].values
    q2 = track(box(2.0), wx, 20.0).ideal_load["z"].values
    assert np.allclose(q2, 2 * q1, rtol=1e-8)


def test_track_mode_fidelity(hot_dry):
    model = hot_dry.real
    d = hot_dry.data
    res = simulate(discretize(model), RunSpec(d.weather.slice(T0, T0 + timedelta(days=5)),
                                               {k: v.slice(T0, T0 + timedelta(days=5)) for k, v in d.lep.items()},
                                               setpoints={k: v.slice(T0, T0 + timedelta(days=5)) for k, v in d.t_in.items()}))
    assert res.diagnostics["max_track_error"] < 1e-6
    sp = d.t_in["office"].values[: 5 * 24]
    assert np.max(np.abs(res.air_temp["office"].values - sp)) < 1e-6


def test_energy_conservation_free_float():
    model = medium_office_analog()
    sy = discretize(model)
    wx = constant_weather(72, t_out=5.0)
    lep = {"office": TimeSeries.constant(T0, 3600.0, 72, 0.0, Unit.W)}
    res = simulate(sy, RunSpec(wx, lep, mode="free_float", zero_solar=True, initial_temperature=22.0),
                   warmup_days=0, keep_states=True)
    X = res.states
    stored = float(sy.C @ (X[-1] - X[0]))
    flow = res.substep * float(np.sum((5.0 - X[1:]) @ sy.b_out))
    assert stored < 0
    assert stored == pytest.approx(flow, rel=1e-6)


def _random_weather(rng, hours):
    def s(v, unit):
        return TimeSeries(T0, 3600.0, v, unit)

    dni = rng.uniform(0, 600, hours)
    dhi = rng.uniform(0, 200, hours)
    return WeatherSeries(s(rng.normal(15, 8, hours), Unit.DEG_C), s(dni + dhi, Unit.W_M2), s(dni, Unit.W_M2),
                         s(dhi, Unit.W_M2), s(np.full(hours, 2.0), Unit.M_S), s(np.full(hours, 0.008), Unit.DIMENSIONLESS))


def _combine(a, wa, b, wb):
    return WeatherSeries(*(getattr(wa, f).with_values(a * getattr(wa, f).values + b * getattr(wb, f).values)
                           for f in WeatherSeries.FIELDS))


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 2.0), st.floats(0.1, 2.0))
def test_superposition_of_track_loads(seed, a, b):
    rng = np.random.default_rng(seed)
    hours = 72
    sy = discretize(medium_office_analog())
    wa, wb = _random_weather(rng, hours), _random_weather(rng, hours)
    la, lb = rng.uniform(0, 1e5, hours), rng.uniform(0, 1e5, hours)
    sa, sb = rng.uniform(18, 26, hours), rng.uniform(18, 26, hours)

    def run(w, lep, sp):
        return simulate(sy, RunSpec(w, {"office": series(lep)}, setpoints={"office": series(sp, unit=Unit.DEG_C)})).ideal_load["office"].values

    lhs = run(_combine(a, wa, b, wb), a * la + b * lb, a * sa + b * sb)
    rhs = a * run(wa, la, sa) + b * run(wb, lb, sb)
    assert np.max(np.abs(lhs - rhs)) <= 1e-8 * np.max(np.abs(lhs))


def test_free_float_reports_process_load_only():
    box = massless_box()
    wx = constant_weather(24)
    proc = {"box": series(np.full(24, 1234.0))}
    res = simulate(discretize(box), RunSpec(wx, {"box": series(np.zeros(24))}, mode="free_float", process_load=proc))
    assert np.allclose(res.ideal_load["box"].values, 1234.0)
    # and the air settles where the process load balances the envelope
    assert res.air_temp["box"].values[-1] == pytest.approx(10.0 + 1234.0 / hand_blc(box), rel=1e-6)


def test_run_spec_errors():
    wx = constant_weather(24)
    with pytest.raises(ConfigError):
        RunSpec(wx, {})
    with pytest.raises(ConfigError):
        RunSpec(wx, {}, mode="bogus", fixed_temp_override=20.0)
    box = massless_box()
    with pytest.raises(DataError, match="setpoint"):
        simulate(discretize(box), RunSpec(wx, {}, setpoints={"other": series(np.zeros(24), unit=Unit.DEG_C)}))


# ----------------------------------------------------------------------------- solar


def _window_model(orient, shgc=0.5, area=2.0):
    wall = Surface("w", 10.0, (Layer(0.1, 1.0, 0.0, 0.0),))
    return BuildingModel("m", (Zone("z", 1e5, (wall,), (Window("g", area, 2.0, shgc, orient),), lep_radiative_fraction=0.0),))


def test_horizontal_window_sees_global_horizontal():
    wx = constant_weather(24, ghi=500.0, dni=0.0, dhi=500.0)
    q = solar_gains(_window_model(Orientation(180.0, 0.0)), wx)["z"].values
    assert np.allclose(q, 500.0)


def test_no_sun_at_night():
    wx = synthetic_weather(datetime(2021, 6, 1), 48, seed=3)
    q = solar_gains(_window_model(Orientation(180.0, 90.0)), wx)["z"].values
    night = wx.ghi.values == 0
    assert night.sum() > 10 and np.all(q[night] == 0)


def test_east_west_symmetry():
    wx = synthetic_weather(datetime(2021, 3, 20), 24, seed=3)
    east = solar_gains(_window_model(Orientation(90.0, 90.0)), wx)["z"].values.sum()
    west = solar_gains(_window_model(Orientation(270.0, 90.0)), wx)["z"].values.sum()
    assert east == pytest.approx(west, rel=0.05)
    diffuse_only = WeatherSeries(wx.t_out, wx.dhi, wx.dni.with_values(np.zeros(24)), wx.dhi, wx.wind_speed, wx.humidity_ratio)
    e = solar_gains(_window_model(Orientation(90.0, 90.0)), diffuse_only)["z"].values
    w = solar_gains(_window_model(Orientation(270.0, 90.0)), diffuse_only)["z"].values
    assert np.array_equal(e, w)


def test_noon_zenith_at_summer_solstice():
    site = Site(latitude=40.0, longitude=-75.0, tz_offset_hours=-5.0)
    times = [datetime(2021, 6, 21, 10) + timedelta(minutes=m) for m in range(240)]
    cos_z, az = sun_position(times, site)
    i = int(np.argmax(cos_z))
    assert np.degrees(np.arccos(cos_z[i])) == pytest.approx(40.0 - 23.44, abs=0.3)
    assert az[i] == pytest.approx(180.0, abs=2.0)
