"""Synthetic weather, schedules and reference buildings for end-to-end experiments."""
from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timedelta

import numpy as np

from .engine import (
    CP_AIR,
    RHO_AIR,
    BuildingModel,
    Layer,
    RunSpec,
    Surface,
    Window,
    Zone,
    discretize,
    simulate,
)
from .solar import Orientation, Site, interval_midpoints, sun_position
from .timeseries import MeasuredDataset, TimeSeries, Unit, WeatherSeries


@dataclass(frozen=True)
class Climate:
    name: str
    t_mean: float
    t_daily_amplitude: float
    t_trend_per_day: float
    anomaly_sd: float
    anomaly_corr: float
    clearness_mean: float
    clearness_sd: float
    humidity_ratio: float
    wind_mean: float


HOT_DRY = Climate("hot-dry", 27.0, 8.0, 0.12, 1.5, 0.7, 0.85, 0.06, 0.005, 3.0)
TEMPERATE = Climate("temperate", 18.0, 5.0, 0.12, 2.5, 0.7, 0.60, 0.20, 0.010, 4.0)
COLD = Climate("cold", 0.0, 5.0, 0.0, 3.0, 0.7, 0.50, 0.20, 0.003, 5.0)
CLIMATES = {c.name: c for c in (HOT_DRY, TEMPERATE, COLD)}


def synthetic_weather(
    start: datetime,
    hours: int,
    climate: Climate = TEMPERATE,
    site: Site = Site(),
    seed: int = 0,
) -> WeatherSeries:
    """Hourly weather with a diurnal temperature cycle, daily AR(1) anomalies and
    clear-sky irradiance thinned by a random daily clearness."""
    rng = np.random.default_rng(seed)
    times = interval_midpoints(start, 3600.0, hours)
    cos_z, _ = sun_position(times, site)
    doy = np.array([t.timetuple().tm_yday for t in times], dtype=float)
    hour = np.array([t.hour + t.minute / 60.0 for t in times])
    day = ((np.array([(t - start).total_seconds() for t in times]) / 86400.0)).astype(int)
    n_days = int(day.max()) + 1 if hours else 0

    anomaly = np.zeros(n_days)
    clear = np.zeros(n_days)
    for d in range(n_days):
        prev = anomaly[d - 1] if d else 0.0
        anomaly[d] = climate.anomaly_corr * prev + rng.normal(0.0, climate.anomaly_sd)
        clear[d] = np.clip(rng.normal(climate.clearness_mean, climate.clearness_sd), 0.1, 1.0)

    i0 = 1367.0 * (1.0 + 0.033 * np.cos(2 * np.pi * doy / 365.0))
    up = cos_z > 0.01
    air_mass = np.where(up, 1.0 / np.maximum(cos_z, 0.01), np.inf)
    dni_clear = np.where(up, i0 * 0.7 ** (air_mass**0.678), 0.0)
    k = clear[day]
    dni = dni_clear * k**1.5
    dhi = np.where(up, i0 * cos_z * (0.06 + 0.22 * (1.0 - k)), 0.0)
    ghi = dni * np.clip(cos_z, 0.0, None) + dhi

    t_out = (
        climate.t_mean
        + climate.t_trend_per_day * day
        + anomaly[day]
        + climate.t_daily_amplitude * (0.6 + 0.4 * k) * np.cos(2 * np.pi * (hour - 15.0) / 24.0)
        + rng.normal(0.0, 0.3, hours)
    )
    w = np.clip(climate.humidity_ratio + 0.0015 * anomaly[day] / max(climate.anomaly_sd, 1e-9)
                + rng.normal(0.0, 0.0005, hours), 0.001, 0.03)
    wind = np.clip(climate.wind_mean + 1.5 * np.sin(2 * np.pi * (hour - 14.0) / 24.0) + rng.normal(0, 1.0, hours), 0.0, None)

    def ts(v, unit):
        return TimeSeries(start, 3600.0, v, unit)

    return WeatherSeries(
        t_out=ts(t_out, Unit.DEG_C),
        ghi=ts(ghi, Unit.W_M2),
        dni=ts(dni, Unit.W_M2),
        dhi=ts(dhi, Unit.W_M2),
        wind_speed=ts(wind, Unit.M_S),
        humidity_ratio=ts(w, Unit.DIMENSIONLESS),
    )


def occupied(times: list[datetime], first_hour: int = 7, last_hour: int = 19) -> np.ndarray:
    return np.array([t.weekday() < 5 and first_hour <= t.hour < last_hour for t in times])


def office_setpoints(start, hours, occupied_temp=22.5, unoccupied_temp=26.0) -> TimeSeries:
    times = [start + timedelta(hours=i) for i in range(hours)]
    occ = occupied(times)
    return TimeSeries(start, 3600.0, np.where(occ, occupied_temp, unoccupied_temp), Unit.DEG_C)


def office_lep(start, hours, floor_area, occupied_wm2=24.0, unoccupied_wm2=5.0, day_sd=0.15, seed=0) -> TimeSeries:
    """Lights + equipment + people with a random per-day intensity."""
    rng = np.random.default_rng(seed)
    times = [start + timedelta(hours=i) for i in range(hours)]
    occ = occupied(times)
    n_days = hours // 24 + 1
    day_factor = np.clip(rng.normal(1.0, day_sd, n_days), 0.3, None)
    hour_jitter = np.clip(rng.normal(1.0, 0.05, hours), 0.5, None)
    d = np.array([i // 24 for i in range(hours)])
    level = np.where(occ, occupied_wm2 * day_factor[d] * hour_jitter, unoccupied_wm2)
    return TimeSeries(start, 3600.0, level * floor_area, Unit.W)


# ----------------------------------------------------------------------------- buildings

STUCCO = Layer(0.025, 0.72, 1856.0, 840.0)
WALL_INSULATION = Layer(0.06, 0.045, 30.0, 1200.0)
GYPSUM = Layer(0.016, 0.16, 800.0, 1090.0)
ROOF_INSULATION = Layer(0.10, 0.049, 265.0, 836.0)
METAL_DECK = Layer(0.0015, 45.0, 7680.0, 418.0)
CONCRETE = Layer(0.10, 1.31, 2240.0, 836.0)


def medium_office_analog(name: str = "medium-office-analog", site: Site = Site()) -> BuildingModel:
    """Three-storey office (about 4,980 m2) lumped into one zone."""
    length, width, storeys, storey_h = 49.9, 33.3, 3, 3.96
    floor = length * width
    height = storeys * storey_h
    wwr = 0.33
    volume = floor * storeys * 2.74
    surfaces, windows = [], []
    for side, az, run in (("south", 180.0, length), ("north", 0.0, length), ("east", 90.0, width), ("west", 270.0, width)):
        gross = run * height
        surfaces.append(Surface(f"wall_{side}", gross * (1 - wwr), (STUCCO, WALL_INSULATION, GYPSUM),
                                orientation=Orientation(az, 90.0)))
        windows.append(Window(f"win_{side}", gross * wwr, 3.0, 0.40, Orientation(az, 90.0)))
    surfaces.append(Surface("roof", floor, (ROOF_INSULATION, METAL_DECK), solar_absorptance=0.7,
                            orientation=Orientation(180.0, 0.0)))
    surfaces.append(Surface("slab", floor, (CONCRETE,), exterior=False))
    surfaces.append(Surface("interior_floors", 2 * floor, (Layer(0.05, 1.31, 2240.0, 836.0),), exterior=False))
    zone = Zone(
        name="office",
        air_capacitance=2.0 * RHO_AIR * CP_AIR * volume,
        surfaces=tuple(surfaces),
        windows=tuple(windows),
        solar_to_air_fraction=0.1,
        lep_radiative_fraction=0.5,
        infiltration_ach=0.2,
        volume=volume,
    )
    return BuildingModel(name, (zone,), site)


def massless_box(u_wall=0.5, u_roof=0.3, u_window=2.5, name="box") -> BuildingModel:
    """Single zone, zero heat capacity everywhere except the air node."""
    def massless(u, area, nm, tilt=90.0):
        # films 25 / 8 W/m2K; remaining resistance goes into one massless layer
        r = 1.0 / u - 1.0 / 25.0 - 1.0 / 8.0
        return Surface(nm, area, (Layer(0.1, 0.1 / r, 0.0, 0.0),), orientation=Orientation(180.0, tilt))

    zone = Zone(
        name="box",
        air_capacitance=1.0e5,
        surfaces=(massless(u_wall, 80.0, "walls"), massless(u_roof, 25.0, "ceiling", tilt=0.0)),
        windows=(Window("window", 6.0, u_window, 0.5, Orientation(180.0, 90.0)),),
        solar_to_air_fraction=1.0,
        lep_radiative_fraction=0.0,
    )
    return BuildingModel(name, (zone,))


def scale_conductivity(model: BuildingModel, factor: float, windows: bool = True) -> BuildingModel:
    """Multiply every layer conductivity (and window U, if asked) by ``factor``."""
    zones = []
    for z in model.zones:
        surfaces = tuple(
            replace(s, layers=tuple(replace(l, conductivity=l.conductivity * factor) for l in s.layers))
            if s.exterior else s
            for s in z.surfaces
        )
        wins = tuple(replace(w, u_value=w.u_value * factor) for w in z.windows) if windows else z.windows
        zones.append(replace(z, surfaces=surfaces, windows=wins))
    return replace(model, zones=tuple(zones))


def scale_shgc(model: BuildingModel, factor: float) -> BuildingModel:
    zones = [replace(z, windows=tuple(replace(w, shgc=min(1.0, w.shgc * factor)) for w in z.windows))
             for z in model.zones]
    return replace(model, zones=tuple(zones))


def add_wall_mass(model: BuildingModel, layer: Layer = CONCRETE) -> BuildingModel:
    """Put an extra layer on the inside of every exterior wall and thicken internal mass."""
    zones = []
    for z in model.zones:
        surfaces = []
        for s in z.surfaces:
            if s.exterior and s.orientation.tilt > 45.0:
                s = replace(s, layers=s.layers + (layer,))
            elif not s.exterior:
                s = replace(s, layers=tuple(replace(l, thickness=2.0 * l.thickness) for l in s.layers))
            surfaces.append(s)
        zones.append(replace(z, surfaces=tuple(surfaces)))
    return replace(model, zones=tuple(zones))


def real_audit_pair(conductivity: float = 1.4, shgc: float = 1.3, audit_extra_mass: bool = True):
    """``(real, audit)``: the audit is better insulated, has lower SHGC and (optionally) more mass."""
    base = medium_office_analog()
    real = scale_shgc(scale_conductivity(base, conductivity), shgc)
    audit = add_wall_mass(base) if audit_extra_mass else base
    return replace(real, name="real"), replace(audit, name="audit")


# ----------------------------------------------------------------------------- measurements


def default_schedules(model: BuildingModel, weather: WeatherSeries, seed: int = 0):
    """Office setpoints and LEP per zone, LEP scaled by zone volume."""
    start, hours = weather.start, len(weather)
    setpoints, lep = {}, {}
    for i, z in enumerate(model.zones):
        floor = max(z.volume / 2.74, 1.0)
        setpoints[z.name] = office_setpoints(start, hours)
        lep[z.name] = office_lep(start, hours, floor, seed=seed + 101 * i)
    return setpoints, lep


def synthesize_measurements(
    real: BuildingModel,
    weather: WeatherSeries,
    setpoints: dict[str, TimeSeries] | None = None,
    lep: dict[str, TimeSeries] | None = None,
    noise: float = 0.0,
    seed: int = 0,
    plant=None,
) -> MeasuredDataset:
    """Track-mode run of the "real" building standing in for metered data.

    ``noise`` is the relative standard deviation of Gaussian multiplicative
    noise on the delivered load. With ``plant`` the plant forward model adds
    an energy series (``electricity`` for DX cooling, ``gas`` for a boiler).
    """
    if setpoints is None or lep is None:
        sp, lp = default_schedules(real, weather, seed)
        setpoints = setpoints or sp
        lep = lep or lp
    run = simulate(discretize(real), RunSpec(weather, lep, setpoints=setpoints))
    q = run.total_load()
    if noise > 0:
        rng = np.random.default_rng(seed + 7919)
        q = q.with_values(q.values * (1.0 + noise * rng.standard_normal(len(q))))
    energy = {}
    if plant is not None:
        from .hvac import ProcessLoadBox, plant_energy

        box = ProcessLoadBox.from_delivered(q, plant)
        energy[plant.fuel] = plant_energy(box, weather)
    return MeasuredDataset(t_in=dict(setpoints), lep=dict(lep), weather=weather, q_hc_measured=q, energy=energy)
