"""File formats: building/plant/report JSON and time-series CSV.

Every JSON document carries ``schema_version``. CSV files share a leading
``timestamp`` column (ISO 8601, start of the interval each row describes).
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .engine import BuildingModel, Layer, Surface, Window, Zone
from .errors import ConfigError, DataError
from .solar import Orientation, Site
from .timeseries import MeasuredDataset, TimeSeries, Unit, WeatherSeries, fill_short_gaps

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
WEATHER_COLUMNS = ("t_out", "ghi", "dni", "dhi", "wind_speed", "humidity_ratio")
WEATHER_UNITS = {
    "t_out": Unit.DEG_C, "ghi": Unit.W_M2, "dni": Unit.W_M2, "dhi": Unit.W_M2,
    "wind_speed": Unit.M_S, "humidity_ratio": Unit.DIMENSIONLESS,
}
_MISSING = object()


# ----------------------------------------------------------------------------- building JSON


def _take(d: dict, key: str, path: str, kind=float, default=_MISSING):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    if key not in d:
        if default is _MISSING:
            raise ConfigError(f"{path}: missing field {key!r}")
        return default
    v = d[key]
    if v is None and default is None:
        return None
    try:
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise TypeError
            return float(v)
        if kind is bool:
            if not isinstance(v, bool):
                raise TypeError
            return v
        if kind is str:
            if not isinstance(v, str):
                raise TypeError
            return v
        if kind is list:
            if not isinstance(v, list):
                raise TypeError
            return v
        if kind is dict:
            if not isinstance(v, dict):
                raise TypeError
            return v
    except TypeError:
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got {type(v).__name__}") from None
    raise AssertionError(kind)


def _no_extra(d: dict, allowed: set[str], path: str):
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{path}: unknown field(s) {extra}")


def _orientation(d, path) -> Orientation:
    if d is None:
        return Orientation()
    _no_extra(d, {"azimuth", "tilt"}, path)
    return Orientation(_take(d, "azimuth", path, default=180.0), _take(d, "tilt", path, default=90.0))


def _layer(d, path) -> Layer:
    _no_extra(d, {"thickness", "conductivity", "density", "specific_heat", "name"}, path)
    return Layer(*(_take(d, k, path) for k in ("thickness", "conductivity", "density", "specific_heat")))


def _surface(d, path) -> Surface:
    allowed = {"name", "area", "layers", "exterior", "solar_absorptance", "exterior_film", "interior_film",
               "solar_gain_share", "orientation"}
    _no_extra(d, allowed, path)
    name = _take(d, "name", path, str)
    p = f"{path}[{name}]"
    layers = [_layer(x, f"{p}.layers[{i}]") for i, x in enumerate(_take(d, "layers", p, list))]
    return Surface(
        name=name,
        area=_take(d, "area", p),
        layers=tuple(layers),
        exterior=_take(d, "exterior", p, bool, True),
        solar_absorptance=_take(d, "solar_absorptance", p, default=0.6),
        exterior_film=_take(d, "exterior_film", p, default=25.0),
        interior_film=_take(d, "interior_film", p, default=8.0),
        solar_gain_share=_take(d, "solar_gain_share", p, default=None),
        orientation=_orientation(d.get("orientation"), f"{p}.orientation"),
    )


def _window(d, path) -> Window:
    _no_extra(d, {"name", "area", "u_value", "shgc", "orientation"}, path)
    name = _take(d, "name", path, str)
    p = f"{path}[{name}]"
    return Window(name, _take(d, "area", p), _take(d, "u_value", p), _take(d, "shgc", p),
                  _orientation(d.get("orientation"), f"{p}.orientation"))


def _zone(d, path) -> Zone:
    allowed = {"name", "air_capacitance", "surfaces", "windows", "solar_to_air_fraction",
               "lep_radiative_fraction", "infiltration_ach", "volume"}
    _no_extra(d, allowed, path)
    name = _take(d, "name", path, str)
    p = f"zone[{name}]"
    return Zone(
        name=name,
        air_capacitance=_take(d, "air_capacitance", p),
        surfaces=tuple(_surface(s, f"{p}.surface") for s in _take(d, "surfaces", p, list, [])),
        windows=tuple(_window(w, f"{p}.window") for w in _take(d, "windows", p, list, [])),
        solar_to_air_fraction=_take(d, "solar_to_air_fraction", p, default=0.0),
        lep_radiative_fraction=_take(d, "lep_radiative_fraction", p, default=0.5),
        infiltration_ach=_take(d, "infiltration_ach", p, default=0.0),
        volume=_take(d, "volume", p, default=0.0),
    )


def building_from_dict(d: dict) -> BuildingModel:
    if not isinstance(d, dict):
        raise ConfigError("building: expected a JSON object")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"building.schema_version: unsupported value {version!r} (expected {SCHEMA_VERSION})")
    _no_extra(d, {"schema_version", "name", "site", "zones"}, "building")
    site_d = _take(d, "site", "building", dict, {})
    _no_extra(site_d, {"latitude", "longitude", "tz_offset_hours", "ground_reflectance"}, "building.site")
    defaults = Site()
    site = Site(**{k: _take(site_d, k, "building.site", default=getattr(defaults, k))
                   for k in ("latitude", "longitude", "tz_offset_hours", "ground_reflectance")})
    zones = tuple(_zone(z, f"building.zones[{i}]") for i, z in enumerate(_take(d, "zones", "building", list)))
    return BuildingModel(_take(d, "name", "building", str, "building"), zones, site).validate()


def building_to_dict(model: BuildingModel) -> dict:
    def orient(o: Orientation):
        return {"azimuth": o.azimuth, "tilt": o.tilt}

    return {
        "schema_version": SCHEMA_VERSION,
        "name": model.name,
        "site": {
            "latitude": model.site.latitude, "longitude": model.site.longitude,
            "tz_offset_hours": model.site.tz_offset_hours, "ground_reflectance": model.site.ground_reflectance,
        },
        "zones": [
            {
                "name": z.name,
                "air_capacitance": z.air_capacitance,
                "volume": z.volume,
                "infiltration_ach": z.infiltration_ach,
                "solar_to_air_fraction": z.solar_to_air_fraction,
                "lep_radiative_fraction": z.lep_radiative_fraction,
                "surfaces": [
                    {
                        "name": s.name, "area": s.area, "exterior": s.exterior,
                        "solar_absorptance": s.solar_absorptance, "exterior_film": s.exterior_film,
                        "interior_film": s.interior_film, "solar_gain_share": s.solar_gain_share,
                        "orientation": orient(s.orientation),
                        "layers": [
                            {"thickness": la.thickness, "conductivity": la.conductivity,
                             "density": la.density, "specific_heat": la.specific_heat}
                            for la in s.layers
                        ],
                    }
                    for s in z.surfaces
                ],
                "windows": [
                    {"name": w.name, "area": w.area, "u_value": w.u_value, "shgc": w.shgc,
                     "orientation": orient(w.orientation)}
                    for w in z.windows
                ],
            }
            for z in model.zones
        ],
    }


def load_building(path) -> BuildingModel:
    return building_from_dict(read_json(path))


def save_building(model: BuildingModel, path):
    write_json(building_to_dict(model), path)


# ----------------------------------------------------------------------------- JSON helpers


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (datetime,)):
        return obj.isoformat()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None


# ----------------------------------------------------------------------------- CSV


def _parse_time(text: str, row: int, path) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{path}: row {row}: bad timestamp {text!r}") from None


def _parse_float(text: str) -> float:
    t = text.strip()
    if t == "" or t.lower() in ("nan", "na", "null"):
        return float("nan")
    return float(t)


def read_table(path, required=()) -> tuple[datetime, float, dict[str, np.ndarray]]:
    """Timestamped numeric CSV onto a regular grid.

    Rows are numbered from 1 after the header. Missing rows and blank cells
    become NaN; runs of at most two samples are interpolated, longer ones are
    an error.
    """
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or header[0] != "timestamp":
            raise DataError(f"{path}: first column must be 'timestamp'")
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names")
        times, rows = [], []
        for i, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {i}: expected {len(header)} fields, got {len(rec)}")
            t = _parse_time(rec[0], i, path)
            if times:
                if t == times[-1][0]:
                    raise DataError(f"{path}: row {i}: duplicate timestamp {t.isoformat()}")
                if t < times[-1][0]:
                    raise DataError(f"{path}: row {i}: timestamps not increasing ({t.isoformat()})")
            try:
                rows.append([_parse_float(c) for c in rec[1:]])
            except ValueError:
                raise DataError(f"{path}: row {i}: non-numeric value") from None
            times.append((t, i))
    if len(times) < 2:
        raise DataError(f"{path}: need at least two rows")
    deltas = [(times[k + 1][0] - times[k][0]).total_seconds() for k in range(len(times) - 1)]
    step = min(deltas)
    start = times[0][0]
    n = int(round((times[-1][0] - start).total_seconds() / step)) + 1
    grid = np.full((n, len(header) - 1), np.nan)
    for (t, row), vals in zip(times, rows):
        off = (t - start).total_seconds() / step
        k = int(round(off))
        if abs(off - k) > 1e-9:
            raise DataError(f"{path}: row {row}: timestamp {t.isoformat()} is off the {step:g}s grid")
        grid[k] = vals
    cols = {}
    for j, name in enumerate(header[1:]):
        filled = fill_short_gaps(grid[:, j])
        bad = np.flatnonzero(np.isnan(filled))
        if bad.size:
            when = start + timedelta(seconds=step * int(bad[0]))
            raise DataError(
                f"{path}: column {name!r} has a gap longer than the interpolation limit at {when.isoformat()}"
            )
        if np.isnan(grid[:, j]).any():
            logger.info("%s: interpolated short gaps in %s", path, name)
        cols[name] = filled
    return start, step, cols


def load_weather(path) -> WeatherSeries:
    start, step, cols = read_table(path, WEATHER_COLUMNS)
    return WeatherSeries(**{c: TimeSeries(start, step, cols[c], WEATHER_UNITS[c]) for c in WEATHER_COLUMNS})


def _channel_unit(name: str) -> Unit:
    leaf = name.rsplit(".", 1)[-1]
    if leaf == "mass_flow":
        return Unit.KG_S
    if leaf.startswith("t_"):
        return Unit.DEG_C
    return Unit.DIMENSIONLESS


def load_measured(path, weather: WeatherSeries) -> MeasuredDataset:
    """Measured-data CSV: ``t_in.<zone>``, ``lep.<zone>`` (W), optional ``q_hc`` (W),
    ``energy.<fuel>`` (W) and any other channels (e.g. ``fan.<id>.mass_flow``).

    The result is cut to the common window with ``weather``.
    """
    start, step, cols = read_table(path)
    if step != weather.step:
        raise DataError(f"{path}: step {step:g}s differs from weather step {weather.step:g}s")
    t_in, lep, energy, channels, q_hc = {}, {}, {}, {}, None
    for name, v in cols.items():
        if name.startswith("t_in."):
            t_in[name[5:]] = TimeSeries(start, step, v, Unit.DEG_C)
        elif name.startswith("lep."):
            lep[name[4:]] = TimeSeries(start, step, v, Unit.W)
        elif name.startswith("energy."):
            energy[name[7:]] = TimeSeries(start, step, v, Unit.W)
        elif name == "q_hc":
            q_hc = TimeSeries(start, step, v, Unit.W)
        else:
            channels[name] = TimeSeries(start, step, v, _channel_unit(name))
    if not t_in:
        raise DataError(f"{path}: no t_in.<zone> columns")
    missing_lep = sorted(set(t_in) - set(lep))
    if missing_lep:
        raise DataError(f"{path}: no lep column for zone(s) {missing_lep}")
    first = next(iter(t_in.values()))
    lo = max(first.start, weather.start)
    hi = min(first.end, weather.end)
    if hi <= lo:
        raise DataError(f"{path}: measured data does not overlap the weather file")

    def cut(d):
        return {k: s.slice(lo, hi) for k, s in d.items()}

    return MeasuredDataset(
        t_in=cut(t_in), lep=cut(lep), weather=weather.slice(lo, hi),
        q_hc_measured=None if q_hc is None else q_hc.slice(lo, hi),
        energy=cut(energy), channels=cut(channels),
    )


def write_series_csv(path, series: dict[str, TimeSeries], float_format: str = "{:.10g}"):
    """Aligned series as columns after a shared timestamp column."""
    if not series:
        raise DataError("nothing to write")
    names = list(series)
    ref = series[names[0]]
    for n in names:
        if not series[n].aligned_with(ref):
            raise DataError(f"column {n} is not aligned with {names[0]}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *names])
        cols = [series[n].values for n in names]
        for i, t in enumerate(ref.timestamps):
            w.writerow([t.isoformat(), *(float_format.format(c[i]) for c in cols)])
    return {"path": path.name, "rows": len(ref), "columns": ["timestamp", *names]}


def write_rows_csv(path, header, rows, float_format: str = "{:.10g}"):
    """Plain two-or-more-column plot data (no timestamps), e.g. an RMSE scan."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for r in rows:
            w.writerow([float_format.format(v) if isinstance(v, float) else v for v in r])
    return {"path": path.name, "rows": len(rows), "columns": list(header)}


def save_weather(weather: WeatherSeries, path):
    return write_series_csv(path, {c: getattr(weather, c) for c in WEATHER_COLUMNS})


def save_measured(data: MeasuredDataset, path):
    cols = {}
    for z, s in data.t_in.items():
        cols[f"t_in.{z}"] = s
    for z, s in data.lep.items():
        cols[f"lep.{z}"] = s
    if data.q_hc_measured is not None:
        cols["q_hc"] = data.q_hc_measured
    for f, s in data.energy.items():
        cols[f"energy.{f}"] = s
    cols.update(data.channels)
    return write_series_csv(path, cols)


def relpath(path, base) -> str:
    return os.path.relpath(path, base)
