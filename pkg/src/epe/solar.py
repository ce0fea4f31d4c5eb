"""Sun position and isotropic-sky transposition onto tilted planes."""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np


@dataclass(frozen=True)
class Site:
    latitude: float = 40.0
    longitude: float = -75.0
    tz_offset_hours: float = -5.0  # local standard time, hours east of UTC
    ground_reflectance: float = 0.2


@dataclass(frozen=True)
class Orientation:
    """Plane orientation: azimuth clockwise from north (180 = south), tilt from horizontal."""

    azimuth: float = 180.0
    tilt: float = 90.0


def sun_position(times: list[datetime], site: Site) -> tuple[np.ndarray, np.ndarray]:
    """Cosine of the zenith angle and solar azimuth (degrees from north) at ``times``.

    Spencer's series for declination and equation of time; accurate to a
    fraction of a degree, which is plenty at hourly resolution.
    """
    doy = np.array([t.timetuple().tm_yday for t in times], dtype=float)
    hour = np.array([t.hour + t.minute / 60.0 + t.second / 3600.0 for t in times])
    b = 2.0 * np.pi * (doy - 1.0) / 365.0
    decl = (
        0.006918
        - 0.399912 * np.cos(b)
        + 0.070257 * np.sin(b)
        - 0.006758 * np.cos(2 * b)
        + 0.000907 * np.sin(2 * b)
        - 0.002697 * np.cos(3 * b)
        + 0.00148 * np.sin(3 * b)
    )
    eot_min = 229.18 * (
        0.000075
        + 0.001868 * np.cos(b)
        - 0.032077 * np.sin(b)
        - 0.014615 * np.cos(2 * b)
        - 0.040849 * np.sin(2 * b)
    )
    solar_time = hour + (4.0 * (site.longitude - 15.0 * site.tz_offset_hours) + eot_min) / 60.0
    omega = np.radians(15.0 * (solar_time - 12.0))
    phi = np.radians(site.latitude)
    cos_z = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(omega)
    cos_z = np.clip(cos_z, -1.0, 1.0)
    az = np.degrees(np.arctan2(np.sin(omega), np.cos(omega) * np.sin(phi) - np.tan(decl) * np.cos(phi))) + 180.0
    return cos_z, az % 360.0


def interval_midpoints(start: datetime, step: float, n: int) -> list[datetime]:
    return [start + timedelta(seconds=step * (i + 0.5)) for i in range(n)]


def incident_irradiance(weather, orientation: Orientation, site: Site, sun=None) -> np.ndarray:
    """Total irradiance on a plane (W/m2), isotropic diffuse sky plus ground reflection.

    ``sun`` may carry a precomputed ``(cos_zenith, azimuth)`` pair for the
    weather grid.
    """
    if sun is None:
        sun = sun_position(interval_midpoints(weather.start, weather.step, len(weather)), site)
    cos_z, sun_az = sun
    beta = np.radians(orientation.tilt)
    sin_z = np.sqrt(np.clip(1.0 - cos_z**2, 0.0, None))
    cos_inc = cos_z * np.cos(beta) + sin_z * np.sin(beta) * np.cos(np.radians(sun_az - orientation.azimuth))
    beam = weather.dni.values * np.clip(cos_inc, 0.0, None)
    beam = np.where(cos_z > 0.0, beam, 0.0)
    diffuse = weather.dhi.values * (1.0 + np.cos(beta)) / 2.0
    ground = weather.ghi.values * site.ground_reflectance * (1.0 - np.cos(beta)) / 2.0
    return beam + diffuse + ground
