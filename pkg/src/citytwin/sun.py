"""Solar azimuth/elevation from geographic position and UTC time.

Low-precision almanac formulation: mean longitude and anomaly as linear
functions of days since J2000, a two-term equation of center, declination
and right ascension through the obliquity, and the hour angle from Greenwich
sidereal time.  Accurate to about 0.01 degrees across 1950-2050, far inside
the 0.5 degree budget of the scene-lighting use case.  Elevation is
geometric (no atmospheric refraction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone


@dataclass(frozen=True)
class SunPosition:
    """Azimuth in degrees clockwise from north [0, 360); elevation [-90, 90]."""

    azimuth_deg: float
    elevation_deg: float


def julian_day(dt: datetime) -> float:
    """UTC datetime -> Julian day number (fractional)."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    y, m = dt.year, dt.month
    d = (
        dt.day
        + dt.hour / 24.0
        + dt.minute / 1440.0
        + (dt.second + dt.microsecond / 1e6) / 86400.0
    )
    if m <= 2:
        y -= 1
        m += 12
    a = y // 100
    b = 2 - a + a // 4
    return math.floor(365.25 * (y + 4716)) + math.floor(30.6001 * (m + 1)) + d + b - 1524.5


def sun_position(lat: float, lon: float, when: datetime) -> SunPosition:
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 360.0):
        raise ValueError(f"bad coordinates ({lat}, {lon})")
    n = julian_day(when) - 2451545.0

    mean_long = math.radians((280.460 + 0.9856474 * n) % 360.0)
    mean_anom = math.radians((357.528 + 0.9856003 * n) % 360.0)
    ecl_lon = mean_long + math.radians(
        1.915 * math.sin(mean_anom) + 0.020 * math.sin(2.0 * mean_anom)
    )
    obliquity = math.radians(23.439 - 4.0e-7 * n)

    ra = math.atan2(math.cos(obliquity) * math.sin(ecl_lon), math.cos(ecl_lon))
    dec = math.asin(math.sin(obliquity) * math.sin(ecl_lon))

    gmst = math.radians((280.46061837 + 360.98564736629 * n) % 360.0)
    hour_angle = gmst + math.radians(lon) - ra

    phi = math.radians(lat)
    sin_el = math.sin(phi) * math.sin(dec) + math.cos(phi) * math.cos(dec) * math.cos(hour_angle)
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, sin_el))))
    east = -math.cos(dec) * math.sin(hour_angle)
    north = math.cos(phi) * math.sin(dec) - math.sin(phi) * math.cos(dec) * math.cos(hour_angle)
    azimuth = math.degrees(math.atan2(east, north)) % 360.0
    return SunPosition(azimuth_deg=azimuth, elevation_deg=elevation)
