"""Monte Mario / Italy zone 1 (EPSG:3003) to WGS84 conversion.

Gauss-Boaga west zone: transverse Mercator on the International 1924
ellipsoid (central meridian 9 E, k0 = 0.9996, false easting 1,500,000 m)
over the Rome 1940 datum, then a seven-parameter position-vector Helmert
shift to WGS84 (the EPSG mainland-Italy parameter set).  Series terms follow
the usual working-manual expansion; good to centimeters over the zone, far
tighter than the source data this ingests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# International 1924 (Hayford) and WGS84 ellipsoids
INTL_A, INTL_INV_F = 6378388.0, 297.0
WGS84_A, WGS84_INV_F = 6378137.0, 298.257223563

# EPSG:3003 projection constants
LON0_DEG = 9.0
K0 = 0.9996
FALSE_EASTING = 1_500_000.0
FALSE_NORTHING = 0.0

# Rome 1940 -> WGS84 position-vector Helmert (mainland Italy):
# translations m, rotations arc-seconds, scale ppm
HELMERT_ROME40_TO_WGS84 = (-104.1, -49.1, -9.9, 0.971, -2.917, 0.714, -11.68)

_ARCSEC = math.pi / (180.0 * 3600.0)


@dataclass(frozen=True)
class _Ellipsoid:
    a: float
    inv_f: float

    @property
    def f(self) -> float:
        return 1.0 / self.inv_f

    @property
    def e2(self) -> float:
        return self.f * (2.0 - self.f)


INTL = _Ellipsoid(INTL_A, INTL_INV_F)
WGS84 = _Ellipsoid(WGS84_A, WGS84_INV_F)


def meridian_arc(ell: _Ellipsoid, phi: float) -> float:
    """Meridian arc length from the equator, series form."""
    e2 = ell.e2
    e4, e6 = e2 * e2, e2 * e2 * e2
    return ell.a * (
        (1 - e2 / 4 - 3 * e4 / 64 - 5 * e6 / 256) * phi
        - (3 * e2 / 8 + 3 * e4 / 32 + 45 * e6 / 1024) * math.sin(2 * phi)
        + (15 * e4 / 256 + 45 * e6 / 1024) * math.sin(4 * phi)
        - (35 * e6 / 3072) * math.sin(6 * phi)
    )


def tm_forward(ell: _Ellipsoid, lat_deg: float, lon_deg: float,
               lon0_deg: float = LON0_DEG, k0: float = K0,
               fe: float = FALSE_EASTING, fn: float = FALSE_NORTHING) -> tuple[float, float]:
    """Geodetic (on ell) -> transverse Mercator easting/northing."""
    phi = math.radians(lat_deg)
    lam = math.radians(lon_deg - lon0_deg)
    e2 = ell.e2
    ep2 = e2 / (1 - e2)
    n = ell.a / math.sqrt(1 - e2 * math.sin(phi) ** 2)
    t = math.tan(phi) ** 2
    c = ep2 * math.cos(phi) ** 2
    a_ = lam * math.cos(phi)
    m = meridian_arc(ell, phi)
    easting = fe + k0 * n * (
        a_
        + (1 - t + c) * a_**3 / 6
        + (5 - 18 * t + t * t + 72 * c - 58 * ep2) * a_**5 / 120
    )
    northing = fn + k0 * (
        m
        + n
        * math.tan(phi)
        * (
            a_**2 / 2
            + (5 - t + 9 * c + 4 * c * c) * a_**4 / 24
            + (61 - 58 * t + t * t + 600 * c - 330 * ep2) * a_**6 / 720
        )
    )
    return easting, northing


def tm_inverse(ell: _Ellipsoid, easting: float, northing: float,
               lon0_deg: float = LON0_DEG, k0: float = K0,
               fe: float = FALSE_EASTING, fn: float = FALSE_NORTHING) -> tuple[float, float]:
    """Transverse Mercator easting/northing -> geodetic (lat, lon) on ell."""
    e2 = ell.e2
    ep2 = e2 / (1 - e2)
    m = (northing - fn) / k0
    mu = m / (ell.a * (1 - e2 / 4 - 3 * e2 * e2 / 64 - 5 * e2**3 / 256))
    e1 = (1 - math.sqrt(1 - e2)) / (1 + math.sqrt(1 - e2))
    phi1 = (
        mu
        + (3 * e1 / 2 - 27 * e1**3 / 32) * math.sin(2 * mu)
        + (21 * e1**2 / 16 - 55 * e1**4 / 32) * math.sin(4 * mu)
        + (151 * e1**3 / 96) * math.sin(6 * mu)
        + (1097 * e1**4 / 512) * math.sin(8 * mu)
    )
    sin1, cos1 = math.sin(phi1), math.cos(phi1)
    c1 = ep2 * cos1 * cos1
    t1 = (sin1 / cos1) ** 2
    n1 = ell.a / math.sqrt(1 - e2 * sin1 * sin1)
    r1 = ell.a * (1 - e2) / (1 - e2 * sin1 * sin1) ** 1.5
    d = (easting - fe) / (n1 * k0)
    lat = phi1 - (n1 * sin1 / cos1 / r1) * (
        d * d / 2
        - (5 + 3 * t1 + 10 * c1 - 4 * c1 * c1 - 9 * ep2) * d**4 / 24
        + (61 + 90 * t1 + 298 * c1 + 45 * t1 * t1 - 252 * ep2 - 3 * c1 * c1) * d**6 / 720
    )
    lon = math.radians(lon0_deg) + (
        d
        - (1 + 2 * t1 + c1) * d**3 / 6
        + (5 - 2 * c1 + 28 * t1 - 3 * c1 * c1 + 8 * ep2 + 24 * t1 * t1) * d**5 / 120
    ) / cos1
    return math.degrees(lat), math.degrees(lon)


def geodetic_to_ecef(ell: _Ellipsoid, lat_deg: float, lon_deg: float, h: float = 0.0):
    phi, lam = math.radians(lat_deg), math.radians(lon_deg)
    n = ell.a / math.sqrt(1 - ell.e2 * math.sin(phi) ** 2)
    x = (n + h) * math.cos(phi) * math.cos(lam)
    y = (n + h) * math.cos(phi) * math.sin(lam)
    z = (n * (1 - ell.e2) + h) * math.sin(phi)
    return x, y, z


def ecef_to_geodetic(ell: _Ellipsoid, x: float, y: float, z: float) -> tuple[float, float, float]:
    lon = math.atan2(y, x)
    p = math.hypot(x, y)
    phi = math.atan2(z, p * (1 - ell.e2))
    for _ in range(8):
        n = ell.a / math.sqrt(1 - ell.e2 * math.sin(phi) ** 2)
        h = p / math.cos(phi) - n
        phi = math.atan2(z, p * (1 - ell.e2 * n / (n + h)))
    n = ell.a / math.sqrt(1 - ell.e2 * math.sin(phi) ** 2)
    h = p / math.cos(phi) - n
    return math.degrees(phi), math.degrees(lon), h


def helmert(params, x: float, y: float, z: float, inverse: bool = False):
    """Seven-parameter position-vector transform (small-angle form)."""
    tx, ty, tz, rx, ry, rz, ppm = params
    rx, ry, rz = rx * _ARCSEC, ry * _ARCSEC, rz * _ARCSEC
    s = 1.0 + ppm * 1e-6
    if not inverse:
        xr = s * (x - rz * y + ry * z) + tx
        yr = s * (rz * x + y - rx * z) + ty
        zr = s * (-ry * x + rx * y + z) + tz
        return xr, yr, zr
    # first-order inverse: subtract translations, rotate back, unscale
    x, y, z = (x - tx) / s, (y - ty) / s, (z - tz) / s
    xr = x + rz * y - ry * z
    yr = -rz * x + y + rx * z
    zr = ry * x - rx * y + z
    return xr, yr, zr


def epsg3003_to_wgs84(easting: float, northing: float) -> tuple[float, float]:
    """EPSG:3003 easting/northing -> WGS84 (lon, lat) degrees."""
    lat_r40, lon_r40 = tm_inverse(INTL, easting, northing)
    x, y, z = geodetic_to_ecef(INTL, lat_r40, lon_r40)
    xw, yw, zw = helmert(HELMERT_ROME40_TO_WGS84, x, y, z)
    lat, lon, _ = ecef_to_geodetic(WGS84, xw, yw, zw)
    return lon, lat


def wgs84_to_epsg3003(lon: float, lat: float) -> tuple[float, float]:
    """WGS84 (lon, lat) degrees -> EPSG:3003 easting/northing."""
    x, y, z = geodetic_to_ecef(WGS84, lat, lon)
    xr, yr, zr = helmert(HELMERT_ROME40_TO_WGS84, x, y, z, inverse=True)
    lat_r40, lon_r40, _ = ecef_to_geodetic(INTL, xr, yr, zr)
    return tm_forward(INTL, lat_r40, lon_r40)
