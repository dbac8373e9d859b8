"""WGS-84 geodesic math shared by the simulator, the radar console and the
traffic-injection tooling.

Vincenty's inverse and direct formulae on the WGS-84 ellipsoid, plus the
angle helpers (360-degree normalization, heading-relative bearings) and a
small local tangent-plane conversion used for CPA geometry.  Distances in
this project stay within a few tens of kilometres, so the antipodal
non-convergence of Vincenty's inverse is unreachable in practice; it is
still reported as a typed error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# WGS-84 ellipsoid
WGS84_A = 6378137.0  # semi-major axis, meters
WGS84_F = 1.0 / 298.257223563  # flattening
WGS84_B = WGS84_A * (1.0 - WGS84_F)

_TOL = 1e-12  # rad, Vincenty iteration tolerance
_MAX_ITER = 200

KNOTS_TO_MPS = 1852.0 / 3600.0
NM_TO_M = 1852.0


class GeodesyError(Exception):
    """Vincenty failed to converge (near-antipodal input)."""


@dataclass(frozen=True)
class GeoPosition:
    lat: float  # degrees, |lat| <= 90
    lon: float  # degrees, normalized to [-180, 180)

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        lon = self.lon
        if not -180.0 <= lon < 180.0:
            lon = math.fmod(lon + 180.0, 360.0)
            if lon < 0.0:
                lon += 360.0
            object.__setattr__(self, "lon", lon - 180.0)


def norm360(x: float) -> float:
    """Normalize an angle in degrees into [0, 360)."""
    x = math.fmod(x, 360.0)
    if x < 0.0:
        x += 360.0
    return 0.0 if x >= 360.0 else x  # fmod of tiny negatives rounds to 360


def norm180(x: float) -> float:
    """Normalize an angle in degrees into [-180, 180)."""
    return norm360(x + 180.0) - 180.0


def relative_bearing(heading: float, absolute_azimuth: float) -> float:
    """Bearing of a point relative to own heading, in [0, 360)."""
    return norm360(absolute_azimuth - heading)


def inverse(a: GeoPosition, b: GeoPosition) -> tuple[float, float]:
    """Vincenty inverse: WGS-84 geodesic distance (m) and initial azimuth
    (degrees, from north) from `a` to `b`.

    For coincident points the distance is 0 and the azimuth is 0 by
    convention.  Raises GeodesyError on non-convergence.
    """
    if a.lat == b.lat and a.lon == b.lon:
        return 0.0, 0.0

    u1 = math.atan((1.0 - WGS84_F) * math.tan(math.radians(a.lat)))
    u2 = math.atan((1.0 - WGS84_F) * math.tan(math.radians(b.lat)))
    ll = math.radians(b.lon - a.lon)

    sin_u1, cos_u1 = math.sin(u1), math.cos(u1)
    sin_u2, cos_u2 = math.sin(u2), math.cos(u2)

    lam = ll
    for _ in range(_MAX_ITER):
        sin_lam, cos_lam = math.sin(lam), math.cos(lam)
        sin_sigma = math.sqrt(
            (cos_u2 * sin_lam) ** 2
            + (cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lam) ** 2
        )
        if sin_sigma == 0.0:
            return 0.0, 0.0  # coincident after projection
        cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lam
        sigma = math.atan2(sin_sigma, cos_sigma)
        sin_alpha = cos_u1 * cos_u2 * sin_lam / sin_sigma
        cos_sq_alpha = 1.0 - sin_alpha * sin_alpha
        if cos_sq_alpha == 0.0:
            cos2_sigma_m = 0.0  # equatorial line
        else:
            cos2_sigma_m = cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha
        c = WGS84_F / 16.0 * cos_sq_alpha * (4.0 + WGS84_F * (4.0 - 3.0 * cos_sq_alpha))
        lam_prev = lam
        lam = ll + (1.0 - c) * WGS84_F * sin_alpha * (
            sigma
            + c * sin_sigma * (
                cos2_sigma_m + c * cos_sigma * (-1.0 + 2.0 * cos2_sigma_m ** 2)
            )
        )
        if abs(lam - lam_prev) < _TOL:
            break
    else:
        raise GeodesyError("Vincenty inverse did not converge (antipodal points?)")

    u_sq = cos_sq_alpha * (WGS84_A ** 2 - WGS84_B ** 2) / WGS84_B ** 2
    big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)))
    big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)))
    delta_sigma = big_b * sin_sigma * (
        cos2_sigma_m
        + big_b / 4.0 * (
            cos_sigma * (-1.0 + 2.0 * cos2_sigma_m ** 2)
            - big_b / 6.0 * cos2_sigma_m
            * (-3.0 + 4.0 * sin_sigma ** 2) * (-3.0 + 4.0 * cos2_sigma_m ** 2)
        )
    )
    dist = WGS84_B * big_a * (sigma - delta_sigma)
    az = math.degrees(math.atan2(
        cos_u2 * math.sin(lam),
        cos_u1 * sin_u2 - sin_u1 * cos_u2 * math.cos(lam),
    ))
    return dist, norm360(az)


def direct(p: GeoPosition, azimuth: float, distance: float) -> GeoPosition:
    """Vincenty direct: destination after `distance` meters along `azimuth`
    degrees (from north) starting at `p`, on WGS-84."""
    if distance < 0.0:
        raise ValueError("distance must be >= 0")
    if distance == 0.0:
        return p

    alpha1 = math.radians(azimuth)
    sin_alpha1, cos_alpha1 = math.sin(alpha1), math.cos(alpha1)

    tan_u1 = (1.0 - WGS84_F) * math.tan(math.radians(p.lat))
    cos_u1 = 1.0 / math.sqrt(1.0 + tan_u1 ** 2)
    sin_u1 = tan_u1 * cos_u1
    sigma1 = math.atan2(tan_u1, cos_alpha1)
    sin_alpha = cos_u1 * sin_alpha1
    cos_sq_alpha = 1.0 - sin_alpha ** 2
    u_sq = cos_sq_alpha * (WGS84_A ** 2 - WGS84_B ** 2) / WGS84_B ** 2
    big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)))
    big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)))

    sigma = distance / (WGS84_B * big_a)
    for _ in range(_MAX_ITER):
        cos2_sigma_m = math.cos(2.0 * sigma1 + sigma)
        sin_sigma, cos_sigma = math.sin(sigma), math.cos(sigma)
        delta_sigma = big_b * sin_sigma * (
            cos2_sigma_m
            + big_b / 4.0 * (
                cos_sigma * (-1.0 + 2.0 * cos2_sigma_m ** 2)
                - big_b / 6.0 * cos2_sigma_m
                * (-3.0 + 4.0 * sin_sigma ** 2) * (-3.0 + 4.0 * cos2_sigma_m ** 2)
            )
        )
        sigma_prev = sigma
        sigma = distance / (WGS84_B * big_a) + delta_sigma
        if abs(sigma - sigma_prev) < _TOL:
            break

    sin_sigma, cos_sigma = math.sin(sigma), math.cos(sigma)
    cos2_sigma_m = math.cos(2.0 * sigma1 + sigma)
    tmp = sin_u1 * sin_sigma - cos_u1 * cos_sigma * cos_alpha1
    lat2 = math.atan2(
        sin_u1 * cos_sigma + cos_u1 * sin_sigma * cos_alpha1,
        (1.0 - WGS84_F) * math.sqrt(sin_alpha ** 2 + tmp ** 2),
    )
    lam = math.atan2(
        sin_sigma * sin_alpha1,
        cos_u1 * cos_sigma - sin_u1 * sin_sigma * cos_alpha1,
    )
    c = WGS84_F / 16.0 * cos_sq_alpha * (4.0 + WGS84_F * (4.0 - 3.0 * cos_sq_alpha))
    ll = lam - (1.0 - c) * WGS84_F * sin_alpha * (
        sigma
        + c * sin_sigma * (
            cos2_sigma_m + c * cos_sigma * (-1.0 + 2.0 * cos2_sigma_m ** 2)
        )
    )
    lon2 = math.radians(p.lon) + ll
    return GeoPosition(math.degrees(lat2), norm180(math.degrees(lon2)))


def enu_offset(origin: GeoPosition, p: GeoPosition) -> tuple[float, float]:
    """(east, north) meters of `p` relative to `origin` via Vincenty range
    and bearing.  Good to well under a meter at the scales used here."""
    dist, az = inverse(origin, p)
    rad = math.radians(az)
    return dist * math.sin(rad), dist * math.cos(rad)


def velocity_en(cog: float, sog_knots: float) -> tuple[float, float]:
    """(east, north) velocity components in m/s from course/speed."""
    v = sog_knots * KNOTS_TO_MPS
    rad = math.radians(cog)
    return v * math.sin(rad), v * math.cos(rad)
