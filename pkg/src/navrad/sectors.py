"""Annulus sectors on the radar's polar grid, and the bounding-sector
search used to delimit a target's footprint on the image.

An annulus sector <a_min, a_max, d_min, d_max> is an angular interval
(interpreted modulo 360; a_min may exceed a_max when the sector wraps
through north) times a radial band in meters.  `find_sector` bounds a
target of known bearing/range/bbox with such a sector, approximating the
target by the circle inscribing its bounding box so its orientation can
be ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geodesy import norm360

AZ_COUNTS = 65536  # wire azimuth resolution (counts per 360 degrees)


@dataclass(frozen=True)
class AnnulusSector:
    a_min: float  # degrees [0, 360)
    a_max: float  # degrees [0, 360]; 360 only for the full circle
    d_min: float  # meters >= 0
    d_max: float  # meters > d_min, math.inf = unbounded

    @property
    def full_circle(self) -> bool:
        return self.a_min == 0.0 and self.a_max == 360.0

    def angular_width(self) -> float:
        if self.full_circle:
            return 360.0
        return norm360(self.a_max - self.a_min)

    def contains_angle(self, a: float) -> bool:
        if self.full_circle:
            return True
        return norm360(a - self.a_min) <= self.angular_width()

    def contains_span(self, start_az: float, end_az: float) -> bool:
        """True when the whole [start_az, end_az] arc lies inside the
        sector (wrap-aware)."""
        if self.full_circle:
            return True
        w = self.angular_width()
        s = norm360(start_az - self.a_min)
        e = norm360(end_az - self.a_min)
        return s <= e <= w

    def overlaps_span(self, start_az: float, end_az: float) -> bool:
        """True when the [start_az, end_az) arc intersects the sector."""
        if self.full_circle:
            return True
        w = self.angular_width()
        s = norm360(start_az - self.a_min)
        e = norm360(end_az - self.a_min)
        if s < e:
            return s < w
        return True  # arc wraps across a_min, so it enters the sector

    def contains_range(self, rho_min: float, rho_max: float) -> bool:
        return rho_min >= self.d_min and rho_max <= self.d_max

    def overlaps_range(self, rho_min: float, rho_max: float) -> bool:
        return rho_max > self.d_min and rho_min < self.d_max


FULL_SECTOR = AnnulusSector(0.0, 360.0, 0.0, math.inf)


def find_sector(rho: float, theta: float, w: float, h: float,
                sm_pct: float = 0.0) -> AnnulusSector:
    """Bound a target on the polar image.

    rho:    distance to the target's bbox center, meters (0 selects the
            whole image)
    theta:  bearing of the target, degrees [0, 360)
    w, h:   bbox width/height, meters
    sm_pct: size margin applied to the bounding circle, as a fraction

    The bounding circle has radius r = sqrt(w^2 + h^2) / 2, grown by
    sm_pct; the angular half-span is atan2(r*, rho) and the radial band
    is [max(0, rho - r*), rho + r*].
    """
    if rho < 0.0 or sm_pct < 0.0:
        raise ValueError("rho and sm_pct must be >= 0")
    if rho == 0.0:
        return FULL_SECTOR
    if w <= 0.0 or h <= 0.0:
        raise ValueError("bbox extents must be > 0")
    r = math.sqrt(w * w + h * h) / 2.0
    r_star = r * (1.0 + sm_pct)
    phi = math.degrees(math.atan2(r_star, rho))
    return AnnulusSector(
        a_min=norm360(theta - phi),
        a_max=norm360(theta + phi),
        d_min=max(0.0, rho - r_star),
        d_max=rho + r_star,
    )


def az_to_counts(az_deg: float) -> int:
    return round(az_deg * AZ_COUNTS / 360.0) % AZ_COUNTS


_EDGE_CACHE: dict[int, list[int]] = {}


def _edges(n_bins: int) -> list[int]:
    edges = _EDGE_CACHE.get(n_bins)
    if edges is None:
        edges = [round(i * AZ_COUNTS / n_bins) for i in range(n_bins + 1)]
        _EDGE_CACHE[n_bins] = edges
    return edges


def bin_edge(i: int, n_bins: int) -> int:
    """Wire-count edge of display bin i (bins tile the 2^16 circle)."""
    return _edges(n_bins)[i]


def bins_for_span(start_az: float, end_az: float, n_bins: int) -> list[int]:
    """Display bins intersected by a message's azimuth arc.

    start == end encodes a full-circle message and returns every bin.
    """
    s = az_to_counts(start_az)
    e = az_to_counts(end_az)
    if s == e:
        return list(range(n_bins))
    edges = _edges(n_bins)
    arcs = [(s, e)] if s < e else [(s, AZ_COUNTS), (0, e)]
    out: list[int] = []
    for lo, hi in arcs:
        if lo >= hi:
            continue
        i = min(lo * n_bins // AZ_COUNTS, n_bins - 1)
        while i > 0 and edges[i] > lo:
            i -= 1
        while edges[i + 1] <= lo:
            i += 1
        while i < n_bins and edges[i] < hi:
            out.append(i)
            i += 1
    return out
