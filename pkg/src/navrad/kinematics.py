"""Ship kinematic state shared by the simulator, the tracker and the
attack logic."""

from __future__ import annotations

from dataclasses import dataclass

from .geodesy import GeoPosition, norm360


@dataclass(frozen=True)
class KinematicState:
    position: GeoPosition
    cog: float       # course over ground, degrees [0, 360)
    sog: float       # speed over ground, knots
    heading: float   # degrees [0, 360); equals cog for the ships modeled here

    def __post_init__(self):
        object.__setattr__(self, "cog", norm360(self.cog))
        object.__setattr__(self, "heading", norm360(self.heading))
        if self.sog < 0.0:
            raise ValueError("speed must be >= 0")
