"""Deterministic scenario engine: moves ships, synthesizes one CAT-240
message per bearing step of the rotating antenna, and emits the victim's
sensor sentences plus AIS reports for every other ship.

Everything is seeded.  Driven over the in-process bus the produced traffic
is byte-identical across runs; driven over UDP it is the same bytes on a
real multicast group.

Echo painting
-------------
A ship paints the cells its bounding circle covers.  Cell strengths are
coverage-weighted (the beam/cell overlap is integrated with a few angular
subsamples per bin and fractional radial edges), so an echo's intensity
centroid moves smoothly between bearing bins instead of snapping -- the
tracker needs that sub-bin information to estimate courses worth
reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import asterix
from .asterix import VideoMessage
from .bus import TOPIC_ASTERIX, TOPIC_NMEA, EventLoop
from .geodesy import (KNOTS_TO_MPS, NM_TO_M, GeoPosition, direct, enu_offset,
                      inverse, norm360, velocity_en)
from .kinematics import KinematicState
from . import ais, nmea

PAINT_SUBSAMPLES = 5  # angular subsamples per bin when painting


@dataclass(frozen=True)
class ShipSpec:
    name: str
    mmsi: int
    lat: float
    lon: float
    course: float          # degrees
    sog: float             # knots
    dim_bow: int = 60      # meters; bbox h = bow + stern, w = port + starboard
    dim_stern: int = 60
    dim_port: int = 15
    dim_starboard: int = 15
    waypoints: tuple[tuple[float, float], ...] = ()  # optional (lat, lon) route

    @property
    def bbox(self) -> tuple[float, float]:
        return (self.dim_port + self.dim_starboard,
                self.dim_bow + self.dim_stern)

    @property
    def footprint_radius(self) -> float:
        w, h = self.bbox
        return math.hypot(w, h) / 2.0


@dataclass(frozen=True)
class AntennaSpec:
    rotation_period: float = 2.5       # s per revolution
    bearing_res_deg: float = 1.0       # must divide 360 into whole steps
    range_res_m: float = 5.42578125    # radial cell width
    range_scale_nm: float = 12.0
    cell_res: int = 16                 # bits per cell
    sac: int = 1
    sic: int = 1
    source: str = "10.77.0.1:8600"

    def __post_init__(self):
        if abs(360.0 / self.bearing_res_deg - round(360.0 / self.bearing_res_deg)) > 1e-9:
            raise ValueError("bearing resolution must divide 360")

    @property
    def n_bins(self) -> int:
        return round(360.0 / self.bearing_res_deg)

    @property
    def max_range_m(self) -> float:
        return self.range_scale_nm * NM_TO_M

    @property
    def cell_dur(self) -> float:
        return round(2.0 * self.range_res_m / asterix.SPEED_OF_LIGHT * 1e15) / 1e15

    @property
    def cell_width(self) -> float:
        return asterix.cell_width_m(self.cell_dur)

    @property
    def n_cells(self) -> int:
        return int(math.ceil(self.max_range_m / self.cell_width))

    @property
    def msg_interval(self) -> float:
        return self.rotation_period / self.n_bins


@dataclass(frozen=True)
class EmissionSpec:
    position_hz: float = 1.0     # GGA rate; THS/VHW ride the same tick
    ais_period_s: float = 6.0    # position report period per ship
    static_every: int = 6        # static data every N position reports
    nmea_source: str = "10.77.0.2:10110"


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration: float              # seconds of simulated time
    victim: ShipSpec
    ships: tuple[ShipSpec, ...]
    antenna: AntennaSpec = AntennaSpec()
    emission: EmissionSpec = EmissionSpec()

    def __post_init__(self):
        if self.victim.sog < 0 or any(s.sog < 0 for s in self.ships):
            raise ValueError("speeds must be >= 0")

    def antenna_id(self) -> asterix.AntennaId:
        return asterix.AntennaId(self.antenna.sac, self.antenna.sic,
                                 self.antenna.source)


class Ship:
    """Mutable ship: anchored kinematic state plus exact extrapolation."""

    def __init__(self, spec: ShipSpec):
        self.spec = spec
        self.state = KinematicState(GeoPosition(spec.lat, spec.lon),
                                    spec.course, spec.sog, spec.course)
        self.t_anchor = 0.0
        self._wp_index = 0

    def position_at(self, t: float) -> GeoPosition:
        dist = self.state.sog * KNOTS_TO_MPS * (t - self.t_anchor)
        if dist == 0.0:
            return self.state.position
        return direct(self.state.position, self.state.cog, dist)

    def step_to(self, t: float) -> None:
        if t == self.t_anchor:
            return
        pos = self.position_at(t)
        course = self.state.cog
        if self._wp_index < len(self.spec.waypoints):
            wp = self.spec.waypoints[self._wp_index]
            target = GeoPosition(*wp)
            dist, brg = inverse(pos, target)
            if dist < 50.0:
                self._wp_index += 1
            else:
                course = brg
        self.state = KinematicState(pos, course, self.state.sog, course)
        self.t_anchor = t


class World:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.t = 0.0
        self.victim = Ship(scenario.victim)
        self.ships = [Ship(s) for s in scenario.ships]

    def step(self, dt: float) -> None:
        if dt <= 0.0:
            raise ValueError("dt must be > 0")
        self.t += dt
        self.victim.step_to(self.t)
        for s in self.ships:
            s.step_to(self.t)


# --------------------------------------------------------------------------
# sweep synthesis
# --------------------------------------------------------------------------

def _paint_map(world: World, ant: AntennaSpec, t0: float) -> dict[int, list[tuple[int, np.ndarray]]]:
    """Per-bin paint instructions for the revolution starting at t0:
    bin -> list of (first cell index, strengths)."""
    n_bins = ant.n_bins
    bin_w = 360.0 / n_bins
    cw = ant.cell_width
    maxv = (1 << ant.cell_res) - 1
    victim = world.victim
    v_pos0 = victim.position_at(t0)
    v_vel = np.array(velocity_en(victim.state.cog, victim.state.sog))
    heading = victim.state.heading

    paints: dict[int, list[tuple[int, np.ndarray]]] = {}
    for ship in world.ships:
        rel0 = np.array(enu_offset(v_pos0, ship.position_at(t0)))
        s_vel = np.array(velocity_en(ship.state.cog, ship.state.sog))
        theta_rel = norm360(math.degrees(math.atan2(rel0[0], rel0[1])) - heading)
        t_beam = t0 + theta_rel / 360.0 * ant.rotation_period
        rel = rel0 + (s_vel - v_vel) * (t_beam - t0)
        rho = float(np.hypot(*rel))
        r = ship.spec.footprint_radius
        if rho - r >= ant.max_range_m or rho <= r:
            continue
        theta = norm360(math.degrees(math.atan2(rel[0], rel[1])) - heading)
        phi = math.degrees(math.atan2(r, rho))
        b_lo = int(math.floor((theta - phi) / bin_w))
        b_hi = int(math.floor((theta + phi) / bin_w))
        for bb in range(b_lo, b_hi + 1):
            b = bb % n_bins
            # integrate beam/footprint coverage across the bin's angular width
            acc: dict[int, float] = {}
            for s in range(PAINT_SUBSAMPLES):
                psi = (bb + (s + 0.5) / PAINT_SUBSAMPLES) * bin_w
                x = rho * math.sin(math.radians(psi - theta))
                if abs(x) >= r:
                    continue
                e = math.sqrt(r * r - x * x)
                mid = rho * math.cos(math.radians(psi - theta))
                lo = max((mid - e) / cw, 0.0)
                hi = min((mid + e) / cw, ant.n_cells * 1.0)
                if hi <= lo:
                    continue
                i_lo, i_hi = int(lo), int(math.ceil(hi))
                for i in range(i_lo, i_hi):
                    cover = min(hi, i + 1) - max(lo, i)
                    if cover > 0:
                        acc[i] = acc.get(i, 0.0) + cover / PAINT_SUBSAMPLES
            if not acc:
                continue
            i_min, i_max = min(acc), max(acc)
            strengths = np.zeros(i_max - i_min + 1, np.uint32)
            for i, frac in acc.items():
                strengths[i - i_min] = min(maxv, int(round(frac * maxv)))
            entry = (i_min, strengths.astype(_dtype(ant.cell_res)))
            paints.setdefault(b, []).append(entry)
    return paints


def _dtype(cell_res: int):
    return np.uint8 if cell_res <= 8 else (np.uint16 if cell_res == 16 else np.uint32)


def sweep(world: World, ant: AntennaSpec, first_message_id: int = 0,
          t0: float | None = None) -> list[VideoMessage]:
    """One full revolution of video messages (pure; does not publish)."""
    t0 = world.t if t0 is None else t0
    paints = _paint_map(world, ant, t0)
    msgs = []
    bin_w = 360.0 / ant.n_bins
    for b in range(ant.n_bins):
        cells = np.zeros(ant.n_cells, _dtype(ant.cell_res))
        for i0, strengths in paints.get(b, ()):
            seg = cells[i0:i0 + strengths.size]
            np.maximum(seg, strengths[:seg.size], out=seg)
        t_msg = t0 + b * ant.msg_interval
        msgs.append(VideoMessage(
            sac=ant.sac, sic=ant.sic,
            message_id=(first_message_id + b) % (1 << 24),
            time_of_day=t_msg % 86400.0,
            start_az=norm360(b * bin_w), end_az=norm360((b + 1) * bin_w),
            center_bias=0, cell_dur=ant.cell_dur, cell_res=ant.cell_res,
            cells=cells,
        ).quantized())
    return msgs


class AntennaEmitter:
    """Publishes the antenna's sweep over a bus, one message per bearing
    step, advancing the world one revolution at a time."""

    def __init__(self, world: World, ant: AntennaSpec, bus, loop: EventLoop):
        self.world = world
        self.ant = ant
        self.bus = bus
        self.loop = loop
        self.message_id = 0
        self._templates = self._build_templates()
        self._paints: dict[int, list[tuple[int, np.ndarray]]] = {}

    def _build_templates(self) -> list[bytes]:
        """Pre-encoded all-zero message per bin; only MSG_INDEX and the
        time of day get patched per revolution."""
        ant = self.ant
        bin_w = 360.0 / ant.n_bins
        out = []
        zero = np.zeros(ant.n_cells, _dtype(ant.cell_res))
        for b in range(ant.n_bins):
            msg = VideoMessage(
                sac=ant.sac, sic=ant.sic, message_id=0, time_of_day=0.0,
                start_az=norm360(b * bin_w), end_az=norm360((b + 1) * bin_w),
                center_bias=0, cell_dur=ant.cell_dur, cell_res=ant.cell_res,
                cells=zero,
            ).quantized()
            out.append(asterix.encode(msg))
        return out

    def start(self) -> None:
        self.loop.call_at(0.0, self._begin_revolution)

    def _begin_revolution(self) -> None:
        t0 = self.loop.now
        self.world.victim.step_to(t0)
        for s in self.world.ships:
            s.step_to(t0)
        self.world.t = t0
        self._paints = _paint_map(self.world, self.ant, t0)
        self._emit_bin(0, t0)

    def _emit_bin(self, b: int, t0: float) -> None:
        ant = self.ant
        paint = self._paints.get(b)
        mid = self.message_id
        self.message_id = (self.message_id + 1) % (1 << 24)
        tod = round((self.loop.now % 86400.0) / asterix.TOD_LSB) % (86400 * 128)
        if paint is None:
            rec = bytearray(self._templates[b])
            rec[asterix.OFF_MSG_INDEX:asterix.OFF_MSG_INDEX + 3] = mid.to_bytes(3, "big")
            rec[-3:] = tod.to_bytes(3, "big")
            payload = bytes(rec)
        else:
            cells = np.zeros(ant.n_cells, _dtype(ant.cell_res))
            for i0, strengths in paint:
                seg = cells[i0:i0 + strengths.size]
                np.maximum(seg, strengths[:seg.size], out=seg)
            bin_w = 360.0 / ant.n_bins
            payload = asterix.encode(VideoMessage(
                sac=ant.sac, sic=ant.sic, message_id=mid,
                time_of_day=(tod * asterix.TOD_LSB) % 86400.0,
                start_az=norm360(b * bin_w), end_az=norm360((b + 1) * bin_w),
                center_bias=0, cell_dur=ant.cell_dur, cell_res=ant.cell_res,
                cells=cells,
            ).quantized())
        self.bus.publish(TOPIC_ASTERIX, payload, self.ant.source)
        if b + 1 < ant.n_bins:
            self.loop.call_at(t0 + (b + 1) * ant.msg_interval,
                              self._emit_bin, b + 1, t0)
        else:
            self.loop.call_at(t0 + ant.rotation_period, self._begin_revolution)


class SensorEmitter:
    """Victim EPFS/heading/log sentences plus AIS reports for every other
    ship, at the configured rates."""

    def __init__(self, world: World, em: EmissionSpec, bus, loop: EventLoop):
        self.world = world
        self.em = em
        self.bus = bus
        self.loop = loop
        self._ais_counts: dict[int, int] = {}

    def start(self) -> None:
        self.loop.call_at(0.0, self._own_tick)
        for i, ship in enumerate(self.world.ships):
            # stagger the AIS slots like independent transponders
            self.loop.call_at(0.05 + 0.11 * i, self._ais_tick, ship)

    def _publish(self, sentence: nmea.Sentence) -> None:
        self.bus.publish(TOPIC_NMEA, nmea.serialize(sentence).encode("ascii"),
                         self.em.nmea_source)

    def _own_tick(self) -> None:
        t = self.loop.now
        v = self.world.victim
        pos = v.position_at(t)
        self._publish(nmea.build_gga(pos.lat, pos.lon, t % 86400.0))
        self._publish(nmea.build_ths(v.state.heading))
        self._publish(nmea.build_vhw(v.state.heading, v.state.sog))
        self.loop.call_after(1.0 / self.em.position_hz, self._own_tick)

    def _ais_tick(self, ship: Ship) -> None:
        t = self.loop.now
        pos = ship.position_at(t)
        report = ais.AisPositionReport(
            mmsi=ship.spec.mmsi, lat=pos.lat, lon=pos.lon,
            sog=ship.state.sog, cog=ship.state.cog,
            heading=ship.state.heading, timestamp_s=int(t) % 60,
        )
        for s in ais.encode_vdm(report):
            self._publish(s)
        count = self._ais_counts.get(ship.spec.mmsi, 0)
        if count % self.em.static_every == 0:
            static = ais.AisStaticData(
                mmsi=ship.spec.mmsi, name=ship.spec.name,
                dim_bow=ship.spec.dim_bow, dim_stern=ship.spec.dim_stern,
                dim_port=ship.spec.dim_port, dim_starboard=ship.spec.dim_starboard,
            )
            for s in ais.encode_vdm(static):
                self._publish(s)
        self._ais_counts[ship.spec.mmsi] = count + 1
        self.loop.call_after(self.em.ais_period_s, self._ais_tick, ship)


# --------------------------------------------------------------------------
# randomized scenarios
# --------------------------------------------------------------------------

VICTIM_START = GeoPosition(44.05, 8.60)  # open water off a busy coastline


def randomized_scenario(seed: int, attack_kind: str = "none",
                        duration: float = 120.0,
                        antenna: AntennaSpec = AntennaSpec(),
                        emission: EmissionSpec = EmissionSpec()) -> Scenario:
    """Seeded multi-ship encounter: 2..8 ships, 3.5..5 NM off the victim's
    bow at +/-10..80 degrees, 2..12 knots, victim steady at 10 knots.

    Ghost-attack scenarios place the random traffic on the port side
    (the attack fires only with a clear starboard bow); hijack scenarios
    add a slow ship dead ahead to overtake.
    """
    import random
    rng = random.Random(f"navrad-scenario:{seed}")
    victim = ShipSpec(name="VICTIM", mmsi=247_000_000, lat=VICTIM_START.lat,
                      lon=VICTIM_START.lon, course=0.0, sog=10.0)
    ships = []
    n = rng.randint(2, 8)
    for i in range(n):
        dist = rng.uniform(3.5, 5.0) * NM_TO_M
        brg = rng.uniform(10.0, 80.0)
        if attack_kind == "ghost":
            brg = -brg
        elif rng.random() < 0.5:
            brg = -brg
        pos = direct(VICTIM_START, norm360(victim.course + brg), dist)
        course = norm360(victim.course + rng.uniform(-30.0, 30.0))
        ships.append(ShipSpec(
            name=f"TRAFFIC{i + 1}", mmsi=247_100_001 + i,
            lat=pos.lat, lon=pos.lon, course=course,
            sog=rng.uniform(2.0, 12.0),
        ))
    if attack_kind == "hijack":
        dist = rng.uniform(3.5, 4.5) * NM_TO_M
        brg = rng.uniform(-8.0, 8.0)
        pos = direct(VICTIM_START, norm360(victim.course + brg), dist)
        ships.append(ShipSpec(
            name="OVERTAKEN", mmsi=247_200_001,
            lat=pos.lat, lon=pos.lon,
            course=norm360(victim.course + rng.uniform(-5.0, 5.0)),
            sog=rng.uniform(2.5, 5.0),
        ))
    return Scenario(seed=seed, duration=duration, victim=victim,
                    ships=tuple(ships), antenna=antenna, emission=emission)
