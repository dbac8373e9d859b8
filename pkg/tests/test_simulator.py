import math

import numpy as np
import pytest

from navrad import nmea
from navrad.asterix import decode, decode_header
from navrad.bus import TOPIC_ASTERIX, TOPIC_NMEA, EventLoop, InProcBus
from navrad.geodesy import NM_TO_M, GeoPosition, inverse
from navrad.simulator import (AntennaEmitter, AntennaSpec, EmissionSpec,
                              Scenario, SensorEmitter, ShipSpec, World,
                              randomized_scenario, sweep)


def ship(lat=44.0, lon=8.0, course=0.0, sog=10.0, mmsi=247000001, name="S",
         **kw) -> ShipSpec:
    return ShipSpec(name=name, mmsi=mmsi, lat=lat, lon=lon, course=course,
                    sog=sog, **kw)


def scenario(ships=(), victim=None, **kw) -> Scenario:
    return Scenario(seed=1, duration=60.0,
                    victim=victim or ship(name="VICTIM", mmsi=247000000),
                    ships=tuple(ships), **kw)


def test_step_moves_along_course():
    w = World(scenario([ship(lat=44.2, lon=8.2, course=0.0, sog=10.0)]))
    w.step(3600.0)
    moved, az = inverse(GeoPosition(44.2, 8.2), w.ships[0].state.position)
    assert moved == pytest.approx(10.0 * NM_TO_M, rel=1e-3)
    assert min(az, 360.0 - az) == pytest.approx(0.0, abs=0.5)


def test_step_zero_speed_stays_put():
    w = World(scenario([ship(sog=0.0)]))
    w.step(100.0)
    assert w.ships[0].state.position == GeoPosition(44.0, 8.0)


def test_two_half_steps_equal_one_step():
    w1 = World(scenario([ship(course=77.0, sog=8.0)]))
    w2 = World(scenario([ship(course=77.0, sog=8.0)]))
    w1.step(600.0)
    w2.step(300.0)
    w2.step(300.0)
    gap, _ = inverse(w1.ships[0].state.position, w2.ships[0].state.position)
    assert gap < 1.0


def test_step_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        World(scenario()).step(0.0)


def test_waypoint_ship_turns_toward_next():
    target = (44.0, 8.1)  # due east of the start
    w = World(scenario([ship(course=0.0, sog=10.0, waypoints=(target,))]))
    w.step(1.0)
    assert w.ships[0].state.cog == pytest.approx(90.0, abs=1.0)


def test_sweep_empty_world():
    w = World(scenario())
    msgs = sweep(w, AntennaSpec())
    assert len(msgs) == 360
    assert all(not m.cells.any() for m in msgs)


def test_sweep_covers_circle_exactly_once():
    msgs = sweep(World(scenario()), AntennaSpec())
    covered = []
    for m in msgs:
        covered.append((round(m.start_az * 65536 / 360) % 65536,
                        round(m.end_az * 65536 / 360) % 65536))
    ends = {s: e for s, e in covered}
    total = sum((e - s) % 65536 for s, e in covered)
    assert total == 65536
    assert len(ends) == 360


def test_sweep_message_ids_increase():
    msgs = sweep(World(scenario()), AntennaSpec(), first_message_id=77)
    assert [m.message_id for m in msgs] == list(range(77, 77 + 360))


def test_sweep_paints_ship_dead_ahead():
    ant = AntennaSpec()
    victim = ship(name="VICTIM", mmsi=1, lat=44.0, lon=8.0, course=0.0, sog=0.0)
    tgt_pos = GeoPosition(*_dest(44.0, 8.0, 0.0, 6.0 * NM_TO_M))
    w = World(scenario([ship(lat=tgt_pos.lat, lon=tgt_pos.lon, sog=0.0)],
                       victim=victim))
    msgs = sweep(w, ant)
    painted = [m for m in msgs if m.cells.any()]
    assert painted
    bins = sorted(round(m.start_az) % 360 for m in painted)
    assert all(b in (0, 359) for b in bins)
    hot = np.flatnonzero(painted[0].cells)
    center = hot.mean()
    assert center == pytest.approx(ant.n_cells / 2, abs=12)


def test_sweep_footprint_spans_expected_cells():
    ant = AntennaSpec()
    victim = ship(name="VICTIM", mmsi=1, sog=0.0)
    tgt_pos = GeoPosition(*_dest(44.0, 8.0, 0.0, 4.0 * NM_TO_M))
    target = ship(lat=tgt_pos.lat, lon=tgt_pos.lon, sog=0.0,
                  dim_bow=60, dim_stern=60, dim_port=15, dim_starboard=15)
    w = World(scenario([target], victim=victim))
    msgs = sweep(w, ant)
    radial = max(int(np.flatnonzero(m.cells).size) for m in msgs if m.cells.any())
    r = target.footprint_radius
    assert radial >= math.ceil(2.0 * r / ant.range_res_m)


def _dest(lat, lon, az, dist):
    from navrad.geodesy import direct
    p = direct(GeoPosition(lat, lon), az, dist)
    return p.lat, p.lon


def collect_sentences(sc: Scenario, duration: float):
    loop = EventLoop()
    bus = InProcBus(loop)
    out = bus.subscribe_stream(TOPIC_NMEA)
    SensorEmitter(World(sc), sc.emission, bus, loop).start()
    loop.run_until(duration)
    return [nmea.parse(d.payload.decode()) for d in out]


def test_victim_heading_sentence_fixture():
    sc = scenario(victim=ship(name="V", mmsi=1, course=33.2, sog=10.0))
    lines = collect_sentences(sc, 2.0)
    ths = [s for s in lines if s.type_code == "THS"]
    assert ths and nmea.serialize(ths[0], crlf=False) == "$HETHS,33.2,A*1F"


def test_no_ais_for_absent_ship():
    sc = scenario([ship(mmsi=247000111)])
    lines = collect_sentences(sc, 30.0)
    from navrad import ais
    mmsis = set()
    group = []
    for s in lines:
        if s.type_code == "VDM":
            group.append(s)
            if s.fields[0] == s.fields[1]:
                mmsis.add(ais.decode_vdm(group).mmsi)
                group = []
    assert mmsis == {247000111}


def test_ais_report_rate():
    sc = scenario([ship(mmsi=247000111)],
                  emission=EmissionSpec(ais_period_s=2.0))
    lines = collect_sentences(sc, 60.0)
    position_reports = [s for s in lines
                        if s.type_code == "VDM" and s.fields[0] == "1"]
    assert 29 <= len(position_reports) <= 31


def test_emitter_is_deterministic():
    def run():
        loop = EventLoop()
        bus = InProcBus(loop)
        seen = bus.subscribe_stream(TOPIC_ASTERIX)
        sc = randomized_scenario(11, "none")
        AntennaEmitter(World(sc), sc.antenna, bus, loop).start()
        SensorEmitter(World(sc), sc.emission, bus, loop).start()
        loop.run_until(10.0)
        return [(d.time, d.payload) for d in seen]

    assert run() == run()


def test_emitted_message_ids_strictly_increase():
    loop = EventLoop()
    bus = InProcBus(loop)
    seen = bus.subscribe_stream(TOPIC_ASTERIX)
    sc = scenario()
    AntennaEmitter(World(sc), sc.antenna, bus, loop).start()
    loop.run_until(7.6)   # a hair over three revolutions
    ids = [decode_header(d.payload).message_id for d in seen]
    assert len(ids) > 1000
    assert all(b == a + 1 for a, b in zip(ids, ids[1:]))


def test_emitter_matches_pure_sweep():
    sc = scenario([ship(lat=44.05, lon=8.0, sog=0.0)],
                  victim=ship(name="V", mmsi=2, sog=0.0))
    loop = EventLoop()
    bus = InProcBus(loop)
    seen = bus.subscribe_stream(TOPIC_ASTERIX)
    AntennaEmitter(World(sc), sc.antenna, bus, loop).start()
    loop.run_until(2.4999)
    pure = sweep(World(sc), sc.antenna)
    emitted = [decode(d.payload) for d in seen]
    assert len(emitted) == len(pure) == 360
    for a, b in zip(emitted, pure):
        assert a == b


def test_bearing_resolution_must_divide_circle():
    with pytest.raises(ValueError):
        AntennaSpec(bearing_res_deg=0.7)
    assert AntennaSpec(bearing_res_deg=1.40625).n_bins == 256


def test_randomized_scenario_shape():
    for seed in range(1, 8):
        sc = randomized_scenario(seed, "hijack")
        assert 3 <= len(sc.ships) <= 9  # 2..8 traffic ships + the overtaken one
        assert sc.ships[-1].name == "OVERTAKEN"
        assert 2.5 <= sc.ships[-1].sog <= 5.0
        assert sc.victim.sog == 10.0
        for s in sc.ships[:-1]:
            dist, brg = inverse(GeoPosition(sc.victim.lat, sc.victim.lon),
                                GeoPosition(s.lat, s.lon))
            assert 3.5 * NM_TO_M - 1 <= dist <= 5.0 * NM_TO_M + 1
            rel = (brg - sc.victim.course) % 360.0
            assert 10.0 <= min(rel, 360.0 - rel) <= 80.0
            assert 2.0 <= s.sog <= 12.0
        ghost_sc = randomized_scenario(seed, "ghost")
        for s in ghost_sc.ships:
            _, brg = inverse(GeoPosition(ghost_sc.victim.lat, ghost_sc.victim.lon),
                             GeoPosition(s.lat, s.lon))
            rel = (brg - ghost_sc.victim.course) % 360.0
            assert rel > 180.0  # everything on the port side
