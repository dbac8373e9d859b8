"""Experiment orchestration: wire simulator, optional attack engine, the
radar console (PPI + ARPA) and the optional detector over a bus, run the
scenario, and distill a report.

Reports are pure functions of (scenario seed, configuration) when run over
the in-process bus: repeated runs serialize byte-identically.  Wall-clock
and allocation figures are only included on request, outside the
deterministic payload.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

from . import asterix, nmea
from .arpa import ArpaConfig, Tracker
from .attack import AttackConfig, AttackEngine
from .bus import (TOPIC_ASTERIX, TOPIC_NMEA, CaptureWriter, EventLoop,
                  InProcBus)
from .detect import AnomalySink, DetectionParams, DetectionPipeline
from .geodesy import KNOTS_TO_MPS, GeoPosition, enu_offset
from .kinematics import KinematicState
from .ppi import PpiImage, render
from .simulator import (AntennaEmitter, Scenario, SensorEmitter, World,
                        randomized_scenario)

TTM_SOURCE = "10.77.0.3:10110"

# attack-window lengths mirroring the evaluation protocol
ATTACK_WINDOWS = {"dos": 60.0, "ghost": 120.0, "hijack": 600.0, "none": 60.0}


@dataclass(frozen=True)
class RunConfig:
    attack: AttackConfig = AttackConfig()
    detect: bool = True
    quirk_replace: bool = True
    attack_window: float | None = None   # defaults per attack kind
    frames_every: int | None = None      # render every N revolutions
    out_dir: str | None = None
    anomaly_log: str | None = None
    capture_path: str | None = None
    perf: bool = False
    arpa: ArpaConfig = ArpaConfig()
    detection_params: DetectionParams = DetectionParams()


class RadarConsole:
    """PPI display plus ARPA tracker fed from the bus; publishes TTMs."""

    def __init__(self, scenario: Scenario, bus, loop: EventLoop,
                 arpa_cfg: ArpaConfig, quirk_replace: bool):
        ant = scenario.antenna
        self.ppi = PpiImage(
            n_bins=ant.n_bins, rotation_period=ant.rotation_period,
            max_range_m=ant.max_range_m, quirk_replace=quirk_replace,
        )
        self.tracker = Tracker(arpa_cfg, GeoPosition(scenario.victim.lat,
                                                     scenario.victim.lon))
        self.bus = bus
        self.loop = loop
        self.rotation_period = ant.rotation_period
        self.scan_index = 0
        self.own = KinematicState(
            GeoPosition(scenario.victim.lat, scenario.victim.lon),
            scenario.victim.course, scenario.victim.sog, scenario.victim.course)
        self.on_scan = []   # callbacks (t, console, ttms)

    def attach(self) -> None:
        self.bus.subscribe(TOPIC_ASTERIX, self._on_asterix)
        self.bus.subscribe(TOPIC_NMEA, self._on_nmea)
        self.loop.call_at(self.rotation_period, self._scan)

    def _on_asterix(self, d) -> None:
        try:
            msg = asterix.decode(d.payload)
        except asterix.DecodeError:
            return
        self.ppi.apply(msg, d.time)

    def _on_nmea(self, d) -> None:
        try:
            s = nmea.parse(d.payload.decode("ascii"))
        except (UnicodeDecodeError, nmea.NmeaError):
            return
        try:
            if s.type_code == "GGA":
                lat, lon = nmea.parse_gga(s)
                self.own = KinematicState(GeoPosition(lat, lon), self.own.cog,
                                          self.own.sog, self.own.heading)
            elif s.type_code == "THS":
                h = nmea.parse_ths(s)
                self.own = KinematicState(self.own.position, h, self.own.sog, h)
            elif s.type_code == "VHW":
                _, sog = nmea.parse_vhw(s)
                self.own = KinematicState(self.own.position, self.own.cog,
                                          sog, self.own.heading)
        except nmea.NmeaError:
            pass

    def _scan(self) -> None:
        t = self.loop.now
        self.scan_index += 1
        ttms = self.tracker.scan(self.ppi, self.own, t, self.scan_index)
        for ttm in ttms:
            line = nmea.serialize(nmea.build_ttm(ttm, time_s=t % 86400.0))
            self.bus.publish(TOPIC_NMEA, line.encode("ascii"), TTM_SOURCE)
        self.ppi.revolution_tick()
        for cb in self.on_scan:
            cb(t, self, ttms)
        self.loop.call_at(t + self.rotation_period, self._scan)


def _series_stats(values) -> dict:
    if not values:
        return {"n": 0}
    return {
        "n": len(values),
        "mean": round(sum(values) / len(values), 6),
        "max": round(max(values), 6),
        "min": round(min(values), 6),
    }


def run_experiment(scenario: Scenario, cfg: RunConfig,
                   udp_mirror=None) -> dict:
    """Run one scenario end to end on the in-process bus; returns the report.

    With `udp_mirror` set to an open UdpMulticastBus, every delivery is also
    published onto the real multicast groups for external listeners."""
    if cfg.perf:
        import time as _time
        import tracemalloc
        tracemalloc.start()
        wall0 = _time.perf_counter()

    for path in (cfg.out_dir, cfg.anomaly_log, cfg.capture_path):
        if path:
            parent = path if path is cfg.out_dir else os.path.dirname(path)
            if parent:
                os.makedirs(parent, exist_ok=True)

    loop = EventLoop()
    bus = InProcBus(loop)
    if udp_mirror is not None:
        for topic in (TOPIC_ASTERIX, TOPIC_NMEA):
            bus.subscribe(topic, lambda d, _t=topic: udp_mirror.publish(_t, d.payload))
    world = World(scenario)
    antenna = AntennaEmitter(world, scenario.antenna, bus, loop)
    sensors = SensorEmitter(world, scenario.emission, bus, loop)
    console = RadarConsole(scenario, bus, loop, cfg.arpa, cfg.quirk_replace)
    if cfg.frames_every:
        console.ppi.trails_enabled = True

    import random
    attacker = None
    if cfg.attack.kind != "none":
        rng = random.Random(f"navrad-attack:{scenario.seed}:{cfg.attack.kind}")
        attacker = AttackEngine(cfg.attack, bus, loop, rng,
                                spoof_source=scenario.antenna.source)
        attacker.attach()

    detector = None
    sink = None
    if cfg.detect:
        sink = AnomalySink(cfg.anomaly_log)
        detector = DetectionPipeline([scenario.antenna_id()], sink,
                                     cfg.detection_params)
        detector.attach(bus)

    capture = None
    if cfg.capture_path:
        capture = CaptureWriter(cfg.capture_path)
        capture.attach(bus)

    # ---- recording ---------------------------------------------------------
    window_start = cfg.attack.start_time
    window = cfg.attack_window if cfg.attack_window is not None \
        else ATTACK_WINDOWS.get(cfg.attack.kind, 60.0)
    window_end = window_start + window

    asterix_seen: list[tuple[float, int]] = []   # (delivery time, size)
    bus.subscribe(TOPIC_ASTERIX, lambda d: asterix_seen.append((d.time, len(d.payload))))

    ttm_log: list[tuple[float, object]] = []

    def _nmea_tap(d):
        if d.source != TTM_SOURCE:
            return
        try:
            s = nmea.parse(d.payload.decode("ascii"))
            if s.type_code == "TTM":
                ttm_log.append((d.time, nmea.parse_ttm(s)))
        except (UnicodeDecodeError, nmea.NmeaError):
            pass

    bus.subscribe(TOPIC_NMEA, _nmea_tap)

    fake_series: list[dict] = []   # per-scan fake-ship truth vs nearest track
    frame_hashes: list[str] = []

    origin = GeoPosition(scenario.victim.lat, scenario.victim.lon)

    def _on_scan(t, cons: RadarConsole, ttms) -> None:
        if attacker is not None and attacker.ghost is not None:
            gpos = enu_offset(origin, attacker.ghost.pos)
            best, best_d = None, 400.0
            for trk in cons.tracker.tracks.values():
                d2 = math.hypot(trk.pos[0] - gpos[0], trk.pos[1] - gpos[1])
                if d2 < best_d and trk.status in ("tracked", "dangerous"):
                    best, best_d = trk, d2
            if best is not None:
                v = best.lsq_velocity()
                speed_kn = float(math.hypot(v[0], v[1])) / KNOTS_TO_MPS
                course = float(math.degrees(math.atan2(v[0], v[1]))) % 360.0
                fake_series.append({
                    "t": t, "track": best.tid, "status": best.status,
                    "course": course, "speed": speed_kn,
                    "dcpa_nm": float(best.dcpa_m) / 1852.0,
                    "tcpa_min": None if not math.isfinite(best.tcpa_s)
                                else float(best.tcpa_s) / 60.0,
                    "truth_cog": attacker.ghost.cog,
                    "truth_sog": attacker.ghost.sog,
                })
        if cfg.frames_every and cons.scan_index % cfg.frames_every == 0:
            # the hash covers the bare display: anomaly wedges are the
            # observer's annotation, not radar content
            frame = render(cons.ppi, trails=True, heading=cons.own.heading)
            frame_hashes.append(hashlib.sha256(frame).hexdigest())
            if cfg.out_dir:
                overlays = ()
                if sink is not None:
                    overlays = tuple(a.sector for a in sink.records[-8:]
                                     if a.sector is not None and t - a.time < 5.0)
                if overlays:
                    frame = render(cons.ppi, trails=True,
                                   heading=cons.own.heading, overlays=overlays)
                name = os.path.join(cfg.out_dir, f"frame_{cons.scan_index:05d}.ppm")
                with open(name, "wb") as fh:
                    fh.write(frame)

    console.on_scan.append(_on_scan)

    # ---- run ----------------------------------------------------------------
    antenna.start()
    sensors.start()
    console.attach()
    sim_end = window_end + scenario.antenna.rotation_period * 2
    loop.run_until(sim_end)

    # ---- classify traffic ----------------------------------------------------
    injected_times = set()
    attack_bytes = 0
    eps_values = []
    if attacker is not None:
        for inj in attacker.injections:
            if inj.topic == TOPIC_ASTERIX and window_start <= inj.t_delivery <= window_end:
                injected_times.add(inj.t_delivery)
                attack_bytes += len(inj.payload)
                eps_values.append(inj.eps)

    legit_count = attack_count = legit_bytes = 0
    for t, size in asterix_seen:
        if not window_start <= t <= window_end:
            continue
        if t in injected_times:
            attack_count += 1
        else:
            legit_count += 1
            legit_bytes += size

    # ---- detection outcome -----------------------------------------------------
    detection = None
    if detector is not None:
        flagged_attack: dict[str, set] = {}
        flagged_legit: dict[str, set] = {}
        tp_times, fp_times = set(), set()
        for a in sink.records:
            if not window_start <= a.time <= window_end:
                continue
            if a.time in injected_times:
                flagged_attack.setdefault(a.policy_id, set()).add(a.time)
                tp_times.add(a.time)
            else:
                flagged_legit.setdefault(a.policy_id, set()).add(a.time)
                fp_times.add(a.time)
        per_policy = {}
        for pid in ("P1", "P2", "P3", "P4", "P5", "P6", "source", "decode"):
            hits = len(flagged_attack.get(pid, ()))
            per_policy[pid] = {
                "attack_hits": hits,
                "attack_pct": round(100.0 * hits / attack_count, 4) if attack_count else 0.0,
                "legit_hits": len(flagged_legit.get(pid, ())),
            }
        detection = {
            "tp": len(tp_times),
            "fn": attack_count - len(tp_times),
            "fp": len(fp_times),
            "tp_rate": round(len(tp_times) / attack_count, 6) if attack_count else None,
            "fp_rate": round(len(fp_times) / legit_count, 6) if legit_count else 0.0,
            "per_policy": per_policy,
            "active_policies": sorted(p.policy_id for p in detector.engine.active),
        }

    # ---- per-target series ------------------------------------------------------
    ttm_series: dict[int, list] = {}
    for t, ttm in ttm_log:
        ttm_series.setdefault(ttm.target_id, []).append({
            "t": round(t, 3), "distance_nm": round(ttm.distance, 4),
            "bearing": round(ttm.bearing, 2), "speed": round(ttm.speed, 3),
            "course": round(ttm.course, 2), "dcpa_nm": round(ttm.dcpa, 4),
            "tcpa_min": None if ttm.tcpa is None else round(ttm.tcpa, 4),
            "status": ttm.status,
        })

    course_errors = []
    speed_errors = []
    for row in fake_series:
        if window_start <= row["t"] <= window_end:
            err = abs((row["course"] - row["truth_cog"] + 180.0) % 360.0 - 180.0)
            course_errors.append(err)
            speed_errors.append(abs(row["speed"] - row["truth_sog"]))

    success, success_detail = _attack_success(cfg.attack.kind, ttm_series,
                                              fake_series, attacker,
                                              window_start, window_end)

    report = {
        "scenario": {"seed": scenario.seed, "ships": len(scenario.ships),
                     "attack": cfg.attack.kind, "quirk": cfg.quirk_replace,
                     "window": [window_start, window_end]},
        "packets": {
            "legit": legit_count, "attack": attack_count,
            "legit_bytes": legit_bytes, "attack_bytes": attack_bytes,
            "attack_traffic_ratio": round(attack_bytes / (attack_bytes + legit_bytes), 8)
                                    if legit_bytes else 0.0,
        },
        "injection_latency_s": _series_stats(eps_values),
        "eps_budget_ok": all(e <= cfg.attack.eps_budget for e in eps_values),
        "detection": detection,
        "attack_events": [] if attacker is None else
                         [[round(t, 3), e] for t, e in attacker.events],
        "delete_capability": None if attacker is None else attacker.db.delete_capability,
        "fake_track": {
            "course_error": _series_stats(course_errors),
            "speed_error": _series_stats(speed_errors),
            "course_within_1deg": round(
                sum(1 for e in course_errors if e <= 1.0) / len(course_errors), 4)
                if course_errors else None,
            "series": fake_series if cfg.attack.kind in ("ghost", "hijack") else [],
        },
        "ttm_series": ttm_series,
        "frame_hashes": frame_hashes,
        "success": success,
        "success_detail": success_detail,
    }

    if cfg.perf:
        import time as _time
        import tracemalloc
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        report["perf"] = {"wall_s": round(_time.perf_counter() - wall0, 3),
                          "py_alloc_peak_bytes": peak}

    if sink is not None:
        sink.close()
    if capture is not None:
        capture.close()
    return report


def _attack_success(kind: str, ttm_series: dict, fake_series: list,
                    attacker, w0: float, w1: float) -> tuple[bool | None, dict]:
    if kind == "none" or attacker is None:
        return None, {}
    if kind == "dos":
        lost = False
        nonphysical = False
        for rows in ttm_series.values():
            prev = None
            for row in rows:
                if not w0 <= row["t"] <= w1:
                    prev = row
                    continue
                if row["status"] == "lost":
                    lost = True
                speed_mps = row["speed"] * KNOTS_TO_MPS
                if speed_mps >= 100.0:
                    nonphysical = True
                if prev is not None and row["t"] > prev["t"]:
                    accel = abs(speed_mps - prev["speed"] * KNOTS_TO_MPS) / (row["t"] - prev["t"])
                    if accel >= 10.0:
                        nonphysical = True
                prev = row
        return lost or nonphysical, {"track_lost": lost, "nonphysical": nonphysical}

    rows = [r for r in fake_series if w0 <= r["t"] <= w1]
    if kind == "ghost":
        tcpa = [r["tcpa_min"] for r in rows if r["tcpa_min"] is not None]
        dangerous = any(r["status"] == "dangerous" for r in rows)
        decreasing = len(tcpa) >= 2 and all(
            b < a + 0.25 for a, b in zip(tcpa, tcpa[1:]))
        below = bool(tcpa) and min(tcpa) < 15.0
        started_above = bool(tcpa) and tcpa[0] > 15.0
        ok = dangerous and decreasing and below and started_above
        return ok, {"acquired": bool(rows), "dangerous": dangerous,
                    "tcpa_decreasing": decreasing, "tcpa_below_alarm": below,
                    "tcpa_first": tcpa[0] if tcpa else None,
                    "tcpa_last": tcpa[-1] if tcpa else None}
    if kind == "hijack":
        granted = attacker.db.delete_capability == "granted"
        tcpa = [r["tcpa_min"] for r in rows if r["tcpa_min"] is not None]
        negative = any(v < 0.0 for v in tcpa)
        return granted and negative, {
            "delete_capability": attacker.db.delete_capability,
            "tcpa_negative": negative,
            "tcpa_last": tcpa[-1] if tcpa else None,
        }
    return None, {}


def batch(kind: str, n_seeds: int, base_seed: int = 1,
          cfg: RunConfig | None = None) -> dict:
    """Run n seeded randomized scenarios of one attack kind and aggregate."""
    if n_seeds < 1:
        raise ValueError("need at least one seed")
    cfg = cfg or RunConfig(attack=AttackConfig(kind=kind))
    window = cfg.attack_window if cfg.attack_window is not None \
        else ATTACK_WINDOWS.get(kind, 60.0)
    runs = []
    for i in range(n_seeds):
        seed = base_seed + i
        scenario = randomized_scenario(seed, kind)
        report = run_experiment(scenario, cfg)
        runs.append(report)

    total_attack = sum(r["packets"]["attack"] for r in runs)
    total_legit = sum(r["packets"]["legit"] for r in runs)
    agg_policy = {}
    tp = fp = 0
    if runs[0]["detection"] is not None:
        for pid in ("P1", "P2", "P3", "P4", "P5", "P6"):
            hits = sum(r["detection"]["per_policy"][pid]["attack_hits"] for r in runs)
            agg_policy[pid] = {
                "attack_hits": hits,
                "attack_pct": round(100.0 * hits / total_attack, 4) if total_attack else 0.0,
                "legit_hits": sum(r["detection"]["per_policy"][pid]["legit_hits"]
                                  for r in runs),
            }
        tp = sum(r["detection"]["tp"] for r in runs)
        fp = sum(r["detection"]["fp"] for r in runs)

    successes = [r["success"] for r in runs]
    return {
        "kind": kind,
        "seeds": [base_seed + i for i in range(n_seeds)],
        "window_s": window,
        "success_rate": round(sum(1 for s in successes if s) / n_seeds, 4),
        "packets": {"legit": total_legit, "attack": total_attack},
        "attack_traffic_ratio": round(
            sum(r["packets"]["attack_bytes"] for r in runs)
            / max(sum(r["packets"]["attack_bytes"] + r["packets"]["legit_bytes"]
                      for r in runs), 1), 8),
        "detection": {
            "tp": tp, "fp": fp,
            "tp_rate": round(tp / total_attack, 6) if total_attack else None,
            "fp_rate": round(fp / total_legit, 6) if total_legit else None,
            "per_policy": agg_policy,
        },
        "runs": runs,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, separators=(",", ":"))
