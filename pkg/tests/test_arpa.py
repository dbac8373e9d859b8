import math
import random
from collections import deque

import numpy as np
import pytest

from navrad.arpa import (TCPA_INFINITE, ArpaConfig, Tracker, cpa_tcpa,
                         cpa_tcpa_en, extract_clusters)
from navrad.asterix import VideoMessage
from navrad.geodesy import GeoPosition, direct
from navrad.kinematics import KinematicState
from navrad.ppi import PpiImage

ORIGIN = GeoPosition(44.0, 8.0)
OWN_STILL = KinematicState(ORIGIN, 0.0, 0.0, 0.0)


def image_with_echo(present: bool, bearing_bin: int = 2,
                    cell_lo: int = 48) -> PpiImage:
    img = PpiImage(n_bins=8, rotation_period=2.5, max_range_m=10000.0)
    cells = np.zeros(100, np.uint8)
    if present:
        cells[cell_lo:cell_lo + 4] = 255
    msg = VideoMessage(sac=1, sic=1, message_id=0, time_of_day=0.0,
                       start_az=bearing_bin * 45.0,
                       end_az=(bearing_bin + 1) * 45.0 % 360.0,
                       center_bias=0, cell_dur=6.67e-7, cell_res=8,
                       cells=cells).quantized()
    img.apply(msg, 0.0)
    return img


def reference_status(bits):
    """Tiny independent model of the acquisition rules: tracked after 5
    echoes of the last 10 scans, dropped after 9 consecutive misses."""
    exists = False
    status = None
    hits = deque(maxlen=10)
    misses = 0
    out = []
    for bit in bits:
        if not exists:
            if bit:
                exists, status, misses = True, "acquiring", 0
                hits = deque([1], maxlen=10)
            out.append(None if not exists else status)
            continue
        hits.append(bit)
        misses = 0 if bit else misses + 1
        if status == "acquiring" and sum(hits) >= 5:
            status = "tracked"
        if misses >= 9:
            exists = False
            out.append("lost" if status == "tracked" else None)
            status = None
            continue
        out.append(status)
    return out


def run_pattern(bits):
    tracker = Tracker(ArpaConfig(), ORIGIN)
    observed = []
    for i, bit in enumerate(bits):
        img = image_with_echo(bool(bit))
        ttms = tracker.scan(img, OWN_STILL, (i + 1) * 2.5, i + 1)
        lost = [t for t in ttms if t.status == "lost"]
        if lost:
            observed.append("lost")
        elif tracker.tracks:
            observed.append(next(iter(tracker.tracks.values())).status)
        else:
            observed.append(None)
    return observed


def test_status_machine_exhaustive():
    """All 2^10 echo histories against the independent reference model."""
    for pattern in range(1024):
        bits = [(pattern >> i) & 1 for i in range(10)]
        got = run_pattern(bits)
        want = reference_status(bits)
        normalized = ["tracked" if s == "dangerous" else s for s in got]
        assert normalized == want, f"pattern {bits}: {normalized} != {want}"


def test_tracked_at_fifth_scan():
    got = run_pattern([1, 1, 1, 1, 1])
    assert got == ["acquiring"] * 4 + ["tracked"]


def test_lost_after_nine_consecutive_misses():
    bits = [1] * 6 + [0] * 9
    got = run_pattern(bits)
    assert got[5] == "tracked"
    assert got[-1] == "lost"
    assert all(s == "tracked" for s in got[6:-1])


def test_miss_streak_resets_on_hit():
    bits = [1] * 6 + [0] * 8 + [1, 0]
    got = run_pattern(bits)
    assert got[13] == "tracked"   # eighth miss: still tracked
    assert got[14] == "tracked"   # echo returns, streak resets
    assert got[15] == "tracked"   # a single new miss does not lose it


def test_cpa_head_on():
    dcpa, tcpa = cpa_tcpa_en((0.0, 0.0), (0.0, 5.0), (0.0, 1000.0), (0.0, -5.0))
    assert tcpa == pytest.approx(100.0)
    assert dcpa == pytest.approx(0.0, abs=1e-9)


def test_cpa_zero_relative_velocity():
    dcpa, tcpa = cpa_tcpa_en((0.0, 0.0), (0.0, 5.0), (300.0, 400.0), (0.0, 5.0))
    assert tcpa == TCPA_INFINITE
    assert dcpa == pytest.approx(500.0)


def test_cpa_receding_astern():
    dcpa, tcpa = cpa_tcpa_en((0.0, 0.0), (0.0, 5.0), (0.0, -500.0), (0.0, -5.0))
    assert tcpa < 0.0


def test_cpa_of_kinematic_states():
    own = KinematicState(ORIGIN, 0.0, 10.0, 0.0)
    tgt = KinematicState(direct(ORIGIN, 0.0, 3000.0), 180.0, 10.0, 180.0)
    dcpa, tcpa = cpa_tcpa(own, tgt)
    closing = 20.0 * 1852.0 / 3600.0
    assert tcpa == pytest.approx(3000.0 / closing, rel=1e-3)
    assert dcpa == pytest.approx(0.0, abs=0.5)


def brute_force_cpa(own_vel, tgt_pos, tgt_vel):
    """Independent oracle: sampled minimum-distance search, then refined."""
    def dist(t):
        return math.hypot(tgt_pos[0] + (tgt_vel[0] - own_vel[0]) * t,
                          tgt_pos[1] + (tgt_vel[1] - own_vel[1]) * t)
    coarse = min(range(-7200, 7201), key=dist)
    t = min((coarse + k / 1000.0 for k in range(-1000, 1001)), key=dist)
    return dist(t), t


def test_cpa_matches_brute_force():
    rng = random.Random(4242)
    for _ in range(150):
        own_vel = (rng.uniform(-8, 8), rng.uniform(-8, 8))
        tgt_pos = (rng.uniform(-15000, 15000), rng.uniform(-15000, 15000))
        tgt_vel = (rng.uniform(-8, 8), rng.uniform(-8, 8))
        if math.hypot(tgt_vel[0] - own_vel[0], tgt_vel[1] - own_vel[1]) < 0.05:
            continue
        dcpa, tcpa = cpa_tcpa_en((0.0, 0.0), own_vel, tgt_pos, tgt_vel)
        b_dcpa, b_tcpa = brute_force_cpa(own_vel, tgt_pos, tgt_vel)
        if abs(b_tcpa) >= 7200:
            continue  # optimum outside the search window
        assert dcpa == pytest.approx(b_dcpa, rel=1e-3, abs=0.5)
        assert tcpa == pytest.approx(b_tcpa, rel=1e-3, abs=2e-3)


def test_cluster_centroid_tracks_intensity():
    img = PpiImage(n_bins=360, rotation_period=2.5, max_range_m=22224.0)
    cells = np.zeros(4096, np.uint16)
    cells[2000:2010] = 65535
    for b, scale in ((100, 1.0), (101, 0.25)):
        msg = VideoMessage(sac=1, sic=1, message_id=0, time_of_day=0.0,
                           start_az=float(b), end_az=float(b + 1),
                           center_bias=0, cell_dur=3.6196865e-8, cell_res=16,
                           cells=(cells * scale).astype(np.uint16)).quantized()
        img.apply(msg, 0.0)
    clusters = extract_clusters(img, ArpaConfig())
    assert len(clusters) == 1
    c = clusters[0]
    bearing = math.degrees(math.atan2(c.east, c.north)) % 360.0
    assert 100.5 < bearing < 101.0  # weighted toward the brighter bin


def test_guard_zone_marks_dangerous():
    cfg = ArpaConfig(cpa_limit_nm=2.0, tcpa_limit_min=60.0)
    tracker = Tracker(cfg, ORIGIN)
    own = KinematicState(ORIGIN, 0.0, 0.0, 0.0)
    # target at 7 km closing radially at 40 m/s: CPA 0, TCPA a few minutes
    for i in range(12):
        img = PpiImage(n_bins=8, rotation_period=2.5, max_range_m=10000.0)
        cells = np.zeros(100, np.uint8)
        lo = 70 - i
        cells[lo:lo + 3] = 255
        msg = VideoMessage(sac=1, sic=1, message_id=0, time_of_day=0.0,
                           start_az=90.0, end_az=135.0, center_bias=0,
                           cell_dur=6.67e-7, cell_res=8,
                           cells=cells).quantized()
        img.apply(msg, 0.0)
        tracker.scan(img, own, (i + 1) * 2.5, i + 1)
    track = next(iter(tracker.tracks.values()))
    assert track.status == "dangerous"
    assert 0.0 <= track.tcpa_s <= 3600.0
