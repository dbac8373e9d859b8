"""ARPA target tracking over the software PPI.

Echo clusters are pulled from the image once per antenna revolution
(cells at or above half of full strength, 8-connected across bins and
cells, with a low-intensity skirt folded into the centroid so painted
edges keep their sub-cell information).  Clusters feed a per-target
alpha-beta filter through a nearest-neighbour gate.

Status rules:
  * a new target is acquired inside the configured acquisition zones and
    becomes `tracked` once it echoes in at least 5 of the last 10 scans;
  * a tracked target whose CPA and TCPA both fall inside the guard limits
    is flagged `dangerous`;
  * nine consecutive missed scans make a target `lost`; the final TTM
    reports the lost status and the track is dropped.

Course and speed reported in TTMs come from a least-squares fit over the
recent measurement window, which is steadier than the raw filter velocity
at one update per revolution.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .asterix import cell_width_m
from .geodesy import (KNOTS_TO_MPS, NM_TO_M, GeoPosition, enu_offset, norm360,
                      velocity_en)
from .kinematics import KinematicState
from .nmea import TrackedTargetMessage
from .ppi import PpiImage
from .sectors import AnnulusSector

TCPA_INFINITE = math.inf  # sentinel for zero relative motion


def cpa_tcpa_en(own_pos, own_vel, tgt_pos, tgt_vel) -> tuple[float, float]:
    """Closest point of approach in a local tangent plane.

    Returns (dcpa meters, tcpa seconds); tcpa < 0 means the range is
    opening, +inf means no relative motion.
    """
    rx = tgt_pos[0] - own_pos[0]
    ry = tgt_pos[1] - own_pos[1]
    vx = tgt_vel[0] - own_vel[0]
    vy = tgt_vel[1] - own_vel[1]
    v2 = vx * vx + vy * vy
    if v2 < 1e-12:  # |v| < 1e-6 m/s
        return float(math.hypot(rx, ry)), TCPA_INFINITE
    tcpa = -(rx * vx + ry * vy) / v2
    dcpa = math.hypot(rx + vx * tcpa, ry + vy * tcpa)
    return float(dcpa), float(tcpa)


def cpa_tcpa(own: KinematicState, target: KinematicState) -> tuple[float, float]:
    """CPA/TCPA between two kinematic states (dcpa meters, tcpa seconds)."""
    rel = enu_offset(own.position, target.position)
    return cpa_tcpa_en((0.0, 0.0), velocity_en(own.cog, own.sog),
                       rel, velocity_en(target.cog, target.sog))


@dataclass(frozen=True)
class ArpaConfig:
    cpa_limit_nm: float = 2.0
    tcpa_limit_min: float = 15.0
    acquisition_zones: tuple[AnnulusSector, ...] = (
        AnnulusSector(0.0, 360.0, 500.0, 22000.0),
    )
    gate_m: float = 500.0            # association gate around prediction
    alpha: float = 0.5               # position gain
    beta: float = 0.3                # velocity gain
    threshold_frac: float = 0.5      # cluster membership threshold
    skirt_frac: float = 0.04         # sub-threshold skirt folded into centroids
    history_len: int = 12            # measurement window for course/speed

    def __post_init__(self):
        if self.cpa_limit_nm <= 0 or self.tcpa_limit_min <= 0:
            raise ValueError("guard-zone limits must be > 0")


@dataclass
class Cluster:
    east: float    # bow-relative meters
    north: float
    weight: float
    r_lo: float
    r_hi: float


def extract_clusters(img: PpiImage, cfg: ArpaConfig) -> list[Cluster]:
    """Echo clusters on the current image, in bow-relative coordinates."""
    runs = []  # (bin, r_lo, r_hi, weight, sum_wr)
    for b, tr in enumerate(img.bins):
        if tr is None or not tr.has_echo:
            continue
        maxv = float((1 << tr.cell_res) - 1)
        cells = tr.cells
        hot = np.flatnonzero(cells >= cfg.threshold_frac * maxv)
        if hot.size == 0:
            continue
        width = cell_width_m(tr.cell_dur)
        skirt = cfg.skirt_frac * maxv
        if int(hot[-1]) - int(hot[0]) == hot.size - 1:
            segs = [hot]   # single contiguous run, the usual case
        else:
            segs = np.split(hot, np.flatnonzero(np.diff(hot) > 1) + 1)
        for seg in segs:
            lo, hi = int(seg[0]), int(seg[-1]) + 1
            while lo > 0 and cells[lo - 1] >= skirt:
                lo -= 1
            while hi < cells.size and cells[hi] >= skirt:
                hi += 1
            w = cells[lo:hi].astype(np.float64) / maxv
            radii = (tr.center_bias + np.arange(lo, hi) + 0.5) * width
            runs.append((b, (tr.center_bias + lo) * width,
                         (tr.center_bias + hi) * width,
                         float(w.sum()), float((w * radii).sum())))

    if not runs:
        return []

    # 8-connectivity: adjacent bins (mod n) with touching radial extents
    parent = list(range(len(runs)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    by_bin: dict[int, list[int]] = {}
    for i, r in enumerate(runs):
        by_bin.setdefault(r[0], []).append(i)
    for i, (b, lo, hi, _, _) in enumerate(runs):
        for nb in (b, (b + 1) % img.n_bins):
            for j in by_bin.get(nb, ()):
                if j == i:
                    continue
                _, lo2, hi2, _, _ = runs[j]
                if hi >= lo2 and hi2 >= lo:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[rj] = ri

    groups: dict[int, list[int]] = {}
    for i in range(len(runs)):
        groups.setdefault(find(i), []).append(i)

    bin_step = 360.0 / img.n_bins
    clusters = []
    for idxs in groups.values():
        we = wn = wsum = 0.0
        r_lo, r_hi = math.inf, 0.0
        for i in idxs:
            b, lo, hi, w, wr = runs[i]
            theta = math.radians((b + 0.5) * bin_step)
            we += wr * math.sin(theta)
            wn += wr * math.cos(theta)
            wsum += w
            r_lo, r_hi = min(r_lo, lo), max(r_hi, hi)
        clusters.append(Cluster(we / wsum, wn / wsum, wsum, r_lo, r_hi))
    return clusters


@dataclass
class ArpaTrack:
    tid: int
    pos: np.ndarray                  # filtered position, absolute EN meters
    vel: np.ndarray                  # filter velocity, m/s
    t_last: float
    status: str = "acquiring"        # acquiring | tracked | dangerous | lost
    hits: deque = field(default_factory=lambda: deque(maxlen=10))
    misses: int = 0                  # consecutive missed scans
    history: deque = field(default_factory=lambda: deque(maxlen=12))
    dcpa_m: float = math.inf
    tcpa_s: float = TCPA_INFINITE

    def lsq_velocity(self) -> np.ndarray:
        """Least-squares velocity over the measurement window."""
        if len(self.history) < 2:
            return self.vel.copy()
        ts = np.array([h[0] for h in self.history])
        zs = np.array([h[1] for h in self.history])
        t0 = ts.mean()
        dt = ts - t0
        denom = float((dt * dt).sum())
        if denom <= 0.0:
            return self.vel.copy()
        return (dt[:, None] * (zs - zs.mean(axis=0))).sum(axis=0) / denom


class Tracker:
    """Single-writer ARPA state machine; one scan() per antenna revolution."""

    def __init__(self, cfg: ArpaConfig, origin: GeoPosition):
        self.cfg = cfg
        self.origin = origin
        self.tracks: dict[int, ArpaTrack] = {}
        self._next_tid = 1

    def scan(self, img: PpiImage, own: KinematicState, t: float,
             scan_index: int) -> list[TrackedTargetMessage]:
        cfg = self.cfg
        own_en = np.array(enu_offset(self.origin, own.position))
        own_vel = np.array(velocity_en(own.cog, own.sog))
        h = math.radians(own.heading)
        cos_h, sin_h = math.cos(h), math.sin(h)

        clusters = extract_clusters(img, cfg)
        # bow-relative -> absolute EN
        pts = []
        for c in clusters:
            e = c.east * cos_h + c.north * sin_h
            n = c.north * cos_h - c.east * sin_h
            pts.append(own_en + np.array([e, n]))

        # greedy nearest-neighbour association inside the gate
        pairs = []
        preds = {}
        for tid, trk in self.tracks.items():
            preds[tid] = trk.pos + trk.vel * (t - trk.t_last)
            for ci, p in enumerate(pts):
                d = float(np.hypot(*(p - preds[tid])))
                if d <= cfg.gate_m:
                    pairs.append((d, tid, ci))
        pairs.sort(key=lambda x: (x[0], x[1], x[2]))
        used_t, used_c = set(), set()
        assoc = {}
        for d, tid, ci in pairs:
            if tid in used_t or ci in used_c:
                continue
            used_t.add(tid)
            used_c.add(ci)
            assoc[tid] = ci

        ttms: list[TrackedTargetMessage] = []
        for tid in list(self.tracks):
            trk = self.tracks[tid]
            dt = t - trk.t_last
            if tid in assoc:
                z = pts[assoc[tid]]
                pred = preds[tid]
                res = z - pred
                trk.pos = pred + cfg.alpha * res
                if dt > 0:
                    trk.vel = trk.vel + cfg.beta * res / dt
                trk.t_last = t
                trk.history.append((t, z))
                trk.hits.append(1)
                trk.misses = 0
            else:
                trk.hits.append(0)
                trk.misses += 1

            was_reportable = trk.status in ("tracked", "dangerous")
            if trk.status == "acquiring" and sum(trk.hits) >= 5:
                trk.status = "tracked"

            if trk.misses >= 9:
                if was_reportable:
                    trk.status = "lost"
                    ttms.append(self._ttm(trk, own_en, own_vel, t))
                del self.tracks[tid]
                continue

            if trk.status in ("tracked", "dangerous"):
                v = trk.lsq_velocity()
                trk.dcpa_m, trk.tcpa_s = cpa_tcpa_en(
                    own_en, own_vel, trk.pos + trk.vel * (t - trk.t_last), v)
                danger = (
                    trk.dcpa_m <= cfg.cpa_limit_nm * NM_TO_M
                    and 0.0 <= trk.tcpa_s <= cfg.tcpa_limit_min * 60.0
                    and math.isfinite(trk.tcpa_s)
                )
                trk.status = "dangerous" if danger else "tracked"
                ttms.append(self._ttm(trk, own_en, own_vel, t))

        # spawn acquiring tracks from unassociated clusters inside the zones
        for ci, p in enumerate(pts):
            if ci in used_c:
                continue
            rel = p - own_en
            rng = float(np.hypot(*rel))
            brg_rel = norm360(math.degrees(math.atan2(rel[0], rel[1])) - own.heading)
            if not any(z.contains_angle(brg_rel) and z.d_min <= rng <= z.d_max
                       for z in cfg.acquisition_zones):
                continue
            trk = ArpaTrack(tid=self._next_tid, pos=p.copy(),
                            vel=np.zeros(2), t_last=t,
                            history=deque(maxlen=cfg.history_len))
            trk.hits.append(1)
            trk.history.append((t, p.copy()))
            self.tracks[self._next_tid] = trk
            self._next_tid += 1

        return ttms

    def _ttm(self, trk: ArpaTrack, own_en, own_vel, t: float) -> TrackedTargetMessage:
        rel = trk.pos - own_en
        rng = float(np.hypot(*rel))
        brg = norm360(math.degrees(math.atan2(rel[0], rel[1])))
        v = trk.lsq_velocity()
        speed = float(np.hypot(*v))
        course = norm360(math.degrees(math.atan2(v[0], v[1]))) if speed > 1e-9 else 0.0
        status = "tracked" if trk.status == "dangerous" else trk.status
        tcpa_min = None if not math.isfinite(trk.tcpa_s) else trk.tcpa_s / 60.0
        return TrackedTargetMessage(
            target_id=trk.tid,
            distance=rng / NM_TO_M,
            bearing=brg,
            speed=speed / KNOTS_TO_MPS,
            course=course,
            dcpa=trk.dcpa_m / NM_TO_M,
            tcpa=tcpa_min,
            status=status,
        )
