"""Software PPI: the polar radar image state machine and its renderer.

Incoming video messages are applied per display bin (one bin per bearing
resolution step).  The display rules implemented here:

  * echoes persist for at least half a rotation period after their last
    update; a bin untouched for longer is simply overwritten;
  * a second message for the same bin within the persistence window and
    with the same cell geometry is summed cell by cell (saturating at the
    resolution maximum);
  * with the replace quirk enabled (the default, matching the commercial
    display this models), a message whose cell geometry (center bias /
    cell count) differs from the displayed trace replaces the bin content
    outright instead of being summed;
  * with the quirk disabled, mismatched geometry is resampled onto a
    common radial grid and summed, as the performance standards require.

The image is a single-writer state machine: one thread applies messages
and takes snapshots; rendered frames and hashes are plain values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .asterix import VideoMessage, cell_width_m
from .sectors import AnnulusSector, bins_for_span


@dataclass(slots=True)
class BinTrace:
    """Displayed content of one bearing bin, in its own cell geometry."""
    cells: np.ndarray
    center_bias: int
    cell_dur: float
    cell_res: int
    t_update: float
    has_echo: bool


class PpiImage:
    def __init__(self, n_bins: int = 360, rotation_period: float = 2.5,
                 max_range_m: float = 22224.0, quirk_replace: bool = True,
                 orientation: str = "head-up", trail_cells: int = 512,
                 trail_decay: float = 0.80):
        self.n_bins = n_bins
        self.rotation_period = rotation_period
        self.persistence = rotation_period / 2.0
        self.max_range_m = max_range_m
        self.quirk_replace = quirk_replace
        self.orientation = orientation
        self.bins: list[BinTrace | None] = [None] * n_bins
        self.trail_cells = trail_cells
        self.trail_decay = trail_decay
        self.trail = np.zeros((n_bins, trail_cells), np.float32)
        self.trails_enabled = False

    # -- state machine -----------------------------------------------------

    def apply(self, msg: VideoMessage, now: float) -> None:
        """Apply one video message to every bin its span covers."""
        covered = bins_for_span(msg.start_az, msg.end_az, self.n_bins)
        has_echo = bool(msg.cells.any())
        if len(covered) > 4:
            self._apply_wide(covered, msg, now, has_echo)
            return
        for b in covered:
            self._apply_bin(b, msg, now, has_echo)

    def _apply_wide(self, covered, msg: VideoMessage, now: float,
                    has_echo: bool) -> None:
        """Multi-bin messages share one trace object; the outcome per
        distinct displayed trace is memoized, so bins holding identical
        content are resolved once."""
        fresh = BinTrace(msg.cells, msg.center_bias, msg.cell_dur,
                         msg.cell_res, now, has_echo)
        geo = (msg.center_bias, msg.cells.size, msg.cell_dur, msg.cell_res)
        maxv = (1 << msg.cell_res) - 1
        memo: dict[int, BinTrace] = {}
        pinned = []   # keep memo keys alive so ids cannot be recycled mid-loop
        bins = self.bins
        persistence = self.persistence
        for b in covered:
            cur = bins[b]
            if cur is None:
                bins[b] = fresh
                continue
            out = memo.get(id(cur))
            if out is None:
                pinned.append(cur)
                if now - cur.t_update >= persistence:
                    out = fresh
                elif (cur.center_bias, cur.cells.size, cur.cell_dur,
                      cur.cell_res) == geo:
                    summed = np.minimum(cur.cells.astype(np.uint64)
                                        + msg.cells.astype(np.uint64),
                                        maxv).astype(cur.cells.dtype)
                    out = BinTrace(summed, cur.center_bias, cur.cell_dur,
                                   cur.cell_res, now,
                                   bool(has_echo or cur.has_echo))
                elif self.quirk_replace:
                    out = fresh
                else:
                    out = self._merge(cur, msg, now)
                memo[id(cur)] = out
            bins[b] = out

    def _apply_bin(self, b: int, msg: VideoMessage, now: float,
                   has_echo: bool) -> None:
        cur = self.bins[b]
        fresh = BinTrace(msg.cells, msg.center_bias, msg.cell_dur,
                         msg.cell_res, now, has_echo)
        if cur is None or now - cur.t_update >= self.persistence:
            self.bins[b] = fresh
            return
        same_geometry = (
            cur.center_bias == msg.center_bias
            and cur.cells.size == msg.cells.size
            and cur.cell_dur == msg.cell_dur
            and cur.cell_res == msg.cell_res
        )
        if same_geometry:
            maxv = (1 << msg.cell_res) - 1
            summed = np.minimum(
                cur.cells.astype(np.uint64) + msg.cells.astype(np.uint64), maxv
            ).astype(cur.cells.dtype)
            self.bins[b] = BinTrace(summed, cur.center_bias, cur.cell_dur,
                                    cur.cell_res, now, bool(has_echo or cur.has_echo))
        elif self.quirk_replace:
            self.bins[b] = fresh
        else:
            self.bins[b] = self._merge(cur, msg, now)

    def _merge(self, cur: BinTrace, msg: VideoMessage, now: float) -> BinTrace:
        """Standards behavior for mismatched geometry: resample the new
        trace onto the displayed one and sum, saturating."""
        maxv = (1 << cur.cell_res) - 1
        new_maxv = (1 << msg.cell_res) - 1
        w_cur = cell_width_m(cur.cell_dur)
        w_new = cell_width_m(msg.cell_dur)
        if cur.cell_dur == msg.cell_dur and cur.cell_res == msg.cell_res:
            lo = min(cur.center_bias, msg.center_bias)
            hi_limit = int(self.max_range_m / w_cur) + 1
            hi = min(max(cur.center_bias + cur.cells.size,
                         msg.center_bias + msg.cells.size), lo + hi_limit)
            out = np.zeros(hi - lo, np.uint64)
            c_end = min(cur.center_bias + cur.cells.size, hi)
            out[cur.center_bias - lo:c_end - lo] += \
                cur.cells[:c_end - cur.center_bias].astype(np.uint64)
            m_end = min(msg.center_bias + msg.cells.size, hi)
            if m_end > msg.center_bias:
                out[msg.center_bias - lo:m_end - lo] += \
                    msg.cells[:m_end - msg.center_bias].astype(np.uint64)
            cells = np.minimum(out, maxv).astype(cur.cells.dtype)
            return BinTrace(cells, lo, cur.cell_dur, cur.cell_res, now,
                            bool(cells.any()))
        # different radial grids: splat each new cell over the displayed one
        out = cur.cells.astype(np.uint64).copy()
        for j in range(msg.cells.size):
            v = int(msg.cells[j])
            if v == 0:
                continue
            r_lo = (msg.center_bias + j) * w_new
            r_hi = (msg.center_bias + j + 1) * w_new
            i_lo = max(int(r_lo / w_cur) - cur.center_bias, 0)
            i_hi = min(int(math.ceil(r_hi / w_cur)) - cur.center_bias, out.size)
            if i_hi > i_lo:
                out[i_lo:i_hi] += round(v * maxv / new_maxv)
        cells = np.minimum(out, maxv).astype(cur.cells.dtype)
        return BinTrace(cells, cur.center_bias, cur.cell_dur, cur.cell_res,
                        now, bool(cells.any()))

    # -- views ---------------------------------------------------------------

    def canonical_bin(self, b: int, n_cells: int, cell_width: float) -> np.ndarray:
        """Bin content resampled to a dense 0-based grid of n_cells cells of
        cell_width meters, normalized to [0, 1]."""
        out = np.zeros(n_cells, np.float32)
        tr = self.bins[b]
        if tr is None or not tr.has_echo:
            return out
        w = cell_width_m(tr.cell_dur)
        maxv = (1 << tr.cell_res) - 1
        idx = ((tr.center_bias + np.arange(tr.cells.size)) * (w / cell_width)).astype(np.int64)
        ok = (idx >= 0) & (idx < n_cells)
        np.maximum.at(out, idx[ok], tr.cells[ok].astype(np.float32) / maxv)
        return out

    def content_hash(self) -> bytes:
        import hashlib
        h = hashlib.sha256()
        for b, tr in enumerate(self.bins):
            if tr is None:
                continue
            h.update(b.to_bytes(2, "big"))
            h.update(tr.center_bias.to_bytes(4, "big"))
            h.update(round(tr.cell_dur * 1e15).to_bytes(8, "big"))
            h.update(np.ascontiguousarray(tr.cells).tobytes())
        return h.digest()

    def revolution_tick(self) -> None:
        """Advance the echo-trail buffer by one antenna revolution."""
        if not self.trails_enabled:
            return
        self.trail *= self.trail_decay
        cw = self.max_range_m / self.trail_cells
        for b, tr in enumerate(self.bins):
            if tr is None or not tr.has_echo:
                continue
            row = self.canonical_bin(b, self.trail_cells, cw)
            np.maximum(self.trail[b], row, out=self.trail[b])


# --------------------------------------------------------------------------
# rendering
# --------------------------------------------------------------------------

_PIXMAP_CACHE: dict = {}


def _pixel_map(size: int, n_bins: int, n_cells: int):
    key = (size, n_bins, n_cells)
    cached = _PIXMAP_CACHE.get(key)
    if cached is not None:
        return cached
    c = (size - 1) / 2.0
    y, x = np.mgrid[0:size, 0:size]
    dx = (x - c) / c       # east
    dy = (c - y) / c       # north
    r = np.hypot(dx, dy)
    theta = np.degrees(np.arctan2(dx, dy)) % 360.0
    inside = r <= 1.0
    cell_idx = np.minimum((r * n_cells).astype(np.int32), n_cells - 1)
    _PIXMAP_CACHE[key] = (theta, r, inside, cell_idx)
    return _PIXMAP_CACHE[key]


def render(img: PpiImage, mode: str | None = None, trails: bool = False,
           size: int = 512, heading: float = 0.0,
           overlays: tuple[AnnulusSector, ...] = ()) -> bytes:
    """Rasterize the image to a binary PPM (P6) frame.

    Own ship sits at the center.  In head-up mode the top of the frame is
    the bow (video azimuths are antenna-relative, so they map straight to
    screen angles); in north-up mode the frame is rotated so the top is
    true north and the bow points along `heading`.
    """
    mode = mode or img.orientation
    n_cells = img.trail_cells
    cw = img.max_range_m / n_cells
    grid = np.zeros((img.n_bins, n_cells), np.float32)
    for b, tr in enumerate(img.bins):
        if tr is not None and tr.has_echo:
            grid[b] = img.canonical_bin(b, n_cells, cw)

    theta, r, inside, cell_idx = _pixel_map(size, img.n_bins, n_cells)
    if mode == "north-up":
        content_az = (theta - heading) % 360.0
    else:
        content_az = theta
    bin_idx = (content_az * img.n_bins / 360.0).astype(np.int32) % img.n_bins

    strengths = np.where(inside, grid[bin_idx, cell_idx], 0.0)
    rgb = np.zeros((size, size, 3), np.float32)
    rgb[..., 1] = np.where(inside, 14.0, 0.0)  # scope background

    if trails:
        tr_strength = np.where(inside, img.trail[bin_idx, cell_idx], 0.0)
        rgb[..., 1] = np.maximum(rgb[..., 1], 170.0 * tr_strength)
        rgb[..., 0] = np.maximum(rgb[..., 0], 40.0 * tr_strength)

    # range rings every quarter of the range scale, about one pixel wide
    ring_tol = max(0.004, 4.5 / size)
    ring = inside & (np.abs((r * 4.0) - np.round(r * 4.0)) < ring_tol) & (r > 0.02)
    rgb[..., 1] = np.maximum(rgb[..., 1], np.where(ring, 46.0, 0.0))

    rgb[..., 1] = np.maximum(rgb[..., 1], 255.0 * strengths)
    rgb[..., 0] = np.maximum(rgb[..., 0], 120.0 * strengths)

    for sec in overlays:
        a = content_az if mode != "north-up" else content_az
        if sec.full_circle:
            ang_ok = inside
        else:
            width = sec.angular_width()
            ang_ok = inside & (((a - sec.a_min) % 360.0) <= width)
        r_m = r * img.max_range_m
        d_hi = sec.d_max if math.isfinite(sec.d_max) else img.max_range_m
        sel = ang_ok & (r_m >= sec.d_min) & (r_m <= d_hi)
        rgb[..., 0][sel] = np.maximum(rgb[..., 0][sel], 170.0)

    # own-ship marker
    c = size // 2
    rgb[c - 1:c + 2, c - 1:c + 2] = (255.0, 255.0, 255.0)

    data = np.clip(rgb, 0.0, 255.0).astype(np.uint8)
    return b"P6\n%d %d\n255\n" % (size, size) + data.tobytes()
