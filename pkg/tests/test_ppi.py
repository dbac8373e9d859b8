import random

import numpy as np
import pytest

from navrad.asterix import VideoMessage
from navrad.ppi import PpiImage, render


def binmsg(cells, bias=0, start=45.0, end=46.0, dur=1e-7, res=1, mid=0, tod=0.0):
    return VideoMessage(sac=1, sic=1, message_id=mid, time_of_day=tod,
                        start_az=start, end_az=end, center_bias=bias,
                        cell_dur=dur, cell_res=res,
                        cells=np.array(cells, np.uint8)).quantized()


def the_bin(img):
    return 45


def canon(img, n=6, dur=1e-7):
    from navrad.asterix import cell_width_m
    return list(img.canonical_bin(the_bin(img), n, cell_width_m(dur)))


def test_sum_rule_trace():
    """Displayed 001010, then 001011 injected within the persistence
    window with the same geometry: the display sums to 001011."""
    img = PpiImage(n_bins=360, rotation_period=2.5)
    img.apply(binmsg([0, 0, 1, 0, 1, 0]), now=10.0)
    img.apply(binmsg([0, 0, 1, 0, 1, 1]), now=10.001)
    assert canon(img) == [0, 0, 1, 0, 1, 1]


def test_quirk_replace_trace():
    """Displayed 001010, then a two-cell block with center bias 4: a quirky
    display replaces the whole trace, yielding 000011."""
    img = PpiImage(n_bins=360, rotation_period=2.5, quirk_replace=True)
    img.apply(binmsg([0, 0, 1, 0, 1, 0]), now=10.0)
    img.apply(binmsg([1, 1], bias=4), now=10.001)
    assert canon(img) == [0, 0, 0, 0, 1, 1]


def test_standards_merge_trace():
    """Same injection with the quirk off: the sum rule holds and the echo
    in the third cell survives."""
    img = PpiImage(n_bins=360, rotation_period=2.5, quirk_replace=False)
    img.apply(binmsg([0, 0, 1, 0, 1, 0]), now=10.0)
    img.apply(binmsg([1, 1], bias=4), now=10.001)
    assert canon(img) == [0, 0, 1, 0, 1, 1]


def test_persistence_expiry_overwrites():
    img = PpiImage(n_bins=360, rotation_period=2.5)
    img.apply(binmsg([0, 0, 1, 0, 1, 0]), now=10.0)
    img.apply(binmsg([1, 0, 0, 0, 0, 0]), now=10.0 + 1.25)  # half a rotation
    assert canon(img) == [1, 0, 0, 0, 0, 0]


def test_sum_saturates_at_resolution_max():
    img = PpiImage(n_bins=360, rotation_period=2.5)
    img.apply(binmsg([200, 200], res=8), now=0.0)
    img.apply(binmsg([200, 100], res=8), now=0.01)
    tr = img.bins[45]
    assert list(tr.cells) == [255, 255]


def test_sum_rule_order_independent():
    rng = random.Random(11)
    for _ in range(40):
        a = [rng.randrange(2) for _ in range(8)]
        b = [rng.randrange(2) for _ in range(8)]
        img1 = PpiImage(n_bins=360, rotation_period=2.5)
        img1.apply(binmsg(a, res=1), 0.0)
        img1.apply(binmsg(b, res=1), 0.01)
        img2 = PpiImage(n_bins=360, rotation_period=2.5)
        img2.apply(binmsg(b, res=1), 0.0)
        img2.apply(binmsg(a, res=1), 0.01)
        assert canon(img1, 8) == canon(img2, 8)


def test_full_circle_message_covers_every_bin():
    img = PpiImage(n_bins=360, rotation_period=2.5)
    img.apply(binmsg([0, 0, 1, 0, 1, 0]), now=0.0)
    img.apply(binmsg([3, 3], start=0.0, end=0.0, dur=3e-6, res=2), now=0.01)
    assert all(tr is not None for tr in img.bins)
    # quirky replace wiped the earlier echo with the flood content
    assert img.bins[45].cells.tolist() == [3, 3]


def test_content_hash_tracks_changes():
    img = PpiImage(n_bins=360, rotation_period=2.5)
    img.apply(binmsg([0, 0, 1, 0, 1, 0]), 0.0)
    h1 = img.content_hash()
    img.apply(binmsg([0, 0, 1, 0, 1, 1]), 0.001)
    assert img.content_hash() != h1


def _ppm_pixels(frame: bytes):
    header, _, rest = frame.partition(b"255\n")
    dims = header.split()[1:3]
    size = int(dims[0])
    return np.frombuffer(rest, np.uint8).reshape(size, size, 3)


def _echo_image(heading_bin=0):
    img = PpiImage(n_bins=360, rotation_period=2.5, max_range_m=22224.0)
    cells = np.zeros(4096, np.uint16)
    cells[2000:2100] = 65535
    msg = VideoMessage(sac=1, sic=1, message_id=0, time_of_day=0.0,
                       start_az=float(heading_bin), end_az=float(heading_bin + 1),
                       center_bias=0, cell_dur=3.6196865e-8, cell_res=16,
                       cells=cells).quantized()
    img.apply(msg, 0.0)
    return img


def test_render_empty_image_has_rings():
    img = PpiImage(n_bins=360, rotation_period=2.5)
    px = _ppm_pixels(render(img, size=256))
    assert (px[..., 1] == 46).sum() > 200      # ring pixels
    assert (px[..., 1] == 14).sum() > 20000    # uniform scope background


def test_render_head_up_vs_north_up():
    img = _echo_image(heading_bin=0)  # echo dead ahead (bow-relative 0)
    size = 256
    c = size // 2
    # cells 2000..2100 of 4096 sit at ~half range
    r = int(round((2050 / 4096) * (c - 1)))
    head_up = _ppm_pixels(render(img, mode="head-up", size=size, heading=90.0))
    assert head_up[c - r, c, 1] > 200            # dead ahead = up
    north_up = _ppm_pixels(render(img, mode="north-up", size=size, heading=90.0))
    assert north_up[c, c + r, 1] > 200           # bow points east


def test_render_trails_smear():
    img = PpiImage(n_bins=360, rotation_period=2.5, max_range_m=22224.0)
    img.trails_enabled = True
    for step in range(6):
        cells = np.zeros(4096, np.uint16)
        lo = 1200 + step * 220
        cells[lo:lo + 80] = 65535
        msg = VideoMessage(sac=1, sic=1, message_id=step, time_of_day=0.0,
                           start_az=90.0, end_az=91.0, center_bias=0,
                           cell_dur=3.6196865e-8, cell_res=16,
                           cells=cells).quantized()
        img.apply(msg, step * 2.5)
        img.revolution_tick()
    with_trails = _ppm_pixels(render(img, size=256, trails=True))
    without = _ppm_pixels(render(img, size=256, trails=False))
    assert (with_trails[..., 1] > 50).sum() > (without[..., 1] > 50).sum() * 2


def test_render_overlay_marks_sector():
    from navrad.sectors import AnnulusSector
    img = PpiImage(n_bins=360, rotation_period=2.5, max_range_m=22224.0)
    sec = AnnulusSector(40.0, 60.0, 5000.0, 12000.0)
    px = _ppm_pixels(render(img, size=256, overlays=(sec,)))
    assert (px[..., 0] >= 170).any()
