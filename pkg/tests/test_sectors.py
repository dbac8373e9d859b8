import math
import random

import pytest

from navrad.sectors import (AZ_COUNTS, AnnulusSector, bin_edge, bins_for_span,
                            find_sector)


def test_whole_image_selector():
    sec = find_sector(0.0, 0.0, 0.0, 0.0)
    assert (sec.a_min, sec.a_max, sec.d_min) == (0.0, 360.0, 0.0)
    assert math.isinf(sec.d_max)
    assert sec.full_circle


def test_bounding_circle_example():
    sec = find_sector(1000.0, 45.0, 30.0, 40.0, 0.0)
    # half-diagonal r = 25 m, phi = atan2(25, 1000)
    assert math.degrees(math.atan2(25.0, 1000.0)) == pytest.approx(1.43209, abs=1e-5)
    assert sec.a_min == pytest.approx(43.5679, abs=1e-4)
    assert sec.a_max == pytest.approx(46.4321, abs=1e-4)
    assert sec.d_min == pytest.approx(975.0)
    assert sec.d_max == pytest.approx(1025.0)


def test_wrapping_sector():
    sec = find_sector(100.0, 1.0, 12.5, 12.5, 0.0)
    phi = math.degrees(math.atan2(12.5 * math.sqrt(2) / 2, 100.0))
    assert sec.a_min == pytest.approx(360.0 + 1.0 - phi, abs=1e-6)
    assert sec.a_max == pytest.approx(1.0 + phi, abs=1e-6)
    assert sec.a_min > sec.a_max  # wraps through north
    assert sec.contains_angle(0.0)
    assert sec.contains_angle(359.0)
    assert not sec.contains_angle(180.0)


def test_size_margin_grows_sector():
    tight = find_sector(1000.0, 45.0, 30.0, 40.0, 0.0)
    padded = find_sector(1000.0, 45.0, 30.0, 40.0, 0.5)
    assert padded.d_min < tight.d_min
    assert padded.d_max > tight.d_max
    assert padded.angular_width() > tight.angular_width()


def test_invalid_inputs():
    with pytest.raises(ValueError):
        find_sector(-1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        find_sector(10.0, 0.0, 0.0, 1.0)


def rasterized_circle_inside(sec, rho, theta, r_star, bin_deg=1.0,
                             cell_m=5.42578125, samples=64) -> bool:
    """Brute-force oracle: sample the bounding circle, rasterize each point
    onto the radar image's polar grid (bearing bins x range cells), and
    check membership at grid granularity -- a rasterized position is only
    known to within one grid cell in each dimension."""
    cx = rho * math.sin(math.radians(theta))
    cy = rho * math.cos(math.radians(theta))
    width = sec.angular_width()
    for k in range(samples):
        ang = 2.0 * math.pi * k / samples
        px = cx + r_star * math.cos(ang)
        py = cy + r_star * math.sin(ang)
        pr = math.hypot(px, py)
        pa = math.degrees(math.atan2(px, py)) % 360.0
        cell_lo = math.floor(pr / cell_m) * cell_m
        if not (cell_lo + cell_m > sec.d_min - cell_m and
                cell_lo < sec.d_max + cell_m):
            return False
        bin_lo = math.floor(pa / bin_deg) * bin_deg
        offset = (bin_lo - sec.a_min) % 360.0
        if not (offset <= width + bin_deg or offset >= 360.0 - 2.0 * bin_deg):
            return False
    return True


def test_find_soundness_against_rasterization():
    """Configurations span the geometry where targets are tracked: footprints
    up to a few hundred meters, at ranges from just under a mile out to the
    range scale."""
    rng = random.Random(31337)
    for _ in range(200):
        rho = rng.uniform(1500.0, 21000.0)
        theta = rng.uniform(0.0, 360.0)
        w = rng.uniform(5.0, 80.0)
        h = rng.uniform(5.0, 300.0)
        sm = rng.uniform(0.0, 0.5)
        sec = find_sector(rho, theta, w, h, sm)
        r_star = math.hypot(w, h) / 2.0 * (1.0 + sm)
        assert rasterized_circle_inside(sec, rho, theta, r_star)


def test_span_membership():
    sec = AnnulusSector(350.0, 10.0, 0.0, 100.0)
    assert sec.contains_span(355.0, 5.0)
    assert not sec.contains_span(5.0, 15.0)
    assert sec.overlaps_span(5.0, 15.0)
    assert not sec.overlaps_span(15.0, 25.0)


def test_bins_for_span_basic():
    assert bins_for_span(10.0, 11.0, 360) == [10]
    assert bins_for_span(0.0, 0.0, 360) == list(range(360))
    assert sorted(bins_for_span(359.5, 0.5, 360)) == [0, 359]


def test_bins_cover_circle_exactly():
    seen = []
    for b in range(360):
        seen.extend(bins_for_span(b * 1.0, (b + 1) * 1.0, 360))
    assert sorted(seen) == list(range(360))


def test_bin_edges_tile_the_circle():
    edges = [bin_edge(i, 360) for i in range(361)]
    assert edges[0] == 0 and edges[-1] == AZ_COUNTS
    assert all(b > a for a, b in zip(edges, edges[1:]))
