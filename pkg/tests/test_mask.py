import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semfood.mask import (
    connected_components,
    extract_regions,
    fill_holes,
    region_label_mask,
    trace_boundary,
)

from . import oracles

masks = st.tuples(st.integers(1, 14), st.integers(1, 14)).flatmap(
    lambda shape: arrays(bool, shape))


def donut(n=5):
    m = np.ones((n, n), dtype=bool)
    m[1:-1, 1:-1] = False
    return m


def perimeter(n):
    """Clockwise perimeter of an n x n square at the origin, from (0, 0)."""
    top = [(x, 0) for x in range(n)]
    right = [(n - 1, y) for y in range(1, n)]
    bottom = [(x, n - 1) for x in range(n - 2, -1, -1)]
    left = [(0, y) for y in range(n - 2, 0, -1)]
    return top + right + bottom + left


# -------------------------------------------------------------- components

def test_components_empty():
    assert not connected_components(np.zeros((4, 4), bool)).any()


def test_components_diagonal_touch_is_one():
    m = np.array([[1, 0], [0, 1]], dtype=bool)
    assert set(np.unique(connected_components(m))) == {0, 1}


def test_components_raster_order():
    m = np.zeros((4, 5), bool)
    m[2:4, 0:2] = True   # first pixel at row 2
    m[0:3, 3:5] = True   # first pixel at row 0
    lab = connected_components(m)
    assert lab[0, 3] == 1 and lab[2, 0] == 2


@settings(max_examples=150)
@given(masks)
def test_components_match_bfs(m):
    np.testing.assert_array_equal(connected_components(m), oracles.components(m))


# ----------------------------------------------------------------- tracing

def test_trace_single_pixel():
    m = np.zeros((5, 5), bool)
    m[2, 2] = True
    assert trace_boundary(m, (2, 2)).tolist() == [[2, 2]]


def test_trace_solid_square():
    m = np.zeros((5, 5), bool)
    m[:3, :3] = True
    c = trace_boundary(m, (0, 0))
    assert [tuple(p) for p in c] == perimeter(3)
    assert (1, 1) not in {tuple(p) for p in c}


def test_trace_donut_exterior_only():
    c = trace_boundary(donut(), (0, 0))
    assert [tuple(p) for p in c] == perimeter(5)
    assert len(c) == 16


def test_trace_border_touching_region():
    m = np.zeros((4, 6), bool)
    m[:, 3:] = True
    c = trace_boundary(m, (3, 0))
    assert {tuple(p) for p in c} == {(x, y) for x in range(3, 6) for y in range(4)
                                     if x in (3, 5) or y in (0, 3)}


def test_trace_thin_appendix_is_not_cut_short():
    # A one-pixel spur hanging off the start pixel: naive "stop when the start
    # is revisited" would end the trace before walking the spur's far side.
    m = np.zeros((5, 5), bool)
    m[0, 0:3] = True
    m[1:4, 1] = True
    c = [tuple(p) for p in trace_boundary(m, (0, 0))]
    assert set(c) == {(0, 0), (1, 0), (2, 0), (1, 1), (1, 2), (1, 3)}
    assert c[0] == (0, 0)
    assert len(c) > len(set(c))  # the spur is walked out and back


def test_trace_rejects_background_start():
    with pytest.raises(ValueError):
        trace_boundary(np.zeros((3, 3), bool), (1, 1))


def _outer_boundary_pixels(m):
    """Foreground pixels 4-adjacent to border-connected background (padded)."""
    padded = np.pad(m, 1)
    outside = oracles.outside_background(padded)
    h, w = padded.shape
    out = set()
    for y in range(h):
        for x in range(w):
            if padded[y, x] and any(outside[y + dy, x + dx] for dy, dx in oracles.N4):
                out.add((x - 1, y - 1))
    return out


@settings(max_examples=300)
@given(masks)
def test_trace_visits_exactly_the_outer_boundary(m):
    labels = oracles.components(m)
    for k in range(1, labels.max() + 1):
        comp = labels == k
        ys, xs = np.nonzero(comp)
        start = (xs[0], ys[0])
        c = trace_boundary(comp, start)
        pts = [tuple(p) for p in c]
        # closed chain of 8-neighbours without immediate repeats
        for a, b in zip(pts, pts[1:] + pts[:1]):
            if len(pts) > 1:
                assert a != b and max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1
        for x, y in pts:
            assert comp[y, x]
        assert set(pts) == _outer_boundary_pixels(comp)


# ------------------------------------------------------------ hole filling

def test_fill_holes_examples():
    solid = np.zeros((6, 6), bool)
    solid[1:4, 1:5] = True
    np.testing.assert_array_equal(fill_holes(solid), solid)
    assert fill_holes(donut()).all()
    channel = donut()
    channel[2, 0] = channel[2, 1] = False  # opens the hole to the border
    channel[2, 2] = False
    np.testing.assert_array_equal(fill_holes(channel), channel)


def test_diagonal_gap_does_not_leak():
    # background is 4-connected, so a hole whose only exit is diagonal is filled
    m = np.array([
        [0, 0, 0, 0, 0],
        [0, 1, 1, 1, 0],
        [0, 1, 0, 1, 0],
        [0, 1, 1, 0, 0],
        [0, 0, 0, 0, 0],
    ], dtype=bool)
    assert fill_holes(m)[2, 2]


@settings(max_examples=200)
@given(masks)
def test_fill_holes_matches_flood_fill(m):
    filled = fill_holes(m)
    np.testing.assert_array_equal(filled, oracles.fill_holes(m))
    assert (filled >= m).all()
    np.testing.assert_array_equal(fill_holes(filled), filled)


# ------------------------------------------------------- region extraction

def test_extract_small_region_filter():
    m = np.zeros((100, 100), bool)
    m[10:20, 10:20] = True
    m[80, 80] = True
    regions = extract_regions(m, 0.001)
    assert [r.area for r in regions] == [100]
    assert [r.area for r in extract_regions(m, 0.0)] == [100, 1]
    assert extract_regions(np.zeros((8, 8), bool), 0.001) == []


def test_extract_regions_fills_donut():
    (r,) = extract_regions(donut(), 0.0)
    assert r.area == 25 and tuple(r.bbox) == (0, 0, 5, 5) and len(r.contour) == 16


@settings(max_examples=150)
@given(masks)
def test_regions_against_component_scan(m):
    filled = oracles.fill_holes(m)
    labels = oracles.components(filled)
    regions = extract_regions(m, 0.0)
    assert len(regions) == labels.max()
    assert sum(r.area for r in regions) == filled.sum()
    for k, r in enumerate(regions, start=1):
        ys, xs = np.nonzero(labels == k)
        assert tuple(r.bbox) == (xs.min(), ys.min(), xs.max() + 1, ys.max() + 1)
        assert r.area == len(xs)
        for x, y in r.contour:
            assert r.bbox.x0 <= x < r.bbox.x1 and r.bbox.y0 <= y < r.bbox.y1
            assert labels[y, x] == k


@settings(max_examples=100)
@given(masks, st.sampled_from([0.0, 0.01, 0.05, 0.2]))
def test_region_label_mask_agrees_with_regions(m, frac):
    regions = extract_regions(m, frac)
    lab = region_label_mask(m, frac)
    assert lab.max() == len(regions)
    for k, r in enumerate(regions, start=1):
        assert (lab == k).sum() == r.area


def test_rejects_non_binary_and_bad_fraction():
    with pytest.raises(ValueError):
        fill_holes(np.array([[0.2, 0.7]]))
    with pytest.raises(ValueError):
        extract_regions(np.zeros((3, 3), bool), 1.0)
