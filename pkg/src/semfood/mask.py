"""Binary segmentation post-processing.

Foreground is 8-connected and background 4-connected. Masks are 2-D
boolean arrays indexed ``[row, column]``; points and boxes use ``(x, y)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from ._validation import check_binary_mask, check_fraction
from .geometry import BBox

EIGHT = np.ones((3, 3), dtype=bool)
FOUR = ndi.generate_binary_structure(2, 1)

DEFAULT_MIN_AREA_FRACTION = 0.001

# Clockwise neighbour offsets (dx, dy) with y pointing down, starting west.
_OFFSETS = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))
_DIRECTION = {off: i for i, off in enumerate(_OFFSETS)}


@dataclass(frozen=True, eq=False)
class Region:
    """A filled foreground region: exterior contour, tight box and area."""

    contour: np.ndarray
    bbox: BBox
    area: int

    def __repr__(self):
        return f"Region(bbox={tuple(self.bbox)}, area={self.area}, contour_len={len(self.contour)})"


def connected_components(mask) -> np.ndarray:
    """Label 8-connected foreground components 1..K in raster order of first pixel."""
    m = check_binary_mask(mask)
    labels, _ = ndi.label(m, structure=EIGHT)
    return labels


def _trace_padded(padded: np.ndarray, sy: int, sx: int) -> list[tuple[int, int]]:
    # ``padded`` carries a one-pixel background frame, so neighbour lookups
    # never leave the array. Coordinates returned are in padded space.
    #
    # Jacob's criterion: the trace is complete when the start pixel is left
    # again exactly as it was left the first time (same successor, same
    # backtrack). Comparing only the entry into the start pixel is not
    # enough: the initial westward entry of a raster-first pixel is virtual
    # and may never recur (e.g. a horizontal two-pixel region).
    width = padded.shape[1]
    cells = padded.tobytes()  # one byte per pixel; plain indexing is fast
    step = [dy * width + dx for dx, dy in _OFFSETS]
    # backtrack direction seen from the new pixel, for each move direction
    back = [_DIRECTION[(bdx - dx, bdy - dy)]
            for (dx, dy), (bdx, bdy) in zip(_OFFSETS, _OFFSETS[-1:] + _OFFSETS[:-1])]

    def move(p, d):
        for i in range(d + 1, d + 8):
            idx = i & 7
            q = p + step[idx]
            if cells[q]:
                return q, back[idx]
        return None

    start = sy * width + sx
    first = move(start, 0)  # raster-first: the west neighbour is background
    if first is None:
        return [(sx, sy)]
    path = [start]
    state = first
    limit = 8 * len(cells) + 8
    for _ in range(limit):
        p, d = state
        path.append(p)
        state = move(p, d)
        if state == first:
            if path[-1] == start:
                path.pop()
            return [(q % width, q // width) for q in path]
    raise RuntimeError("boundary tracing did not terminate")


def trace_boundary(mask, start) -> np.ndarray:
    """Trace the exterior boundary of the region containing ``start``.

    Moore-neighbour tracing, clockwise, stopped by Jacob's criterion.
    ``start`` must be the raster-first ``(x, y)`` pixel of its component.
    Returns an ``(n, 2)`` array of ``(x, y)`` points.
    """
    m = check_binary_mask(mask)
    x, y = int(start[0]), int(start[1])
    h, w = m.shape
    if not (0 <= x < w and 0 <= y < h) or not m[y, x]:
        raise ValueError(f"start point {(x, y)} is not a foreground pixel")
    if x > 0 and m[y, x - 1]:
        raise ValueError(f"start point {(x, y)} is not the raster-first pixel of its region")
    padded = np.pad(m, 1, constant_values=False)
    pts = _trace_padded(padded, y + 1, x + 1)
    return np.asarray(pts, dtype=np.int64) - 1


def fill_holes(mask) -> np.ndarray:
    """Fill background pixels that are not 4-connected to the image border."""
    m = check_binary_mask(mask)
    out = m.copy()
    rows = np.flatnonzero(m.any(axis=1))
    if len(rows) == 0:
        return out
    cols = np.flatnonzero(m.any(axis=0))
    r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    # Background outside the foreground's bounding box always reaches the
    # border, so only the box (with a one-pixel frame) needs labelling.
    window = np.pad(~m[r0:r1, c0:c1], 1, constant_values=True)
    bg, _ = ndi.label(window, structure=FOUR)
    outside = bg[0, 0]
    holes = (bg != outside) & (bg != 0)
    out[r0:r1, c0:c1] |= holes[1:-1, 1:-1]
    return out


def postprocess(mask, min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION) -> tuple[list[Region], np.ndarray]:
    """Fill holes, drop small regions and describe the rest.

    Returns the regions (ordered by raster-first pixel) together with a
    label mask holding region ``k`` as ``k + 1`` and 0 elsewhere.
    """
    m = check_binary_mask(mask)
    min_area_fraction = check_fraction(min_area_fraction, "min_area_fraction", high_open=True)
    labels, n = ndi.label(m, structure=EIGHT)
    threshold = min_area_fraction * m.size
    regions = []
    dropped = False
    # With 8-connected foreground and 4-connected background every hole is
    # enclosed by exactly one component, so holes are filled per component
    # inside its own box. Components sitting in a hole are absorbed by the
    # enclosing one, which always comes first in raster order.
    for k, sl in enumerate(ndi.find_objects(labels), start=1):
        if sl is None:
            continue
        crop = labels[sl]
        comp = crop == k
        if not comp.any():
            continue  # absorbed into an enclosing component
        if comp.shape[0] > 2 and comp.shape[1] > 2:
            window = np.pad(~comp, 1, constant_values=True)
            bg, _ = ndi.label(window, structure=FOUR)
            holes = (bg != bg[0, 0])[1:-1, 1:-1] & ~comp
            if holes.any():
                comp |= holes
                crop[comp] = k
        area = int(np.count_nonzero(comp))
        if area < threshold:
            crop[comp] = 0
            dropped = True
            continue
        if dropped:  # keep ids consecutive
            crop[comp] = len(regions) + 1
        y0, x0 = sl[0].start, sl[1].start
        first = int(np.argmax(comp[0]))  # top row of the crop always holds foreground
        padded = np.pad(comp, 1, constant_values=False)
        pts = np.asarray(_trace_padded(padded, 1, first + 1), dtype=np.int64)
        pts += (x0 - 1, y0 - 1)
        bbox = BBox(x0, y0, sl[1].stop, sl[0].stop)
        regions.append(Region(contour=pts, bbox=bbox, area=area))
    return regions, labels


def extract_regions(mask, min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION) -> list[Region]:
    """Fill holes, then describe every 8-connected region.

    Regions smaller than ``min_area_fraction`` of the image area are dropped.
    Output is ordered by each region's raster-first pixel.
    """
    return postprocess(mask, min_area_fraction)[0]


def region_label_mask(mask, min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION) -> np.ndarray:
    """Label mask of the regions ``extract_regions`` would keep, 1..K, 0 elsewhere."""
    return postprocess(mask, min_area_fraction)[1]
