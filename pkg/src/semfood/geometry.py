"""Integer pixel-grid primitives: boxes, contours and overlap measures.

Boxes are half-open, ``[x0, x1) x [y0, y1)``, so areas are exact pixel
counts. Contours are ``(n, 2)`` integer arrays of ``(x, y)`` points.
"""
from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np


class BBox(NamedTuple):
    """Axis-aligned box with inclusive top-left and exclusive bottom-right."""

    x0: int
    y0: int
    x1: int
    y1: int

    @classmethod
    def make(cls, x0, y0, x1, y1) -> "BBox":
        box = cls(int(x0), int(y0), int(x1), int(y1))
        if box.x0 >= box.x1 or box.y0 >= box.y1:
            raise ValueError(f"degenerate box {tuple(box)}")
        return box

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BBox":
        """Convert a float ``(x, y, w, h)`` box, rounding half away from zero.

        Negative origins are clipped to 0 and a box that rounds to zero width
        or height is widened to one pixel.
        """
        if not (w > 0 and h > 0):
            raise ValueError(f"box width/height must be positive, got w={w}, h={h}")
        x0 = max(0, round_half_away(x))
        y0 = max(0, round_half_away(y))
        x1 = max(x0 + 1, round_half_away(x + w))
        y1 = max(y0 + 1, round_half_away(y + h))
        return cls(x0, y0, x1, y1)

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def clip(self, width: int, height: int) -> "BBox | None":
        """Clip to an image; ``None`` when nothing is left."""
        x0, y0 = max(self.x0, 0), max(self.y0, 0)
        x1, y1 = min(self.x1, width), min(self.y1, height)
        if x0 >= x1 or y0 >= y1:
            return None
        return BBox(x0, y0, x1, y1)


def round_half_away(v: float) -> int:
    """Round to the nearest integer, ties away from zero (2.5 -> 3, -2.5 -> -3)."""
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


def box_area(b: BBox) -> int:
    return (b[2] - b[0]) * (b[3] - b[1])


def box_intersection_area(a: BBox, b: BBox) -> int:
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= 0 or h <= 0:
        return 0
    return w * h


def intersection_over_self(a: BBox, b: BBox) -> float:
    """Fraction of ``a``'s pixels that also lie in ``b``."""
    return box_intersection_area(a, b) / box_area(a)


def box_iou(a: BBox, b: BBox) -> float:
    inter = box_intersection_area(a, b)
    if inter == 0:
        return 0.0
    return inter / (box_area(a) + box_area(b) - inter)


def as_contour(points) -> np.ndarray:
    """Coerce a sequence of ``(x, y)`` points to an ``(n, 2)`` int array."""
    arr = np.asarray(points, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) == 0:
        raise ValueError("contour must be a non-empty sequence of (x, y) points")
    return arr


def box_intersects_contour(b: BBox, contour: Sequence | np.ndarray) -> bool:
    """True iff at least one contour pixel lies inside ``b``."""
    pts = as_contour(contour)
    xs, ys = pts[:, 0], pts[:, 1]
    inside = (xs >= b[0]) & (xs < b[2]) & (ys >= b[1]) & (ys < b[3])
    return bool(inside.any())


def points_bbox(points) -> BBox:
    """Tightest box containing every point."""
    pts = as_contour(points)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0) + 1
    return BBox(int(x0), int(y0), int(x1), int(y1))
