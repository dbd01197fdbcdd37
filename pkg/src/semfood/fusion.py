"""Fusing detector boxes with segmentation evidence.

Two stages run after scoring: background removal discards low-confidence
boxes that no segmented region supports, then per-class greedy
non-maximum suppression discards duplicates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._validation import check_choice, check_fraction
from .detection import MIN_CONFIDENCE, Detection, RawDetection, filter_by_threshold, score_all
from .geometry import BBox, as_contour, box_intersects_contour, box_iou, intersection_over_self
from .mask import DEFAULT_MIN_AREA_FRACTION, Region, extract_regions

NMS_MODES = ("self", "union")
BACKGROUND_MODES = ("product", "max")


@dataclass(frozen=True)
class SegmentationEvidence:
    """Region boxes and their exterior contours, index-aligned."""

    boxes: tuple[BBox, ...] = ()
    contours: tuple[np.ndarray, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "contours", tuple(as_contour(c) for c in self.contours))
        if len(self.boxes) != len(self.contours):
            raise ValueError("boxes and contours must have equal length")

    @classmethod
    def from_regions(cls, regions: Sequence[Region]) -> "SegmentationEvidence":
        return cls(boxes=[r.bbox for r in regions], contours=[r.contour for r in regions])

    def __len__(self):
        return len(self.boxes)


@dataclass(frozen=True)
class FusionConfig:
    background_threshold: float = 0.5
    nms_overlap: float = 0.5
    confidence_threshold: float = MIN_CONFIDENCE
    nms_mode: str = "self"
    background_mode: str = "product"

    def __post_init__(self):
        check_fraction(self.background_threshold, "background_threshold")
        check_fraction(self.nms_overlap, "nms_overlap")
        check_fraction(self.confidence_threshold, "confidence_threshold")
        check_choice(self.nms_mode, "nms_mode", NMS_MODES)
        check_choice(self.background_mode, "background_mode", BACKGROUND_MODES)


def prob_false_by_boxes(b: BBox, boxes: Sequence[BBox]) -> float:
    """Smallest fraction of ``b`` lying outside any single region box (1 if none)."""
    if not boxes:
        return 1.0
    return min(1.0 - intersection_over_self(b, s) for s in boxes)


def prob_false_by_contours(b: BBox, contours: Sequence) -> float:
    """0 if ``b`` touches any region contour, else 1."""
    return 0.0 if any(box_intersects_contour(b, c) for c in contours) else 1.0


def prob_background(det: Detection, evidence: SegmentationEvidence, mode: str = "product") -> float:
    by_boxes = prob_false_by_boxes(det.bbox, evidence.boxes)
    by_contours = prob_false_by_contours(det.bbox, evidence.contours)
    if mode == "product":
        unsupported = by_boxes * by_contours
    elif mode == "max":
        unsupported = max(by_boxes, by_contours)
    else:
        raise ValueError(f"unknown background mode {mode!r}")
    return min(1.0 - det.score, unsupported)


def background_removal(
    dets: Sequence[Detection],
    evidence: SegmentationEvidence,
    threshold: float = 0.5,
    mode: str = "product",
) -> list[Detection]:
    """Drop detections whose background probability is strictly above ``threshold``."""
    check_fraction(threshold, "threshold")
    return [d for d in dets if prob_background(d, evidence, mode) <= threshold]


def _self_overlap(a: BBox, b: BBox) -> float:
    """Larger of the two intersection-over-self ratios (intersection over the smaller box)."""
    return max(intersection_over_self(a, b), intersection_over_self(b, a))


def nms(dets: Sequence[Detection], overlap: float = 0.5, mode: str = "self") -> list[Detection]:
    """Greedy per-class non-maximum suppression.

    With ``mode="self"`` a candidate is dropped when the intersection with an
    already kept box covers more than ``overlap`` of either box's own area,
    so no kept pair overlaps beyond the cutoff in either direction; a small
    box inside a larger one is a duplicate whichever scored higher.
    ``mode="union"`` uses IoU. Output is grouped by ascending class,
    score-descending within a class.
    """
    check_fraction(overlap, "overlap")
    measure = {"self": _self_overlap, "union": box_iou}[check_choice(mode, "mode", NMS_MODES)]
    by_class: dict[int, list[Detection]] = {}
    for d in dets:
        by_class.setdefault(d.class_id, []).append(d)
    out = []
    for c in sorted(by_class):
        kept: list[Detection] = []
        # sorted() is stable, so equal scores keep input order
        for cand in sorted(by_class[c], key=lambda d: -d.score):
            if all(measure(cand.bbox, k.bbox) <= overlap for k in kept):
                kept.append(cand)
        out.extend(kept)
    return out


def semantic_food_detection(
    raw: Sequence[RawDetection],
    mask=None,
    config: FusionConfig | None = None,
    min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION,
    *,
    regions: Sequence[Region] | None = None,
) -> list[Detection]:
    """Score, threshold, remove background boxes and suppress duplicates.

    Segmentation evidence comes from ``regions`` when given, otherwise it is
    extracted from the binary ``mask``.
    """
    cfg = config or FusionConfig()
    dets = filter_by_threshold(score_all(raw), cfg.confidence_threshold)
    if not dets:
        return []
    if regions is None:
        if mask is None:
            raise ValueError("either mask or regions is required")
        regions = extract_regions(mask, min_area_fraction)
    evidence = SegmentationEvidence.from_regions(regions)
    dets = background_removal(dets, evidence, cfg.background_threshold, cfg.background_mode)
    return nms(dets, cfg.nms_overlap, cfg.nms_mode)
