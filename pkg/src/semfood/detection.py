"""Detector outputs, class-specific confidence scores and thresholding."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .geometry import BBox

MIN_CONFIDENCE = 1 / 65
MAX_CONFIDENCE = 1 / 2
# Confidence grid swept in the threshold study, from 1/65 up to 1/2.
THRESHOLD_GRID = (1 / 65, 1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2)


@dataclass(frozen=True)
class RawDetection:
    """A detector box before scoring.

    ``objectness`` holds the raw logit ``t_o`` when ``logit`` is true, and the
    already squashed probability otherwise.
    """

    bbox: BBox
    objectness: float
    class_probs: tuple[float, ...]
    logit: bool = False

    def __post_init__(self):
        object.__setattr__(self, "class_probs", tuple(float(p) for p in self.class_probs))
        if not self.class_probs:
            raise ValueError("class_probs must contain at least one class")
        if any(not 0.0 <= p <= 1.0 for p in self.class_probs):
            raise ValueError("class probabilities must lie in [0, 1]")
        if not math.isfinite(self.objectness):
            raise ValueError("objectness must be finite")
        if not self.logit and not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness probability {self.objectness} outside [0, 1]")

    @property
    def num_classes(self) -> int:
        return len(self.class_probs)


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    class_id: int
    score: float


def logistic(t: float) -> float:
    # Split on sign so exp never overflows.
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def confidence_score(raw: RawDetection) -> Detection:
    """Score the most probable class: ``Pr(class | object) * sigma(t_o)``.

    Ties between classes go to the lowest index.
    """
    probs = raw.class_probs
    best = max(range(len(probs)), key=lambda c: (probs[c], -c))
    sigma = logistic(raw.objectness) if raw.logit else raw.objectness
    return Detection(bbox=raw.bbox, class_id=best, score=probs[best] * sigma)


def score_all(raws: Iterable[RawDetection]) -> list[Detection]:
    return [confidence_score(r) for r in raws]


def filter_by_threshold(dets: Sequence[Detection], threshold: float) -> list[Detection]:
    """Keep detections scoring at least ``threshold`` (inclusive), in order."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return [d for d in dets if d.score >= threshold]
