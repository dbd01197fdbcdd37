"""Synthetic tray dataset for tests and demos.

Three 160x120 trays hold 2, 3 and 4 rectangular foods (nine in total).
Predicted masks cover every food, each with a small interior hole, plus a
one-pixel speck that the small-region filter removes. Detections hit every
food with a confident box and add two false positives: a low-scoring
duplicate next to a food of the same class and a low-scoring box on empty
tray background.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detection import RawDetection
from .formats import LabelMap, TrayAnnotation, write_annotations, write_detections, write_labels, write_mask
from .geometry import BBox
from .metrics import GroundTruthItem

WIDTH, HEIGHT = 160, 120
LABELS = ("pasta", "mandarine", "bread", "salad", "yogurt", "apple")

# image id -> [(label index, (x0, y0, x1, y1)), ...]
TRAYS = {
    "tray_a": [(0, (10, 10, 60, 50)), (1, (90, 20, 130, 60))],
    "tray_b": [(2, (5, 5, 45, 45)), (3, (60, 10, 110, 50)), (1, (30, 70, 80, 110))],
    "tray_c": [(4, (10, 10, 40, 40)), (5, (50, 10, 80, 40)), (0, (90, 10, 150, 55)), (3, (10, 60, 60, 100))],
}
DUPLICATE = ("tray_b", 1, (2, 3))   # image, item index, (dx, dy) shift
BACKGROUND = ("tray_c", (110, 80, 150, 110), 2)  # image, box, class
CORRUPTED = ("tray_c", 3, 2)  # image, item index, wrong class

TRUE_PROB, TRUE_OBJECTNESS = 0.9, 0.8      # score 0.72
DUPLICATE_PROB, DUPLICATE_OBJECTNESS = 0.6, 0.5  # score 0.30
BACKGROUND_PROB, BACKGROUND_OBJECTNESS = 0.25, 0.2  # score 0.05


@dataclass
class Fixture:
    labels: LabelMap
    trays: list[TrayAnnotation]
    masks: dict[str, np.ndarray]
    detections: dict[str, list[RawDetection]]


def _probs(cls: int, p: float) -> tuple[float, ...]:
    rest = round((1.0 - p) / (len(LABELS) - 1), 6)
    return tuple(p if c == cls else rest for c in range(len(LABELS)))


def _raw(box, cls, prob, obj) -> RawDetection:
    return RawDetection(BBox(*box), obj, _probs(cls, prob))


def make_fixture(corrupt: bool = False) -> Fixture:
    labels = LabelMap(LABELS)
    trays, masks, dets = [], {}, {}
    for image_id, items in TRAYS.items():
        tray = TrayAnnotation(image_id, WIDTH, HEIGHT)
        mask = np.zeros((HEIGHT, WIDTH), dtype=bool)
        raws = []
        for k, (cls, (x0, y0, x1, y1)) in enumerate(items):
            polygon = np.array([[x0, y0], [x1 - 1, y0], [x1 - 1, y1 - 1], [x0, y1 - 1]])
            tray.items.append(GroundTruthItem(BBox(x0, y0, x1, y1), cls, polygon))
            mask[y0:y1, x0:x1] = True
            cy, cx = (y0 + y1) // 2, (x0 + x1) // 2
            mask[cy:cy + 2, cx:cx + 2] = False
            det_cls = CORRUPTED[2] if corrupt and (image_id, k) == CORRUPTED[:2] else cls
            raws.append(_raw((x0, y0, x1, y1), det_cls, TRUE_PROB, TRUE_OBJECTNESS))
            if (image_id, k) == DUPLICATE[:2]:
                dx, dy = DUPLICATE[2]
                raws.append(_raw((x0 + dx, y0 + dy, x1 + dx, y1 + dy), cls,
                                 DUPLICATE_PROB, DUPLICATE_OBJECTNESS))
        if image_id == BACKGROUND[0]:
            raws.append(_raw(BACKGROUND[1], BACKGROUND[2], BACKGROUND_PROB, BACKGROUND_OBJECTNESS))
        mask[HEIGHT - 3, 2] = True  # speck
        trays.append(tray)
        masks[image_id] = mask
        dets[image_id] = raws
    return Fixture(labels, trays, masks, dets)


def write_fixture(outdir, corrupt: bool = False) -> dict[str, Path]:
    """Write the fixture as files; returns the paths a run needs."""
    out = Path(outdir)
    fx = make_fixture(corrupt)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    paths = {
        "masks": out / "masks",
        "labels": out / "labels.txt",
        "annotations": out / "annotations.json",
        "detections": out / "detections.txt",
    }
    write_labels(fx.labels, paths["labels"])
    write_annotations(fx.trays, fx.labels, paths["annotations"])
    write_detections(fx.detections, paths["detections"])
    for image_id, mask in fx.masks.items():
        write_mask(mask, paths["masks"] / f"{image_id}.pgm")
    return paths
