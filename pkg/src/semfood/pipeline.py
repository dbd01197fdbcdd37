"""End-to-end runs: read inputs, fuse per image, evaluate, report."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from skimage.draw import polygon as fill_polygon
from skimage.draw import polygon_perimeter

from ._validation import check_choice, check_fraction
from .detection import THRESHOLD_GRID, Detection, RawDetection, filter_by_threshold, score_all
from .formats import (
    LabelMap,
    TrayAnnotation,
    read_annotations,
    read_detections,
    read_labels,
    read_mask,
)
from .fusion import BACKGROUND_MODES, NMS_MODES, FusionConfig, semantic_food_detection
from .mask import DEFAULT_MIN_AREA_FRACTION, Region, postprocess
from .metrics import EvalReport, ImageEvaluation, MatchResult, evaluate, recall_by_tray_size

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PARTIAL = 2


@dataclass(frozen=True)
class RunConfig:
    masks: str | None = None
    detections: str | None = None
    annotations: str | None = None
    labels: str | None = None
    confidence_threshold: float = 1 / 65
    background_threshold: float = 0.5
    nms_overlap: float = 0.5
    nms_mode: str = "self"
    background_mode: str = "product"
    min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION
    match_iou: float = 0.5
    beta: float = 2.0
    logit: bool = False
    allow_unknown: bool = False
    jobs: int = 1

    def __post_init__(self):
        check_fraction(self.min_area_fraction, "min_area_fraction", high_open=True)
        check_fraction(self.match_iou, "match_iou")
        if self.match_iou == 0:
            raise ValueError("match_iou must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        check_choice(self.nms_mode, "nms_mode", NMS_MODES)
        check_choice(self.background_mode, "background_mode", BACKGROUND_MODES)
        self.fusion  # validates the remaining ratios

    @property
    def fusion(self) -> FusionConfig:
        return FusionConfig(
            background_threshold=self.background_threshold,
            nms_overlap=self.nms_overlap,
            confidence_threshold=self.confidence_threshold,
            nms_mode=self.nms_mode,
            background_mode=self.background_mode,
        )

    def describe(self) -> dict:
        """Settings that influence results (paths and worker count excluded)."""
        d = asdict(self)
        for key in ("masks", "detections", "annotations", "labels", "jobs"):
            d.pop(key)
        return d


@dataclass
class ImageInputs:
    """One tray's inputs, with the segmentation side already post-processed."""

    annotation: TrayAnnotation
    mask: np.ndarray
    raw: list[RawDetection]
    regions: list[Region]
    seg_regions: np.ndarray
    gt_regions: np.ndarray


@dataclass
class Dataset:
    labels: LabelMap
    images: list[ImageInputs]
    problems: list[str] = field(default_factory=list)


@dataclass
class PipelineResult:
    report: EvalReport
    detections: dict[str, list[Detection]]
    matches: list[MatchResult]
    by_tray_size: dict[int, tuple[float, float]]
    problems: list[str]
    config: RunConfig

    @property
    def exit_code(self) -> int:
        return EXIT_PARTIAL if self.problems else EXIT_OK

    def document(self) -> dict:
        tp = sum(len(m.tp) for m in self.matches)
        fp = sum(len(m.fp) for m in self.matches)
        fn = sum(len(m.fn) for m in self.matches)
        return {
            "metrics": self.report.to_dict(),
            "counts": {
                "images": len(self.matches),
                "detections": sum(len(d) for d in self.detections.values()),
                "ground_truth": tp + fn,
                "true_positives": tp,
                "false_positives": fp,
                "false_negatives": fn,
            },
            "recall_by_tray_size": {
                str(k): {"recall": r, "tray_accuracy": ta} for k, (r, ta) in self.by_tray_size.items()
            },
            "config": self.config.describe(),
            "problems": list(self.problems),
        }


def rasterize_items(tray: TrayAnnotation) -> np.ndarray:
    """Ground-truth region map: item ``k`` painted as ``k + 1``, later items on top."""
    out = np.zeros((tray.height, tray.width), dtype=np.int64)
    shape = out.shape
    for k, item in enumerate(tray.items, start=1):
        if item.polygon is not None and len(item.polygon) >= 3:
            xs, ys = item.polygon[:, 0], item.polygon[:, 1]
            rr, cc = fill_polygon(ys, xs, shape=shape)
            out[rr, cc] = k
            rr, cc = polygon_perimeter(ys, xs, shape=shape, clip=True)
            out[rr, cc] = k
        elif item.polygon is not None:
            out[item.polygon[:, 1], item.polygon[:, 0]] = k
        else:
            b = item.bbox
            out[b.y0:b.y1, b.x0:b.x1] = k
    return out


def clip_detections(raws: Sequence[RawDetection], width: int, height: int) -> list[RawDetection]:
    out = []
    for r in raws:
        box = r.bbox.clip(width, height)
        if box is not None:
            out.append(r if box == r.bbox else replace(r, bbox=box))
    return out


def prepare_image(tray: TrayAnnotation, mask: np.ndarray, raw: Sequence[RawDetection],
                  min_area_fraction: float) -> ImageInputs:
    regions, seg_regions = postprocess(mask, min_area_fraction)
    return ImageInputs(
        annotation=tray,
        mask=mask,
        raw=clip_detections(raw, tray.width, tray.height),
        regions=regions,
        seg_regions=seg_regions,
        gt_regions=rasterize_items(tray),
    )


def _map(fn, items, jobs):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def load_dataset(cfg: RunConfig) -> Dataset:
    """Read and pair every input; unpaired images are reported, not fatal."""
    if not (cfg.masks and cfg.annotations and cfg.labels):
        raise ValueError("masks, annotations and labels are required")
    labels = read_labels(cfg.labels)
    trays = read_annotations(cfg.annotations, labels, cfg.allow_unknown)
    raw = read_detections(cfg.detections, cfg.logit) if cfg.detections else {}
    mask_dir = Path(cfg.masks)
    problems = []

    known = {t.image_id for t in trays}
    for image_id in sorted(set(raw) - known):
        problems.append(f"{image_id}: detections without an annotation")
    for p in sorted(mask_dir.glob("*.pgm")):
        if p.stem not in known:
            problems.append(f"{p.stem}: mask without an annotation")

    def load(tray: TrayAnnotation):
        path = mask_dir / f"{tray.image_id}.pgm"
        if not path.exists():
            return None, f"{tray.image_id}: no mask file {path.name}"
        mask = read_mask(path)
        if mask.shape != (tray.height, tray.width):
            return None, (f"{tray.image_id}: mask is {mask.shape[1]}x{mask.shape[0]}, "
                          f"annotation says {tray.width}x{tray.height}")
        return prepare_image(tray, mask, raw.get(tray.image_id, []), cfg.min_area_fraction), None

    images = []
    for inputs, problem in _map(load, sorted(trays, key=lambda t: t.image_id), cfg.jobs):
        if problem:
            problems.append(problem)
        else:
            images.append(inputs)
    problems.sort()
    return Dataset(labels=labels, images=images, problems=problems)


def fuse_image(im: ImageInputs, fusion: FusionConfig) -> list[Detection]:
    return semantic_food_detection(im.raw, config=fusion, regions=im.regions)


def baseline_image(im: ImageInputs, fusion: FusionConfig) -> list[Detection]:
    """Detector output with only the confidence threshold applied."""
    return filter_by_threshold(score_all(im.raw), fusion.confidence_threshold)


def evaluate_images(images: Sequence[ImageInputs], dets: Sequence[Sequence[Detection]], cfg: RunConfig,
                    num_classes: int | None = None):
    samples = [
        ImageEvaluation(
            detections=d,
            ground_truth=im.annotation.items,
            target_pixels=im.gt_regions > 0,
            predicted_pixels=im.mask,
            gt_regions=im.gt_regions,
            seg_regions=im.seg_regions,
        )
        for im, d in zip(images, dets)
    ]
    return evaluate(samples, iou_threshold=cfg.match_iou, beta=cfg.beta, num_classes=num_classes)


def run_on_dataset(data: Dataset, cfg: RunConfig, fuse: bool = True) -> PipelineResult:
    if not data.images:
        raise ValueError("no image could be paired with its mask and annotation")
    stage = fuse_image if fuse else baseline_image
    fusion = cfg.fusion
    dets = _map(lambda im: stage(im, fusion), data.images, cfg.jobs)
    num_classes = len(data.labels) + (1 if cfg.allow_unknown else 0)
    report, matches = evaluate_images(data.images, dets, cfg, num_classes)
    return PipelineResult(
        report=report,
        detections={im.annotation.image_id: d for im, d in zip(data.images, dets)},
        matches=matches,
        by_tray_size=recall_by_tray_size(matches),
        problems=list(data.problems),
        config=cfg,
    )


def run_pipeline(cfg: RunConfig) -> PipelineResult:
    """Segmentation post-processing, fusion and evaluation over a dataset."""
    data = load_dataset(cfg)
    result = run_on_dataset(data, cfg)
    log.info("processed %d images, %d problems", len(data.images), len(data.problems))
    return result


def sweep(cfg: RunConfig, thresholds: Sequence[float] = THRESHOLD_GRID, data: Dataset | None = None) -> list[dict]:
    """Compare thresholded detector output with fused output over a threshold grid."""
    data = data or load_dataset(cfg)
    rows = []
    for t in thresholds:
        tcfg = replace(cfg, confidence_threshold=t)
        row = {"threshold": t}
        for name, fuse in (("detector", False), ("fused", True)):
            res = run_on_dataset(data, tcfg, fuse=fuse)
            r = res.report
            row[name] = {
                "detections": sum(len(d) for d in res.detections.values()),
                "precision": r.precision,
                "recall": r.recall,
                "maa": r.maa,
                "tray_accuracy": r.tray_accuracy,
                "f2": r.f2,
            }
        rows.append(row)
    return rows
