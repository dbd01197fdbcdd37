"""Segmentation and detection evaluation measures.

Pixel-wise: global accuracy and per-class IoU (Jaccard).
Region-based: covering, Rand index and variation of information, each
computed per image from the joint label contingency table.
Detection: greedy matching, precision/recall/F-beta, macro average
accuracy (MAA) and tray accuracy (TA).
"""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._validation import check_label_mask, check_same_shape
from .detection import Detection
from .geometry import BBox, box_iou

_DENSE_TABLE_LIMIT = 1 << 24


# ---------------------------------------------------------------- pixel-wise

def global_pixel_accuracy(target, pred) -> float:
    t, p = check_label_mask(target, "target"), check_label_mask(pred, "pred")
    check_same_shape(t, p)
    return float(np.count_nonzero(t == p)) / t.size


def _class_counts(t, p, c):
    tc, pc = t == c, p == c
    return int(np.count_nonzero(tc & pc)), int(np.count_nonzero(tc | pc))


def class_iou(target, pred, c: int) -> float:
    """Jaccard index of class ``c``; 1.0 when ``c`` is absent from both masks."""
    t, p = check_label_mask(target, "target"), check_label_mask(pred, "pred")
    check_same_shape(t, p)
    inter, union = _class_counts(t, p, c)
    return 1.0 if union == 0 else inter / union


def per_class_iou(target, pred, classes: Sequence[int] | None = None) -> dict[int, float]:
    """IoU for every class present in ``target`` or ``pred`` (restricted to ``classes``)."""
    t, p = check_label_mask(target, "target"), check_label_mask(pred, "pred")
    check_same_shape(t, p)
    present = set(np.unique(t).tolist()) | set(np.unique(p).tolist())
    if classes is not None:
        present &= set(int(c) for c in classes)
    out = {}
    for c in sorted(present):
        inter, union = _class_counts(t, p, c)
        out[int(c)] = inter / union
    return out


def mean_iou(target, pred, classes: Sequence[int] | None = None) -> float:
    ious = per_class_iou(target, pred, classes)
    if not ious:
        return 1.0
    return float(np.mean(list(ious.values())))


# ------------------------------------------------------------- region-based

def _compact(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Map labels to small indices. Small label ranges are used as they are."""
    flat = labels.ravel()
    top = int(flat.max()) if flat.size else 0
    if top < 1 << 16 or top < flat.size:
        # empty rows/columns in the table are harmless for every measure
        return flat, top + 1
    uniq, inv = np.unique(flat, return_inverse=True)
    return inv.ravel(), len(uniq)


@dataclass(frozen=True)
class Contingency:
    """Non-zero cells of the joint label table of two partitions."""

    rows: np.ndarray     # region index in the first partition, per cell
    cols: np.ndarray     # region index in the second partition, per cell
    counts: np.ndarray   # pixels in the cell
    row_sums: np.ndarray
    col_sums: np.ndarray

    @property
    def n(self) -> int:
        return int(self.row_sums.sum())


def contingency(a, b) -> Contingency:
    a, b = check_label_mask(a, "a"), check_label_mask(b, "b")
    check_same_shape(a, b)
    ia, ka = _compact(a)
    ib, kb = _compact(b)
    key = ia.astype(np.int64)  # always a fresh array, so in-place updates are safe
    key *= kb
    key += ib
    if ka * kb <= _DENSE_TABLE_LIMIT:
        table = np.bincount(key, minlength=ka * kb)
        cells = np.flatnonzero(table)
        counts = table[cells]
    else:
        cells, counts = np.unique(key, return_counts=True)
    rows, cols = np.divmod(cells, kb)
    row_sums = np.bincount(rows, weights=counts, minlength=ka).astype(np.int64)
    col_sums = np.bincount(cols, weights=counts, minlength=kb).astype(np.int64)
    return Contingency(rows, cols, counts.astype(np.int64), row_sums, col_sums)


def covering(seg, gt) -> float:
    """Covering of the ground-truth regions by the segmentation.

    Each ground-truth region contributes its size times its best IoU with
    any segmented region; the sum is divided by the pixel count.
    """
    return _covering(contingency(seg, gt))


def _covering(table: Contingency) -> float:
    inter = table.counts.astype(np.float64)
    union = table.row_sums[table.rows] + table.col_sums[table.cols] - table.counts
    iou = inter / union
    best = np.zeros(len(table.col_sums))
    np.maximum.at(best, table.cols, iou)
    return float(np.dot(table.col_sums, best) / table.n)


def _pairs(x: np.ndarray) -> int:
    x = x.astype(np.int64)
    return int((x * (x - 1) // 2).sum())


def rand_index_counts(seg, gt) -> tuple[int, int]:
    """``(agreeing pairs, total pairs)`` between two partitions, exactly."""
    return _rand_counts(contingency(seg, gt))


def _rand_counts(table: Contingency) -> tuple[int, int]:
    n = table.n
    total = n * (n - 1) // 2
    same_both = _pairs(table.counts)
    same_seg = _pairs(table.row_sums)
    same_gt = _pairs(table.col_sums)
    different_both = total - same_seg - same_gt + same_both
    return same_both + different_both, total


def rand_index(seg, gt) -> float:
    agree, total = rand_index_counts(seg, gt)
    if total == 0:
        raise ValueError("rand index needs at least two pixels")
    return agree / total


def entropy(labels) -> float:
    """Shannon entropy (nats) of the empirical label distribution."""
    compact, _ = _compact(check_label_mask(labels))
    counts = np.bincount(compact).astype(np.float64)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def mutual_information(seg, gt) -> float:
    table = contingency(seg, gt)
    n = table.n
    nij = table.counts.astype(np.float64)
    ai = table.row_sums[table.rows].astype(np.float64)
    bj = table.col_sums[table.cols].astype(np.float64)
    return float(max(0.0, (nij / n * np.log(nij * n / (ai * bj))).sum()))


def variation_of_information(seg, gt) -> float:
    """``H(S) + H(GT) - 2 MI(S, GT)`` in nats, via the two conditional entropies."""
    return _variation(contingency(seg, gt))


def _variation(table: Contingency) -> float:
    n = table.n
    nij = table.counts.astype(np.float64)
    ai = table.row_sums[table.rows].astype(np.float64)
    bj = table.col_sums[table.cols].astype(np.float64)
    h_seg_given_gt = -(nij / n * np.log(nij / bj)).sum()
    h_gt_given_seg = -(nij / n * np.log(nij / ai)).sum()
    return float(max(0.0, h_seg_given_gt + h_gt_given_seg))


def region_scores(seg, gt) -> tuple[float, float, float]:
    """``(covering, rand index, variation of information)`` from one table."""
    table = contingency(seg, gt)
    agree, total = _rand_counts(table)
    if total == 0:
        raise ValueError("rand index needs at least two pixels")
    return _covering(table), agree / total, _variation(table)


def _class_overlaps(t: np.ndarray, p: np.ndarray) -> tuple[int, dict[int, int], dict[int, int]]:
    """Correct pixel count and per-class intersection/union pixel counts."""
    ka = int(t.max()) + 1 if t.size else 1
    kb = int(p.max()) + 1 if p.size else 1
    k = max(ka, kb)
    if k <= 2:
        # binary maps: four counts, no joint table needed
        tb = t if t.dtype == bool else t != 0
        pb = p if p.dtype == bool else p != 0
        both = int(np.count_nonzero(tb & pb))
        nt, np_ = int(np.count_nonzero(tb)), int(np.count_nonzero(pb))
        neither = t.size - nt - np_ + both
        inter = {0: neither, 1: both}
        union = {0: t.size - both, 1: nt + np_ - both}
        present = [c for c in (0, 1) if union[c]]
        return (both + neither, {c: inter[c] for c in present}, {c: union[c] for c in present})
    if k * k <= _DENSE_TABLE_LIMIT:
        table = np.bincount((t.ravel().astype(np.int64) * k + p.ravel()), minlength=k * k).reshape(k, k)
        diag = np.diagonal(table).astype(np.int64)
        union = table.sum(axis=1) + table.sum(axis=0) - diag
        present = np.flatnonzero(union)
        return (int(diag.sum()), {int(c): int(diag[c]) for c in present},
                {int(c): int(union[c]) for c in present})
    inter, union = {}, {}
    for c in sorted(set(np.unique(t).tolist()) | set(np.unique(p).tolist())):
        inter[c], union[c] = _class_counts(t, p, c)
    return int(np.count_nonzero(t == p)), inter, union


# ---------------------------------------------------------------- detection

@dataclass(frozen=True)
class GroundTruthItem:
    bbox: BBox
    class_id: int
    polygon: np.ndarray | None = field(default=None, compare=False)


@dataclass
class MatchResult:
    tp: list[tuple[int, int]] = field(default_factory=list)
    fp: list[int] = field(default_factory=list)
    fn: list[int] = field(default_factory=list)

    @property
    def num_ground_truth(self) -> int:
        return len(self.tp) + len(self.fn)


def match_detections(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthItem],
    iou_threshold: float = 0.5,
) -> MatchResult:
    """Greedy score-descending matching to same-class ground truth.

    Each prediction takes the unmatched ground-truth item of its class with
    the highest box IoU, provided that IoU reaches ``iou_threshold``.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    taken = [False] * len(gts)
    result = MatchResult()
    for i in order:
        p = preds[i]
        best, best_iou = -1, iou_threshold
        for j, g in enumerate(gts):
            if taken[j] or g.class_id != p.class_id:
                continue
            iou = box_iou(p.bbox, g.bbox)
            if iou >= best_iou and (best < 0 or iou > best_iou):
                best, best_iou = j, iou
        if best >= 0:
            taken[best] = True
            result.tp.append((i, best))
        else:
            result.fp.append(i)
    result.tp.sort()
    result.fp.sort()
    result.fn = [j for j, t in enumerate(taken) if not t]
    return result


def fbeta(precision: float, recall: float, beta: float = 2.0) -> float:
    if beta <= 0:
        raise ValueError("beta must be positive")
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0:
        return 0.0
    return (1 + b2) * precision * recall / denom


def precision_recall_fbeta_counts(tp: int, fp: int, fn: int, beta: float = 2.0) -> tuple[float, float, float]:
    """Precision, recall and F-beta from raw counts.

    No predictions: precision is 1 when there is no ground truth either,
    else 0. No ground truth: recall is 1.
    """
    if tp + fp == 0:
        precision = 1.0 if tp + fn == 0 else 0.0
    else:
        precision = tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    return precision, recall, fbeta(precision, recall, beta)


def precision_recall_fbeta(match: MatchResult | Sequence[MatchResult], beta: float = 2.0):
    """Pooled (micro) precision, recall and F-beta over one or many match results."""
    matches = [match] if isinstance(match, MatchResult) else list(match)
    tp = sum(len(m.tp) for m in matches)
    fp = sum(len(m.fp) for m in matches)
    fn = sum(len(m.fn) for m in matches)
    return precision_recall_fbeta_counts(tp, fp, fn, beta)


def class_hits(match: MatchResult, gts: Sequence[GroundTruthItem]) -> tuple[Counter, Counter]:
    """Per-class ``(correct, total)`` ground-truth counts."""
    total = Counter(g.class_id for g in gts)
    correct = Counter(gts[j].class_id for _, j in match.tp)
    return correct, total


def macro_average_accuracy(match, gts, num_classes: int | None = None) -> float:
    """Mean per-class recall over the classes that have ground truth.

    ``match``/``gts`` are either a single image's result and items, or
    equal-length sequences of them for a whole dataset.
    """
    if isinstance(match, MatchResult):
        match, gts = [match], [gts]
    correct, total = Counter(), Counter()
    for m, g in zip(match, gts, strict=True):
        c, t = class_hits(m, g)
        correct.update(c)
        total.update(t)
    if num_classes is not None:
        if num_classes < 1:
            raise ValueError("num_classes must be at least 1")
        stray = [c for c in total if not 0 <= c < num_classes]
        if stray:
            raise ValueError(f"ground-truth classes {stray} outside [0, {num_classes})")
    if not total:
        return 1.0
    return float(np.mean([correct[c] / total[c] for c in sorted(total)]))


def _tray_correct(m: MatchResult) -> bool:
    # false positives do not matter; a tray with no food counts as correct
    return not m.fn


def tray_accuracy(per_tray: Sequence[MatchResult]) -> float:
    """Fraction of trays whose every ground-truth item was recognised."""
    if not per_tray:
        raise ValueError("tray accuracy needs at least one tray")
    return sum(_tray_correct(m) for m in per_tray) / len(per_tray)


def recall_by_tray_size(per_tray: Sequence[MatchResult]) -> dict[int, tuple[float, float]]:
    """Group trays by number of foods and report ``(pooled recall, TA)`` per group."""
    groups: dict[int, list[MatchResult]] = {}
    for m in per_tray:
        if m.num_ground_truth:
            groups.setdefault(m.num_ground_truth, []).append(m)
    out = {}
    for size in sorted(groups):
        trays = groups[size]
        tp = sum(len(m.tp) for m in trays)
        out[size] = (tp / (size * len(trays)), tray_accuracy(trays))
    return out


# ------------------------------------------------------------------- report

@dataclass
class EvalReport:
    global_accuracy: float
    mean_iou: float
    per_class_iou: dict[int, float]
    covering: float
    rand_index: float
    variation_of_information: float
    precision: float
    recall: float
    f2: float
    maa: float
    tray_accuracy: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_class_iou"] = {str(k): v for k, v in sorted(self.per_class_iou.items())}
        return d


@dataclass
class ImageEvaluation:
    """Everything needed to score one tray image.

    ``target_pixels``/``predicted_pixels`` are class maps for the pixel-wise
    measures; ``gt_regions``/``seg_regions`` are region maps for the
    region-based ones. Either pair may be ``None`` for detection-only runs.
    """

    detections: Sequence[Detection]
    ground_truth: Sequence[GroundTruthItem]
    target_pixels: np.ndarray | None = None
    predicted_pixels: np.ndarray | None = None
    gt_regions: np.ndarray | None = None
    seg_regions: np.ndarray | None = None


def evaluate(
    images: Sequence[ImageEvaluation],
    *,
    iou_threshold: float = 0.5,
    beta: float = 2.0,
    num_classes: int | None = None,
) -> tuple[EvalReport, list[MatchResult]]:
    """Score a dataset.

    Pixel-wise measures pool all pixels of the dataset; region measures are
    averaged over images; detection measures pool all trays.
    """
    if not images:
        raise ValueError("nothing to evaluate")
    matches = [match_detections(im.detections, im.ground_truth, iou_threshold) for im in images]

    correct = 0
    pixels = 0
    inter: Counter = Counter()
    union: Counter = Counter()
    per_image = []
    for im in images:
        if im.target_pixels is not None:
            t = check_label_mask(im.target_pixels, "target")
            p = check_label_mask(im.predicted_pixels, "pred")
            check_same_shape(t, p)
            ok, i, u = _class_overlaps(t, p)
            correct += ok
            pixels += t.size
            inter.update(i)
            union.update(u)
        if im.gt_regions is not None:
            per_image.append(region_scores(im.seg_regions, im.gt_regions))

    nan = float("nan")
    ious = {int(c): inter[c] / union[c] for c in sorted(union)}
    cov, ri, vi = np.mean(per_image, axis=0) if per_image else (nan, nan, nan)
    precision, recall, f = precision_recall_fbeta(matches, beta)
    report = EvalReport(
        global_accuracy=correct / pixels if pixels else nan,
        mean_iou=float(np.mean(list(ious.values()))) if ious else nan,
        per_class_iou=ious,
        covering=float(cov),
        rand_index=float(ri),
        variation_of_information=float(vi),
        precision=precision,
        recall=recall,
        f2=f,
        maa=macro_average_accuracy(matches, [im.ground_truth for im in images], num_classes),
        tray_accuracy=tray_accuracy(matches),
    )
    return report, matches


def report_from_mapping(d: Mapping) -> EvalReport:
    fields = dict(d)
    fields["per_class_iou"] = {int(k): v for k, v in fields["per_class_iou"].items()}
    return EvalReport(**{k: fields[k] for k in EvalReport.__dataclass_fields__})
