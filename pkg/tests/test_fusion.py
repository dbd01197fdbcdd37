import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semfood.detection import Detection, RawDetection, confidence_score, filter_by_threshold
from semfood.fusion import (
    FusionConfig,
    SegmentationEvidence,
    background_removal,
    nms,
    prob_background,
    prob_false_by_boxes,
    prob_false_by_contours,
    semantic_food_detection,
)
from semfood.geometry import BBox, box_iou, intersection_over_self
from semfood.mask import extract_regions

from .test_geometry import boxes


def square_contour(x0, y0, n):
    return [(x, y0) for x in range(x0, x0 + n)] + [(x0 + n - 1, y) for y in range(y0 + 1, y0 + n)] + \
           [(x, y0 + n - 1) for x in range(x0 + n - 2, x0 - 1, -1)] + \
           [(x0, y) for y in range(y0 + n - 2, y0, -1)]


detections = st.builds(Detection, boxes(64), st.integers(0, 3), st.floats(0, 1))


@st.composite
def evidence(draw):
    n = draw(st.integers(0, 4))
    boxes_, contours = [], []
    for _ in range(n):
        x0, y0 = draw(st.integers(0, 50)), draw(st.integers(0, 50))
        size = draw(st.integers(1, 12))
        boxes_.append(BBox(x0, y0, x0 + size, y0 + size))
        contours.append(square_contour(x0, y0, size) if size > 1 else [(x0, y0)])
    return SegmentationEvidence(boxes_, contours)


# ------------------------------------------------------------ probabilities

def test_prob_false_by_boxes_examples():
    b = BBox(0, 0, 10, 10)
    assert prob_false_by_boxes(b, [BBox(50, 50, 60, 60), b]) == 0.0
    assert prob_false_by_boxes(b, [BBox(20, 20, 30, 30)]) == 1.0
    assert prob_false_by_boxes(b, [BBox(0, 0, 5, 10), BBox(0, 0, 10, 5)]) == 0.5
    assert prob_false_by_boxes(b, []) == 1.0


def test_prob_false_by_contours_examples():
    b = BBox(0, 0, 10, 10)
    far = square_contour(40, 40, 3)
    assert prob_false_by_contours(b, [square_contour(2, 2, 3)]) == 0.0
    assert prob_false_by_contours(b, [far]) == 1.0
    assert prob_false_by_contours(b, [far, square_contour(8, 8, 4), square_contour(30, 0, 2)]) == 0.0
    assert prob_false_by_contours(b, []) == 1.0


def test_prob_background_examples():
    ev_far = SegmentationEvidence([BBox(40, 40, 50, 50)], [square_contour(40, 40, 10)])
    ev_hit = SegmentationEvidence([BBox(5, 5, 15, 15)], [square_contour(5, 5, 10)])
    box = BBox(0, 0, 10, 10)
    assert prob_background(Detection(box, 0, 0.9), ev_far) <= 0.1 + 1e-12
    assert prob_background(Detection(box, 0, 0.02), ev_far) == pytest.approx(0.98, abs=1e-15)
    assert prob_background(Detection(box, 0, 0.02), ev_hit) == 0.0


def test_max_mode_flags_box_inside_region_without_contour():
    # a small box strictly inside a large region touches no contour pixel
    ev = SegmentationEvidence([BBox(0, 0, 40, 40)], [square_contour(0, 0, 40)])
    d = Detection(BBox(15, 15, 25, 25), 0, 0.1)
    assert prob_background(d, ev, "product") == 0.0
    assert prob_background(d, ev, "max") == pytest.approx(0.9)
    assert background_removal([d], ev, 0.5, "product") == [d]
    assert background_removal([d], ev, 0.5, "max") == []


@settings(max_examples=300)
@given(detections, evidence(), st.sampled_from(["product", "max"]))
def test_prob_background_in_unit_interval(d, ev, mode):
    assert 0.0 <= prob_background(d, ev, mode) <= 1.0


# --------------------------------------------------------- background removal

def test_background_removal_examples():
    ev = SegmentationEvidence([BBox(40, 40, 50, 50)], [square_contour(40, 40, 10)])
    confident = [Detection(BBox(0, 0, 5, 5), c, s) for c, s in enumerate([0.5, 0.7, 1.0])]
    assert background_removal(confident, ev, 0.5) == confident
    assert background_removal([], ev, 0.5) == []
    assert background_removal([Detection(BBox(0, 0, 5, 5), 0, 0.02)], ev, 0.5) == []
    assert background_removal([Detection(BBox(0, 0, 5, 5), 0, 0.02)], SegmentationEvidence(), 0.5) == []


@settings(max_examples=300)
@given(st.lists(detections, max_size=8), evidence(), st.floats(0, 1))
def test_background_removal_properties(dets, ev, t):
    kept = background_removal(dets, ev, t)
    assert kept == background_removal(kept, ev, t)
    assert len(kept) <= len(dets)
    assert all(d in kept for d in dets if d.score >= 1 - t)
    assert kept == [d for d in dets if d in kept]  # order preserved


# ---------------------------------------------------------------------- NMS

def test_nms_examples():
    b = BBox(0, 0, 10, 10)
    assert nms([Detection(b, 0, 0.8), Detection(b, 0, 0.9)]) == [Detection(b, 0, 0.9)]
    both = [Detection(b, 0, 0.9), Detection(b, 1, 0.8)]
    assert nms(both) == both
    # 40 of the candidate's 100 pixels lie inside the kept box
    cand = Detection(BBox(6, 0, 16, 10), 0, 0.5)
    assert intersection_over_self(cand.bbox, b) == 0.4
    assert nms([Detection(b, 0, 0.9), cand], 0.5) == [Detection(b, 0, 0.9), cand]


def test_nms_small_box_inside_later_big_box():
    small = Detection(BBox(2, 2, 6, 6), 0, 0.9)
    big = Detection(BBox(0, 0, 20, 20), 0, 0.6)  # only 4% of its area overlaps
    assert intersection_over_self(big.bbox, small.bbox) == 0.04
    assert nms([small, big], 0.5) == [small]
    assert nms([small, big], 0.5, "union") == [small, big]


def test_nms_output_order_and_ties():
    a = Detection(BBox(0, 0, 5, 5), 2, 0.5)
    b = Detection(BBox(20, 20, 25, 25), 0, 0.3)
    c = Detection(BBox(40, 40, 45, 45), 0, 0.9)
    d = Detection(BBox(0, 0, 5, 5), 2, 0.5)  # tie with a; a comes first in input
    assert nms([a, b, c, d]) == [c, b, a]


def test_nms_union_mode():
    kept = Detection(BBox(0, 0, 10, 10), 0, 0.9)
    inner = Detection(BBox(0, 0, 10, 6), 0, 0.8)  # self-overlap 1.0, IoU 0.6
    small = Detection(BBox(0, 0, 10, 4), 0, 0.7)  # self-overlap 1.0, IoU 0.4
    assert nms([kept, inner, small], 0.5, "self") == [kept]
    assert nms([kept, inner, small], 0.5, "union") == [kept, small]


@settings(max_examples=300)
@given(st.lists(detections, max_size=10), st.floats(0, 1), st.sampled_from(["self", "union"]))
def test_nms_properties(dets, overlap, mode):
    kept = nms(dets, overlap, mode)
    assert nms(kept, overlap, mode) == kept
    assert len(kept) <= len(dets)
    for i, a in enumerate(kept):
        for b in kept[:i]:
            if a.class_id == b.class_id:
                if mode == "self":
                    assert intersection_over_self(a.bbox, b.bbox) <= overlap
                    assert intersection_over_self(b.bbox, a.bbox) <= overlap
                else:
                    assert box_iou(a.bbox, b.bbox) <= overlap
    assert len(nms(dets, 1.0, mode)) == len(dets)
    if dets:
        assert nms(dets[:1], overlap, mode) == dets[:1]


# --------------------------------------------------------- whole procedure

def _raw(box, cls, score, ncls=3):
    probs = [0.0] * ncls
    probs[cls] = 1.0
    return RawDetection(BBox(*box), score, tuple(probs))


def test_semantic_food_detection_examples():
    mask = np.zeros((60, 60), bool)
    mask[10:30, 10:30] = True
    assert semantic_food_detection([], mask) == []
    good = _raw((9, 9, 31, 31), 0, 0.9)
    bg = _raw((40, 40, 55, 55), 1, 0.05)
    out = semantic_food_detection([good, bg], mask)
    assert out == [confidence_score(good)]


def test_semantic_food_detection_fig4_analogue():
    mask = np.zeros((100, 160), bool)
    objects = [(5, 5, 35, 35), (50, 10, 90, 40), (100, 5, 150, 45)]
    for x0, y0, x1, y1 in objects:
        mask[y0:y1, x0:x1] = True
    raws = [_raw(b, k, 0.8) for k, b in enumerate(objects)]
    raws.append(_raw((52, 12, 92, 42), 1, 0.3))   # duplicate of object 1
    raws.append(_raw((60, 70, 90, 95), 2, 0.04))  # pure background
    out = semantic_food_detection(raws, mask)
    assert [tuple(d.bbox) for d in out] == objects
    # background removal alone takes out exactly the background box
    dets = filter_by_threshold([confidence_score(r) for r in raws], 1 / 65)
    ev = SegmentationEvidence.from_regions(extract_regions(mask))
    assert len(background_removal(dets, ev)) == 4


@st.composite
def scenes(draw):
    mask = np.zeros((48, 48), bool)
    for _ in range(draw(st.integers(0, 4))):
        x0, y0 = draw(st.integers(0, 40)), draw(st.integers(0, 40))
        w, h = draw(st.integers(1, 16)), draw(st.integers(1, 16))
        mask[y0:y0 + h, x0:x0 + w] = True
    raws = []
    for _ in range(draw(st.integers(0, 8))):
        b = draw(boxes(48))
        probs = tuple(draw(st.lists(st.floats(0, 1), min_size=3, max_size=3)))
        raws.append(RawDetection(b, draw(st.floats(0, 1)), probs))
    return raws, mask


@settings(max_examples=200)
@given(scenes(), st.sampled_from([0.0, 1 / 65, 0.25]), st.sampled_from([0.0, 0.01]))
def test_pipeline_equals_manual_composition(scene, conf, frac):
    raws, mask = scene
    cfg = FusionConfig(confidence_threshold=conf)
    out = semantic_food_detection(raws, mask, cfg, frac)
    scored = filter_by_threshold([confidence_score(r) for r in raws], conf)
    ev = SegmentationEvidence.from_regions(extract_regions(mask, frac))
    manual = nms(background_removal(scored, ev, cfg.background_threshold), cfg.nms_overlap)
    assert out == manual
    assert all(d in scored for d in out)


def test_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(background_threshold=1.5)
    with pytest.raises(ValueError):
        FusionConfig(nms_mode="iou")
    with pytest.raises(ValueError):
        SegmentationEvidence([BBox(0, 0, 1, 1)], [])
