import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from semfood.estimators import RegionExtractor, SemanticFoodDetector
from semfood.fixtures import make_fixture
from semfood.fusion import semantic_food_detection
from semfood.mask import extract_regions


@pytest.fixture(scope="module")
def fx():
    return make_fixture()


def test_region_extractor(fx):
    masks = [fx.masks[t.image_id] for t in fx.trays]
    est = RegionExtractor(min_area_fraction=0.0)
    out = est.fit_transform(masks)
    assert est.n_masks_seen_ == 3
    assert [len(r) for r in out] == [3, 4, 5]  # the speck survives a zero threshold
    assert [len(r) for r in RegionExtractor().fit(masks).transform(masks)] == [2, 3, 4]
    expected = extract_regions(masks[0], 0.0)
    assert [tuple(r.bbox) for r in out[0]] == [tuple(r.bbox) for r in expected]


def test_not_fitted_and_bad_params(fx):
    with pytest.raises(NotFittedError):
        RegionExtractor().transform([np.zeros((2, 2), bool)])
    with pytest.raises(NotFittedError):
        SemanticFoodDetector().predict([])
    with pytest.raises(ValueError):
        RegionExtractor(min_area_fraction=2).fit([])
    with pytest.raises(ValueError):
        SemanticFoodDetector(nms_mode="bogus").fit()


def test_get_params_and_clone():
    est = SemanticFoodDetector(nms_overlap=0.3, beta=1.0)
    params = est.get_params()
    assert params["nms_overlap"] == 0.3 and params["confidence_threshold"] == 1 / 65
    assert set(params) == {"confidence_threshold", "background_threshold", "nms_overlap", "nms_mode",
                           "background_mode", "min_area_fraction", "match_iou", "beta"}
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(nms_mode="union")
    assert est.nms_mode == "union"


def test_detector_predict_and_score(fx):
    X = [(fx.detections[t.image_id], fx.masks[t.image_id]) for t in fx.trays]
    y = [t.items for t in fx.trays]
    est = SemanticFoodDetector().fit()
    preds = est.predict(X)
    assert preds == [semantic_food_detection(r, m) for r, m in X]
    assert est.score(X, y) == 1.0
    loose = SemanticFoodDetector(background_threshold=1.0, nms_overlap=1.0).fit()
    assert loose.score(X, y) < 1.0
