"""scikit-learn style wrappers around the post-processing and fusion stages.

Nothing is learned; ``fit`` validates the hyper-parameters so that the
objects can sit in pipelines, be cloned and grid-searched like any other
estimator.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_binary_mask, check_fraction
from .detection import MIN_CONFIDENCE
from .fusion import FusionConfig, semantic_food_detection
from .mask import DEFAULT_MIN_AREA_FRACTION, extract_regions
from .metrics import match_detections, precision_recall_fbeta


class RegionExtractor(TransformerMixin, BaseEstimator):
    """Turn binary food masks into lists of regions.

    Parameters
    ----------
    min_area_fraction : float, default=0.001
        Regions smaller than this fraction of the image are discarded.
    """

    def __init__(self, min_area_fraction=DEFAULT_MIN_AREA_FRACTION):
        self.min_area_fraction = min_area_fraction

    def fit(self, X, y=None):
        check_fraction(self.min_area_fraction, "min_area_fraction", high_open=True)
        self.n_masks_seen_ = len(X)
        return self

    def transform(self, X):
        check_is_fitted(self)
        return [extract_regions(check_binary_mask(m), self.min_area_fraction) for m in X]


class SemanticFoodDetector(BaseEstimator):
    """Fuse detector boxes with segmentation masks.

    ``X`` is a sequence of ``(raw_detections, mask)`` pairs, one per image.
    ``predict`` returns one list of final detections per image; ``score``
    takes per-image ground-truth items and returns the pooled F-beta.

    Parameters
    ----------
    confidence_threshold : float, default=1/65
    background_threshold : float, default=0.5
    nms_overlap : float, default=0.5
    nms_mode : {"self", "union"}, default="self"
    background_mode : {"product", "max"}, default="product"
    min_area_fraction : float, default=0.001
    match_iou : float, default=0.5
        Box IoU a detection needs to count as a true positive in ``score``.
    beta : float, default=2.0
    """

    def __init__(self, confidence_threshold=MIN_CONFIDENCE, background_threshold=0.5, nms_overlap=0.5,
                 nms_mode="self", background_mode="product", min_area_fraction=DEFAULT_MIN_AREA_FRACTION,
                 match_iou=0.5, beta=2.0):
        self.confidence_threshold = confidence_threshold
        self.background_threshold = background_threshold
        self.nms_overlap = nms_overlap
        self.nms_mode = nms_mode
        self.background_mode = background_mode
        self.min_area_fraction = min_area_fraction
        self.match_iou = match_iou
        self.beta = beta

    def fit(self, X=None, y=None):
        self.config_ = FusionConfig(
            background_threshold=self.background_threshold,
            nms_overlap=self.nms_overlap,
            confidence_threshold=self.confidence_threshold,
            nms_mode=self.nms_mode,
            background_mode=self.background_mode,
        )
        check_fraction(self.min_area_fraction, "min_area_fraction", high_open=True)
        return self

    def predict(self, X):
        check_is_fitted(self)
        return [
            semantic_food_detection(raw, check_binary_mask(mask), self.config_, self.min_area_fraction)
            for raw, mask in X
        ]

    def score(self, X, y):
        matches = [match_detections(d, gt, self.match_iou) for d, gt in zip(self.predict(X), y, strict=True)]
        return precision_recall_fbeta(matches, self.beta)[2]
