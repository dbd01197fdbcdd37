"""Food tray analysis by fusing object detection with binary food segmentation."""
from .detection import Detection, RawDetection, confidence_score, filter_by_threshold, logistic
from .estimators import RegionExtractor, SemanticFoodDetector
from .fusion import (
    FusionConfig,
    SegmentationEvidence,
    background_removal,
    nms,
    prob_background,
    semantic_food_detection,
)
from .geometry import BBox, box_area, box_intersection_area, box_iou, intersection_over_self
from .mask import (
    Region,
    connected_components,
    extract_regions,
    fill_holes,
    postprocess,
    region_label_mask,
    trace_boundary,
)
from .metrics import EvalReport, GroundTruthItem, MatchResult, evaluate, match_detections, region_scores
from .pipeline import RunConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Detection",
    "EvalReport",
    "FusionConfig",
    "GroundTruthItem",
    "MatchResult",
    "RawDetection",
    "Region",
    "RegionExtractor",
    "RunConfig",
    "SegmentationEvidence",
    "SemanticFoodDetector",
    "background_removal",
    "box_area",
    "box_intersection_area",
    "box_iou",
    "confidence_score",
    "connected_components",
    "evaluate",
    "extract_regions",
    "fill_holes",
    "filter_by_threshold",
    "intersection_over_self",
    "logistic",
    "match_detections",
    "nms",
    "postprocess",
    "prob_background",
    "region_label_mask",
    "region_scores",
    "run_pipeline",
    "semantic_food_detection",
    "trace_boundary",
]
