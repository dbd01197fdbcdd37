"""Command line interface.

Exit codes: 0 success, 1 invalid input, 2 partial run (unpaired images).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .detection import THRESHOLD_GRID
from .fixtures import write_fixture
from .formats import (
    AnnotationError,
    DetectionFormatError,
    PGMError,
    dumps_report,
    read_detections,
    read_mask,
    write_detections,
    write_mask,
    write_report,
)
from .fusion import semantic_food_detection
from .mask import extract_regions, fill_holes
from .pipeline import (
    EXIT_INVALID,
    EXIT_OK,
    EXIT_PARTIAL,
    PipelineResult,
    RunConfig,
    clip_detections,
    load_dataset,
    run_on_dataset,
    sweep,
)

log = logging.getLogger("semfood")

INPUT_ERRORS = (PGMError, AnnotationError, DetectionFormatError, ValueError, KeyError, OSError)


def _ratio(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return v


def _fraction(text):
    # "1/65" style values are accepted too
    if "/" in text:
        num, den = text.split("/", 1)
        return _ratio(str(float(num) / float(den)))
    return _ratio(text)


def _add_fusion_args(p):
    p.add_argument("--conf-thresh", type=_fraction, default=1 / 65, help="minimum confidence score (default 1/65)")
    p.add_argument("--bkg-thresh", type=_ratio, default=0.5, help="background probability cut-off T")
    p.add_argument("--nms-thresh", type=_ratio, default=0.5, help="NMS overlap cut-off")
    p.add_argument("--nms-mode", choices=("self", "union"), default="self")
    p.add_argument("--bkg-mode", choices=("product", "max"), default="product")
    p.add_argument("--t-o", choices=("logit", "prob"), default="prob", dest="t_o",
                   help="whether the objectness column holds a logit or a probability")


def _add_common(p, *, detections=True, annotations=True, required_detections=False):
    p.add_argument("--masks", required=True, help="directory of <image_id>.pgm masks")
    p.add_argument("--min-region-frac", type=_ratio, default=0.001)
    if detections:
        p.add_argument("--detections", required=required_detections)
    if annotations:
        p.add_argument("--annotations", required=True)
        p.add_argument("--labels", required=True)
        p.add_argument("--allow-unknown", action="store_true",
                       help="map unknown labels to a reserved class id instead of failing")
        p.add_argument("--match-iou", type=_ratio, default=0.5)
        p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semfood", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment-postproc", help="fill holes and extract food regions from masks")
    _add_common(p, detections=False, annotations=False)
    p.add_argument("--out", required=True, help="JSON file with the regions of every mask")
    p.add_argument("--dump-masks", help="directory for hole-filled masks")

    p = sub.add_parser("fuse", help="fuse detections with masks; no evaluation")
    _add_common(p, annotations=False, required_detections=True)
    _add_fusion_args(p)
    p.add_argument("--out", required=True, help="detection records file for the fused output")
    p.add_argument("--num-classes", type=int, help="class vector length in the output (default: input's)")

    p = sub.add_parser("evaluate", help="score already-final detections against annotations")
    _add_common(p, required_detections=True)
    p.add_argument("--t-o", choices=("logit", "prob"), default="prob", dest="t_o")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="post-process, fuse and evaluate")
    _add_common(p)
    _add_fusion_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-detections", help="directory for per-image final detections")

    p = sub.add_parser("sweep", help="detector vs fused results over the confidence grid")
    _add_common(p)
    _add_fusion_args(p)
    p.add_argument("--thresholds", type=_fraction, nargs="+", default=list(THRESHOLD_GRID))
    p.add_argument("--out", required=True)

    p = sub.add_parser("fixtures", help="write the synthetic three-tray dataset")
    p.add_argument("outdir")
    p.add_argument("--corrupt-label", action="store_true", help="mislabel one detection")
    return parser


def _run_config(args) -> RunConfig:
    return RunConfig(
        masks=args.masks,
        detections=getattr(args, "detections", None),
        annotations=args.annotations,
        labels=args.labels,
        confidence_threshold=getattr(args, "conf_thresh", 1 / 65),
        background_threshold=getattr(args, "bkg_thresh", 0.5),
        nms_overlap=getattr(args, "nms_thresh", 0.5),
        nms_mode=getattr(args, "nms_mode", "self"),
        background_mode=getattr(args, "bkg_mode", "product"),
        min_area_fraction=args.min_region_frac,
        match_iou=args.match_iou,
        beta=args.beta,
        logit=args.t_o == "logit",
        allow_unknown=args.allow_unknown,
        jobs=args.jobs,
    )


def _masks(directory):
    paths = sorted(Path(directory).glob("*.pgm"))
    if not paths:
        raise ValueError(f"no .pgm masks in {directory}")
    return paths


def cmd_segment_postproc(args) -> int:
    doc = {}
    for path in _masks(args.masks):
        mask = read_mask(path)
        regions = extract_regions(mask, args.min_region_frac)
        doc[path.stem] = {
            "width": mask.shape[1],
            "height": mask.shape[0],
            "regions": [
                {"bbox": list(r.bbox), "area": r.area, "contour": r.contour.tolist()} for r in regions
            ],
        }
        if args.dump_masks:
            Path(args.dump_masks).mkdir(parents=True, exist_ok=True)
            write_mask(fill_holes(mask), Path(args.dump_masks) / path.name)
    Path(args.out).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = _run_config_fuse(args)
    raw = read_detections(args.detections, cfg.logit)
    masks = {p.stem: p for p in _masks(args.masks)}
    num_classes = args.num_classes or max((r.num_classes for rs in raw.values() for r in rs), default=1)
    out, status = {}, EXIT_OK
    for image_id in sorted(raw):
        if image_id not in masks:
            log.warning("%s: detections without a mask", image_id)
            status = EXIT_PARTIAL
            continue
        mask = read_mask(masks[image_id])
        h, w = mask.shape
        out[image_id] = semantic_food_detection(clip_detections(raw[image_id], w, h), mask,
                                                cfg.fusion, cfg.min_area_fraction)
    write_detections(out, args.out, num_classes)
    return status


def _run_config_fuse(args) -> RunConfig:
    return RunConfig(
        confidence_threshold=args.conf_thresh,
        background_threshold=args.bkg_thresh,
        nms_overlap=args.nms_thresh,
        nms_mode=args.nms_mode,
        background_mode=args.bkg_mode,
        min_area_fraction=args.min_region_frac,
        logit=args.t_o == "logit",
        jobs=args.jobs,
    )


def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    # the detection file is loaded by load_dataset, but scored without fusion
    data = load_dataset(cfg)
    result = run_on_dataset(data, replace(cfg, confidence_threshold=0.0), fuse=False)
    write_report(result.report, args.out, **_extras(result))
    return result.exit_code


def _extras(result: PipelineResult) -> dict:
    doc = result.document()
    doc.pop("metrics")
    return doc


def cmd_pipeline(args) -> int:
    cfg = _run_config(args)
    data = load_dataset(cfg)
    result = run_on_dataset(data, cfg)
    write_report(result.report, args.out, **_extras(result))
    if args.dump_detections:
        outdir = Path(args.dump_detections)
        outdir.mkdir(parents=True, exist_ok=True)
        num_classes = len(data.labels) + (1 if cfg.allow_unknown else 0)
        for image_id, dets in result.detections.items():
            write_detections({image_id: dets}, outdir / f"{image_id}.txt", num_classes)
    for p in result.problems:
        log.warning("%s", p)
    return result.exit_code


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    data = load_dataset(cfg)
    rows = sweep(cfg, args.thresholds, data=data)
    doc = {"sweep": rows, "config": cfg.describe(), "problems": data.problems}
    Path(args.out).write_text(dumps_report(doc), encoding="utf-8")
    return EXIT_PARTIAL if data.problems else EXIT_OK


def cmd_fixtures(args) -> int:
    paths = write_fixture(args.outdir, corrupt=args.corrupt_label)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


COMMANDS = {
    "segment-postproc": cmd_segment_postproc,
    "fuse": cmd_fuse,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
    "sweep": cmd_sweep,
    "fixtures": cmd_fixtures,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        log.error("--jobs must be at least 1")
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except INPUT_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
