"""Readers and writers for masks, annotations, detection records and reports.

Masks
    Netpbm greymaps, plain (``P2``) or raw (``P5``), maxval up to 65535.
Annotations
    One JSON document per dataset::

        {"images": [{"id": "tray_001", "width": 640, "height": 480,
                     "items": [{"label": "pasta",
                                "bbox": [x0, y0, x1, y1],
                                "polygon": [[x, y], ...]}]}]}

    ``bbox`` is half-open; either ``bbox`` or ``polygon`` may be omitted
    (but not both), the box then being the tightest one around the polygon.
Labels
    Plain text, one class name per line; the line order gives class ids.
Detections
    One record per line, whitespace or comma separated::

        image_id x y w h objectness p_0 ... p_{C-1}

    ``objectness`` is a probability or a logit depending on the reader flag.
Reports
    JSON with sorted keys.
"""
from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .detection import Detection, RawDetection
from .geometry import BBox, as_contour, points_bbox
from .metrics import GroundTruthItem

MAX_PIXELS = 1 << 31


# --------------------------------------------------------------------- PGM

class PGMError(ValueError):
    """Base class for malformed greymap files."""


class PGMMagicError(PGMError):
    pass


class PGMHeaderError(PGMError):
    pass


class PGMTruncatedError(PGMError):
    pass


class PGMDimensionError(PGMError):
    pass


class PGMValueError(PGMError):
    pass


_WS = b" \t\r\n\v\f"


def _header_tokens(data: bytes, count: int, pos: int) -> tuple[list[int], int]:
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise PGMHeaderError("header ended before width, height and maxval were read")
        tok = data[start:pos]
        if not tok.isdigit():
            raise PGMHeaderError(f"non-numeric header field {tok!r}")
        tokens.append(int(tok))
    return tokens, pos


def parse_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode a P2/P5 greymap into ``(values[h, w] as uint16, maxval)``."""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMMagicError(f"expected P2 or P5 magic, got {magic!r}")
    if len(data) < 3 or (data[2] not in _WS and data[2] != ord("#")):
        raise PGMHeaderError("magic number must be followed by whitespace")
    (width, height, maxval), pos = _header_tokens(data, 3, 2)
    if width < 1 or height < 1 or width * height > MAX_PIXELS:
        raise PGMDimensionError(f"unsupported dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise PGMHeaderError(f"maxval {maxval} outside [1, 65535]")
    count = width * height
    if magic == b"P5":
        if pos >= len(data) or data[pos] not in _WS:
            raise PGMHeaderError("raster must follow maxval after a single whitespace byte")
        pos += 1
        dtype = ">u1" if maxval < 256 else ">u2"
        nbytes = count * np.dtype(dtype).itemsize
        if len(data) - pos < nbytes:
            raise PGMTruncatedError(f"raster has {len(data) - pos} bytes, expected {nbytes}")
        values = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.uint16)
    else:
        body = re.sub(rb"#[^\r\n]*", b" ", data[pos:])
        parts = body.split()
        if len(parts) < count:
            raise PGMTruncatedError(f"raster has {len(parts)} samples, expected {count}")
        try:
            ints = [int(p) for p in parts[:count]]
        except ValueError as exc:
            raise PGMValueError(f"non-numeric sample: {exc}") from None
        values = np.asarray(ints, dtype=np.int64)
        if values.min() < 0:
            raise PGMValueError("negative sample")
        values = values.astype(np.uint16) if values.max() <= 65535 else values
    if values.max() > maxval:
        raise PGMValueError(f"sample {int(values.max())} exceeds maxval {maxval}")
    return values.reshape(height, width), maxval


def encode_pgm(values: np.ndarray, maxval: int, plain: bool = False) -> bytes:
    values = np.asarray(values)
    h, w = values.shape
    header = f"{'P2' if plain else 'P5'}\n{w} {h}\n{maxval}\n".encode("ascii")
    if plain:
        rows = (" ".join(str(int(v)) for v in row) for row in values)
        return header + "\n".join(rows).encode("ascii") + b"\n"
    dtype = ">u1" if maxval < 256 else ">u2"
    return header + values.astype(dtype).tobytes()


def read_mask(path, kind: str = "binary") -> np.ndarray:
    """Read a greymap as a binary mask (``value > maxval / 2``) or a label mask."""
    data = Path(path).read_bytes()
    try:
        values, maxval = parse_pgm(data)
    except PGMError as exc:
        raise type(exc)(f"{path}: {exc}") from None
    if kind == "binary":
        return values > maxval / 2
    if kind == "label":
        return values.astype(np.int64)
    raise ValueError(f"kind must be 'binary' or 'label', got {kind!r}")


def write_mask(mask, path, plain: bool = False) -> None:
    """Write a boolean mask as 0/255 or a label mask with the smallest fitting maxval."""
    arr = np.asarray(mask)
    if arr.dtype == bool:
        values, maxval = arr.astype(np.uint8) * 255, 255
    else:
        if arr.size and (arr.min() < 0 or arr.max() > 65535):
            raise ValueError("label values must lie in [0, 65535] to fit a greymap")
        top = int(arr.max()) if arr.size else 0
        values, maxval = arr, 255 if top < 256 else 65535
    try:
        Path(path).write_bytes(encode_pgm(values, maxval, plain))
    except OSError as exc:
        raise OSError(f"cannot write mask to {path}: {exc.strerror or exc}") from exc


# ----------------------------------------------------------------- labels

class LabelMap:
    """Class names in id order. Unknown names may map to one reserved id."""

    def __init__(self, names: Sequence[str]):
        self.names = list(names)
        self.index = {}
        for i, name in enumerate(self.names):
            if name in self.index:
                raise ValueError(f"duplicate label {name!r}")
            self.index[name] = i

    def __len__(self):
        return len(self.names)

    @property
    def unknown_id(self) -> int:
        return len(self.names)

    def resolve(self, name: str, allow_unknown: bool = False) -> int:
        if name in self.index:
            return self.index[name]
        if allow_unknown:
            return self.unknown_id
        raise KeyError(name)


def read_labels(path) -> LabelMap:
    names = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            names.append(line)
    return LabelMap(names)


def write_labels(labels: LabelMap | Sequence[str], path) -> None:
    names = labels.names if isinstance(labels, LabelMap) else list(labels)
    Path(path).write_text("".join(f"{n}\n" for n in names), encoding="utf-8")


# ------------------------------------------------------------- annotations

class AnnotationError(ValueError):
    pass


@dataclass
class TrayAnnotation:
    image_id: str
    width: int
    height: int
    items: list[GroundTruthItem] = field(default_factory=list)


def _int_pair(value, where):
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
        raise AnnotationError(f"{where}: expected an [x, y] integer pair, got {value!r}")
    return value


def parse_annotations(doc, labels: LabelMap, allow_unknown: bool = False) -> list[TrayAnnotation]:
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise AnnotationError("document must be an object with an 'images' list")
    out = []
    seen = set()
    for i, im in enumerate(doc["images"]):
        where = f"images[{i}]"
        if not isinstance(im, dict):
            raise AnnotationError(f"{where}: expected an object")
        image_id, width, height = im.get("id"), im.get("width"), im.get("height")
        if not isinstance(image_id, str) or not image_id:
            raise AnnotationError(f"{where}.id: expected a non-empty string")
        if image_id in seen:
            raise AnnotationError(f"{where}.id: duplicate image id {image_id!r}")
        seen.add(image_id)
        for key, v in (("width", width), ("height", height)):
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise AnnotationError(f"{where}.{key}: expected a positive integer, got {v!r}")
        items = im.get("items", [])
        if not isinstance(items, list):
            raise AnnotationError(f"{where}.items: expected a list")
        tray = TrayAnnotation(image_id, width, height)
        for k, item in enumerate(items):
            iw = f"{where}.items[{k}]"
            if not isinstance(item, dict):
                raise AnnotationError(f"{iw}: expected an object")
            label = item.get("label")
            if not isinstance(label, str):
                raise AnnotationError(f"{iw}.label: expected a string")
            try:
                class_id = labels.resolve(label, allow_unknown)
            except KeyError:
                raise AnnotationError(f"{iw}.label: unknown label {label!r}") from None
            polygon = None
            if item.get("polygon") is not None:
                pts = item["polygon"]
                if not isinstance(pts, list) or not pts:
                    raise AnnotationError(f"{iw}.polygon: expected a non-empty list of points")
                for p, pt in enumerate(pts):
                    x, y = _int_pair(pt, f"{iw}.polygon[{p}]")
                    if not (0 <= x < width and 0 <= y < height):
                        raise AnnotationError(
                            f"{iw}.polygon[{p}]: point {(x, y)} outside {width}x{height} image")
                polygon = as_contour(pts)
            if item.get("bbox") is not None:
                b = item["bbox"]
                if (not isinstance(b, list) or len(b) != 4
                        or not all(isinstance(v, int) and not isinstance(v, bool) for v in b)):
                    raise AnnotationError(f"{iw}.bbox: expected [x0, y0, x1, y1] integers")
                x0, y0, x1, y1 = b
                if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
                    raise AnnotationError(f"{iw}.bbox: box {b} invalid for a {width}x{height} image")
                bbox = BBox(x0, y0, x1, y1)
            elif polygon is not None:
                bbox = points_bbox(polygon)
            else:
                raise AnnotationError(f"{iw}: needs a bbox or a polygon")
            tray.items.append(GroundTruthItem(bbox=bbox, class_id=class_id, polygon=polygon))
        out.append(tray)
    return out


def read_annotations(path, labels: LabelMap, allow_unknown: bool = False) -> list[TrayAnnotation]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"{path}: not valid JSON ({exc})") from None
    try:
        return parse_annotations(doc, labels, allow_unknown)
    except AnnotationError as exc:
        raise AnnotationError(f"{path}: {exc}") from None


def annotations_to_doc(trays: Iterable[TrayAnnotation], labels: LabelMap) -> dict:
    images = []
    for t in trays:
        items = []
        for g in t.items:
            item = {"label": labels.names[g.class_id], "bbox": [int(v) for v in g.bbox]}
            if g.polygon is not None:
                item["polygon"] = [[int(x), int(y)] for x, y in g.polygon]
            items.append(item)
        images.append({"id": t.image_id, "width": t.width, "height": t.height, "items": items})
    return {"images": images}


def write_annotations(trays: Iterable[TrayAnnotation], labels: LabelMap, path) -> None:
    text = json.dumps(annotations_to_doc(trays, labels), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


# -------------------------------------------------------------- detections

class DetectionFormatError(ValueError):
    pass


_SPLIT = re.compile(r"[,\s]+")


def _number(tok: str, where: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise DetectionFormatError(f"{where}: non-numeric field {tok!r}") from None
    if not math.isfinite(v):
        raise DetectionFormatError(f"{where}: non-finite field {tok!r}")
    return v


def parse_detections(lines: Iterable[str], logit: bool = False, source="<detections>") -> dict[str, list[RawDetection]]:
    out: dict[str, list[RawDetection]] = {}
    num_classes = None
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        fields = [f for f in _SPLIT.split(line) if f]
        if len(fields) < 7:
            raise DetectionFormatError(f"{where}: expected at least 7 fields, got {len(fields)}")
        if num_classes is None:
            num_classes = len(fields) - 6
        elif len(fields) - 6 != num_classes:
            raise DetectionFormatError(
                f"{where}: {len(fields) - 6} class probabilities, earlier records had {num_classes}")
        image_id = fields[0]
        x, y, w, h, obj = (_number(f, where) for f in fields[1:6])
        probs = [_number(f, where) for f in fields[6:]]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise DetectionFormatError(f"{where}: class probability outside [0, 1]")
        if not logit and not 0.0 <= obj <= 1.0:
            raise DetectionFormatError(f"{where}: objectness {obj} outside [0, 1]")
        try:
            bbox = BBox.from_xywh(x, y, w, h)
        except ValueError as exc:
            raise DetectionFormatError(f"{where}: {exc}") from None
        out.setdefault(image_id, []).append(RawDetection(bbox, obj, tuple(probs), logit))
    return out


def read_detections(path, logit: bool = False) -> dict[str, list[RawDetection]]:
    """Group detection records by image id, keeping file order within an image."""
    with open(path, encoding="utf-8") as fh:
        return parse_detections(fh, logit, source=str(path))


def format_detection(image_id: str, det, num_classes: int | None = None) -> str:
    if re.search(r"[,\s]", image_id):
        raise ValueError(f"image id {image_id!r} contains a separator")
    if isinstance(det, Detection):
        if num_classes is None or not 0 <= det.class_id < num_classes:
            raise ValueError("writing scored detections needs num_classes covering class_id")
        obj = det.score
        probs = [0.0] * num_classes
        probs[det.class_id] = 1.0
    else:
        obj, probs = det.objectness, det.class_probs
    b = det.bbox
    fields = [image_id, str(b.x0), str(b.y0), str(b.width), str(b.height), repr(float(obj))]
    fields += [repr(float(p)) for p in probs]
    return " ".join(fields)


def write_detections(dets: Mapping[str, Sequence], path, num_classes: int | None = None) -> None:
    """Write raw or scored detections in the record format ``read_detections`` reads.

    A scored detection becomes a record with objectness equal to its score
    and a one-hot class vector, so re-scoring it reproduces the detection.
    """
    lines = [format_detection(image_id, d, num_classes) for image_id, ds in dets.items() for d in ds]
    try:
        Path(path).write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write detections to {path}: {exc.strerror or exc}") from exc


# ----------------------------------------------------------------- reports

def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    return value


def dumps_report(doc: Mapping) -> str:
    return json.dumps(_jsonable(dict(doc)), indent=2, sort_keys=True) + "\n"


def write_report(report, path, **extra) -> None:
    """Write an ``EvalReport`` (plus any extra top-level sections) as JSON."""
    doc = {"metrics": report.to_dict() if hasattr(report, "to_dict") else dict(report)}
    doc.update(extra)
    path = os.fspath(path)
    try:
        Path(path).write_text(dumps_report(doc), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc
