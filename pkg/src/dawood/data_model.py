"""Sample and record types, manifest I/O and pixel iteration.

A manifest is a JSON-lines file with one object per image::

    {"image": "images/src_0000.png", "labels": "labels/src_0000.png",
     "bbox": [x, y, w, h], "domain": "source",
     "joints": {"foot": [[x, y], ...], ...}}

Paths are relative to the manifest's directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from PIL import Image


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class PartLabel(IntEnum):
    FOOT = 0
    KNEE = 1
    HIP = 2
    SHOULDER = 3
    ELBOW = 4
    HAND = 5
    HEAD = 6
    BACKGROUND = 7


N_LABELS = 8
N_PARTS = 7
BACKGROUND = int(PartLabel.BACKGROUND)
PART_NAMES = [p.name.lower() for p in PartLabel]
DOMAINS = ("source", "target", "test")


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise DataError(f"bounding box must have positive size, got {self}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def sqrt_area(self) -> float:
        return float(np.sqrt(self.area))

    def contains(self, px, py) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h

    def clamp(self, width: int, height: int) -> "BoundingBox":
        """Intersect with the image rectangle ``[0, width) x [0, height)``."""
        x0, y0 = max(self.x, 0), max(self.y, 0)
        x1, y1 = min(self.x + self.w, width), min(self.y + self.h, height)
        if x1 <= x0 or y1 <= y0:
            raise DataError(f"bounding box {self} lies outside a {width}x{height} image")
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class PixelSample:
    image_id: int
    px: int
    py: int
    label: Optional[int]
    spatial_bin: int


@dataclass
class ManifestEntry:
    image_path: Path
    bbox: BoundingBox
    domain: str
    label_path: Optional[Path] = None
    joints: Optional[dict[int, list[tuple[float, float]]]] = None

    def load_image(self) -> np.ndarray:
        with Image.open(self.image_path) as im:
            return np.asarray(im.convert("RGB"))

    def load_labels(self) -> np.ndarray:
        if self.label_path is None:
            raise DataError(f"{self.image_path} has no label map")
        with Image.open(self.label_path) as im:
            labels = np.asarray(im)
        if labels.ndim != 2:
            raise DataError(f"label map {self.label_path} is not single-channel")
        if labels.max(initial=0) >= N_LABELS:
            raise DataError(f"label map {self.label_path} has values outside 0..7")
        return labels


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    path: Optional[Path] = None

    def __len__(self):
        return len(self.entries)

    def of_domain(self, domain: str) -> list[tuple[int, ManifestEntry]]:
        return [(i, e) for i, e in enumerate(self.entries) if e.domain == domain]


def spatial_bin(px: int, py: int, bbox: BoundingBox, G: int) -> int:
    """Index of the G x G grid cell of ``bbox`` containing pixel (px, py).

    Bins are numbered row-major: ``col + G * row``.
    """
    if G < 1:
        raise ValueError("G must be >= 1")
    dx, dy = px - bbox.x, py - bbox.y
    if not (0 <= dx <= bbox.w and 0 <= dy <= bbox.h):
        raise ValueError(f"pixel ({px}, {py}) outside {bbox}")
    col = min(G * dx // bbox.w, G - 1)
    row = min(G * dy // bbox.h, G - 1)
    return int(col + G * row)


def spatial_bins(xs: np.ndarray, ys: np.ndarray, bbox: BoundingBox, G: int) -> np.ndarray:
    """Vectorised :func:`spatial_bin` for in-box pixel arrays."""
    dx = np.asarray(xs, dtype=np.int64) - bbox.x
    dy = np.asarray(ys, dtype=np.int64) - bbox.y
    if np.any(dx < 0) or np.any(dy < 0) or np.any(dx > bbox.w) or np.any(dy > bbox.h):
        raise ValueError(f"pixels outside {bbox}")
    col = np.minimum(G * dx // bbox.w, G - 1)
    row = np.minimum(G * dy // bbox.h, G - 1)
    return col + G * row


def pixel_grid(bbox: BoundingBox, stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Row-major coordinates of every ``stride``-th in-box pixel along both axes."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    ys, xs = np.mgrid[bbox.y:bbox.y + bbox.h:stride, bbox.x:bbox.x + bbox.w:stride]
    return xs.ravel().astype(np.int32), ys.ravel().astype(np.int32)


def _parse_joints(raw, lineno) -> Optional[dict[int, list[tuple[float, float]]]]:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise DataError(f"line {lineno}: 'joints' must be an object or null")
    joints = {}
    for name, pts in raw.items():
        if name not in PART_NAMES[:N_PARTS]:
            raise DataError(f"line {lineno}: unknown part {name!r}")
        try:
            joints[PART_NAMES.index(name)] = [(float(x), float(y)) for x, y in pts]
        except (TypeError, ValueError):
            raise DataError(f"line {lineno}: joints for {name!r} must be [[x, y], ...]")
    return joints


def _parse_entry(obj, base: Path, lineno: int) -> ManifestEntry:
    if not isinstance(obj, dict):
        raise DataError(f"line {lineno}: expected a JSON object")
    try:
        image, bbox, domain = obj["image"], obj["bbox"], obj["domain"]
    except KeyError as err:
        raise DataError(f"line {lineno}: missing key {err.args[0]!r}")
    if domain not in DOMAINS:
        raise DataError(f"line {lineno}: domain must be one of {DOMAINS}, got {domain!r}")
    if not (isinstance(bbox, list) and len(bbox) == 4):
        raise DataError(f"line {lineno}: bbox must be [x, y, w, h]")
    labels = obj.get("labels")
    if domain == "source" and labels is None:
        raise DataError(f"line {lineno}: source entries need a label map")

    image_path = base / image
    if not image_path.is_file():
        raise DataError(f"line {lineno}: image {image_path} not found")
    with Image.open(image_path) as im:
        width, height = im.size
    label_path = None
    if labels is not None:
        label_path = base / labels
        if not label_path.is_file():
            raise DataError(f"line {lineno}: label map {label_path} not found")
        with Image.open(label_path) as im:
            if im.size != (width, height):
                raise DataError(
                    f"line {lineno}: label map is {im.size[0]}x{im.size[1]}, "
                    f"image is {width}x{height}")
    try:
        box = BoundingBox(*(int(v) for v in bbox)).clamp(width, height)
    except (TypeError, ValueError) as err:
        raise DataError(f"line {lineno}: {err}")
    return ManifestEntry(image_path=image_path, bbox=box, domain=domain,
                         label_path=label_path,
                         joints=_parse_joints(obj.get("joints"), lineno))


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest {path} not found")
    base = path.parent
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise DataError(f"line {lineno}: {err.msg}")
            entries.append(_parse_entry(obj, base, lineno))
    return DatasetManifest(entries=entries, path=path)


def entry_record(entry: ManifestEntry, base: Path) -> dict:
    def rel(p):
        if p is None:
            return None
        p = Path(p)
        return p.relative_to(base).as_posix() if p.is_relative_to(base) else str(p.resolve())

    joints = None
    if entry.joints is not None:
        joints = {PART_NAMES[p]: [[x, y] for x, y in pts]
                  for p, pts in sorted(entry.joints.items())}
    return {"image": rel(entry.image_path), "labels": rel(entry.label_path),
            "bbox": entry.bbox.as_list(), "domain": entry.domain, "joints": joints}


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for entry in manifest.entries:
            fh.write(json.dumps(entry_record(entry, path.parent)) + "\n")


def iter_pixels(manifest: DatasetManifest, domain: str, stride: int = 1,
                G: int = 8) -> Iterator[PixelSample]:
    """Yield every ``stride``-th in-box pixel of each image of ``domain``.

    Images are visited in manifest order and pixels in row-major order.
    Source pixels carry their label-map value; target pixels carry none.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    for image_id, entry in manifest.of_domain(domain):
        xs, ys = pixel_grid(entry.bbox, stride)
        zs = spatial_bins(xs, ys, entry.bbox, G)
        if domain == "source":
            labels = entry.load_labels()[ys, xs]
            for x, y, lab, z in zip(xs.tolist(), ys.tolist(), labels.tolist(), zs.tolist()):
                yield PixelSample(image_id, x, y, lab, z)
        else:
            for x, y, z in zip(xs.tolist(), ys.tolist(), zs.tolist()):
                yield PixelSample(image_id, x, y, None, z)
