"""Interchange formats: word annotations, OCR layouts, and patch libraries."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import AABB, OrientedQuad, Point, aabb_to_quad


class FormatError(ValueError):
    """Malformed input file; ``line`` is 1-based where applicable."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegradationClass(enum.Enum):
    """The six degradation classes and their compositing behaviour."""

    BLACK_INK = "BlackInk"
    BURNT = "Burnt"
    WHITENER = "Whitener"
    DUST = "Dust"
    SCRIBBLE = "Scribble"
    STAMP = "Stamp"

    @property
    def opacity(self) -> float:
        if self is DegradationClass.DUST:
            return 0.65
        if self is DegradationClass.STAMP:
            return 0.60
        return 1.0

    @property
    def occludes(self) -> bool:
        """Whether placements populate the occlusion mask (text unrecoverable)."""
        return self in (DegradationClass.BLACK_INK, DegradationClass.BURNT,
                        DegradationClass.WHITENER)

    @property
    def coverage_targeted(self) -> bool:
        """Whether placement is driven by a pixel coverage target."""
        return self in (DegradationClass.BLACK_INK, DegradationClass.BURNT,
                        DegradationClass.WHITENER, DegradationClass.DUST)

    @classmethod
    def from_tag(cls, tag: str) -> DegradationClass:
        for member in cls:
            if member.value == tag:
                return member
        raise FormatError(f"unknown degradation class {tag!r}")


@dataclass(frozen=True)
class WordAnnotation:
    """One ground-truth word: text, oriented quad, font name, layout class."""

    text: str
    quad: OrientedQuad
    font: str
    class_label: str


@dataclass(frozen=True)
class OcrWord:
    """One recognized word from an OCR engine."""

    text: str
    box: AABB
    confidence: float | None = None


def parse_annotation_file(data: str) -> list[WordAnnotation]:
    """Parse the line-oriented annotation format.

    Each non-empty line holds at least 11 whitespace-separated fields:
    text, eight corner coordinates (x0 y0 .. x3 y3), then font and class as
    the final two fields. Extra fields between the coordinates and the
    trailing pair are tolerated and dropped.
    """
    out = []
    for lineno, raw in enumerate(data.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 11:
            raise FormatError(f"expected at least 11 fields, got {len(tokens)}", lineno)
        try:
            coords = [float(tok) for tok in tokens[1:9]]
        except ValueError as exc:
            raise FormatError(f"non-numeric coordinate: {exc}", lineno) from None
        quad = OrientedQuad((
            Point(coords[0], coords[1]),
            Point(coords[2], coords[3]),
            Point(coords[4], coords[5]),
            Point(coords[6], coords[7]),
        ))
        out.append(WordAnnotation(text=tokens[0], quad=quad,
                                  font=tokens[-2], class_label=tokens[-1]))
    return out


def serialize_annotations(annotations: list[WordAnnotation]) -> str:
    """Inverse of :func:`parse_annotation_file`; coordinates use 2 decimals."""
    lines = []
    for i, ann in enumerate(annotations):
        for field, value in (("text", ann.text), ("font", ann.font),
                             ("class", ann.class_label)):
            if not value or value.split() != [value]:
                raise ValueError(f"annotation {i}: {field} field {value!r} "
                                 f"must be a single non-empty token")
        coords = " ".join(f"{v:.2f}" for p in ann.quad.corners for v in (p.x, p.y))
        lines.append(f"{ann.text} {coords} {ann.font} {ann.class_label}")
    return "\n".join(lines) + ("\n" if lines else "")


def load_ocr_layout(data: str) -> list[OcrWord]:
    """Parse an OCR layout: a JSON array of {text, box, confidence?} objects."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise FormatError("layout root must be a JSON array")
    words = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict):
            raise FormatError(f"entry {i}: expected an object")
        try:
            text = entry["text"]
            box = entry["box"]
        except KeyError as exc:
            raise FormatError(f"entry {i}: missing key {exc}") from None
        if not isinstance(text, str):
            raise FormatError(f"entry {i}: text must be a string")
        if not isinstance(box, list) or len(box) != 4:
            raise FormatError(f"entry {i}: box must be [x1, y1, x2, y2]")
        try:
            x1, y1, x2, y2 = (float(v) for v in box)
        except (TypeError, ValueError):
            raise FormatError(f"entry {i}: non-numeric box coordinate") from None
        if x2 < x1 or y2 < y1:
            raise FormatError(f"entry {i}: inverted box {box}")
        conf = entry.get("confidence")
        if conf is not None:
            conf = float(conf)
            if not 0.0 <= conf <= 1.0:
                raise FormatError(f"entry {i}: confidence {conf} outside [0, 1]")
        words.append(OcrWord(text=text, box=AABB(x1, y1, x2, y2), confidence=conf))
    return words


@dataclass
class PatchAsset:
    """One RGBA degradation asset plus its precomputed alpha footprint."""

    asset_id: str
    class_tag: DegradationClass
    raster: np.ndarray  # H x W x 4 uint8
    effective_area: int  # pixels with alpha > 0.5

    @property
    def size(self) -> tuple[int, int]:
        return (self.raster.shape[1], self.raster.shape[0])


class PatchLibrary:
    """Degradation assets grouped by class."""

    def __init__(self, assets: dict[DegradationClass, list[PatchAsset]]):
        self._assets = assets

    def classes(self) -> list[DegradationClass]:
        return [c for c, lst in self._assets.items() if lst]

    def assets_for(self, class_tag: DegradationClass) -> list[PatchAsset]:
        lst = self._assets.get(class_tag, [])
        if not lst:
            raise ValueError(f"patch library has no assets for class {class_tag.value}")
        return lst


def load_patch_asset(path: Path, class_tag: DegradationClass) -> PatchAsset:
    """Load one RGBA PNG asset; a missing alpha channel is an error."""
    with Image.open(path) as img:
        if img.mode != "RGBA":
            raise FormatError(f"{path}: expected RGBA, got mode {img.mode}")
        raster = np.asarray(img, dtype=np.uint8)
    effective = int(np.count_nonzero(raster[:, :, 3] > 127))
    if effective == 0:
        raise FormatError(f"{path}: asset is fully transparent")
    return PatchAsset(asset_id=path.stem, class_tag=class_tag,
                      raster=raster, effective_area=effective)


def load_patch_library(manifest_path: Path) -> PatchLibrary:
    """Load a patch manifest: JSON object mapping class tag to asset paths.

    Relative asset paths resolve against the manifest's directory. An empty
    manifest loads fine; emptiness of a class only errors at placement time.
    """
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{manifest_path}: manifest root must be a JSON object")
    base = manifest_path.parent
    assets: dict[DegradationClass, list[PatchAsset]] = {}
    for tag, paths in doc.items():
        class_tag = DegradationClass.from_tag(tag)
        if not isinstance(paths, list):
            raise FormatError(f"{manifest_path}: {tag}: expected a list of paths")
        entries = []
        for rel in paths:
            path = Path(rel)
            if not path.is_absolute():
                path = base / path
            if not path.exists():
                raise FormatError(f"{manifest_path}: {tag}: missing asset {rel}")
            entries.append(load_patch_asset(path, class_tag))
        assets[class_tag] = entries
    return PatchLibrary(assets)


def load_page_image(path: Path) -> np.ndarray:
    """Load a page image as an H x W x 3 uint8 RGB array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_page_image(path: Path, raster: np.ndarray) -> None:
    Image.fromarray(raster, mode="RGB").save(path)


__all__ = [
    "FormatError", "DegradationClass", "WordAnnotation", "OcrWord",
    "parse_annotation_file", "serialize_annotations", "load_ocr_layout",
    "PatchAsset", "PatchLibrary", "load_patch_asset", "load_patch_library",
    "load_page_image", "save_page_image", "aabb_to_quad",
]
