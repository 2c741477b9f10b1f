"""Synthetic degradation engine: patch placement with coverage control.

All randomness flows through a counter-based Philox generator seeded per
call, so a (seed, inputs) pair reproduces placements bit for bit. Draw
order per placement is fixed: asset index, rotation, then position.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import cv2
import numpy as np

from .annotations import DegradationClass, PatchAsset, PatchLibrary, WordAnnotation
from .geometry import AABB, Point, RotationTransform, intersect, make_rotation, transform_quad

SCALE_MIN = 0.005
SCALE_MAX = 10.0
COVERAGE_TOLERANCE = 0.95   # accept A_O >= 0.95 * A_T
MAX_TOPUP_PASSES = 6
MASK_ALPHA_CUTOFF = 0.5     # effective alpha above this counts as covered


@dataclass(frozen=True)
class CoverageTarget:
    """Coverage level as a percentage of document area."""

    level_percent: float
    doc_area: int

    def __post_init__(self) -> None:
        if self.level_percent <= 0:
            raise ValueError(f"coverage level must be positive, got {self.level_percent}")
        if self.doc_area <= 0:
            raise ValueError(f"document area must be positive, got {self.doc_area}")

    @property
    def area_target(self) -> float:
        return self.level_percent / 100.0 * self.doc_area


@dataclass
class MaskPair:
    """Boolean page masks: everything placed (cov) and opaque-only (occ)."""

    cov: np.ndarray
    occ: np.ndarray

    @property
    def covered_area(self) -> int:
        return int(np.count_nonzero(self.cov))

    @property
    def occluded_area(self) -> int:
        return int(np.count_nonzero(self.occ))


@dataclass(frozen=True)
class Placement:
    asset_id: str
    kind: str  # initial | topup | scribble | stamp
    scale_x: float
    scale_y: float
    rotation_deg: float
    x: float   # top-left corner of the warped patch bbox on the page
    y: float
    width: int
    height: int

    @property
    def bbox(self) -> AABB:
        x0, y0 = round(self.x), round(self.y)
        return AABB(x0, y0, x0 + self.width, y0 + self.height)

    def to_dict(self) -> dict:
        return {
            "asset_id": self.asset_id, "kind": self.kind,
            "scale_x": self.scale_x, "scale_y": self.scale_y,
            "rotation_deg": self.rotation_deg, "x": self.x, "y": self.y,
            "width": self.width, "height": self.height,
        }


@dataclass
class GenerationRecord:
    """Everything needed to audit or reproduce one degradation run."""

    seed: int
    class_tag: DegradationClass
    target: CoverageTarget | None
    placements: list[Placement] = field(default_factory=list)
    achieved_cov: int = 0
    achieved_occ: int = 0
    initial_count: int = 0
    topup_passes: int = 0
    exhausted: bool = False
    degenerate_position_range: bool = False
    removed_word_indices: list[int] | None = None
    shortfall: bool = False
    stamp_mode: str | None = None

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "class": self.class_tag.value,
            "placements": [p.to_dict() for p in self.placements],
            "achieved_cov": self.achieved_cov,
            "achieved_occ": self.achieved_occ,
            "initial_count": self.initial_count,
            "topup_passes": self.topup_passes,
            "exhausted": self.exhausted,
            "degenerate_position_range": self.degenerate_position_range,
        }
        if self.target is not None:
            d["target"] = {"level_percent": self.target.level_percent,
                           "doc_area": self.target.doc_area,
                           "area_target": self.target.area_target}
        if self.removed_word_indices is not None:
            d["removed_word_indices"] = self.removed_word_indices
            d["shortfall"] = self.shortfall
        if self.stamp_mode is not None:
            d["stamp_mode"] = self.stamp_mode
        return d


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def compute_patch_scale(area_target: float, area_covered: float,
                        patches_left: int, area_patch: float) -> float:
    """Isotropic scale spreading the residual target area over the patches left.

    s = sqrt(((A_T - A_O) / k) / A_P), clamped to [0.005, 10.0]. A residual
    at or below zero hits the lower clamp.
    """
    if area_patch <= 0:
        raise ValueError("patch has no effective area")
    if patches_left <= 0:
        raise ValueError("patches_left must be positive")
    residual = max(area_target - area_covered, 0.0)
    s = math.sqrt(residual / patches_left / area_patch)
    return min(max(s, SCALE_MIN), SCALE_MAX)


def sample_initial_position(rng: np.random.Generator, page_size: tuple[int, int],
                            patch_size: tuple[int, int]) -> tuple[Point, bool]:
    """Initial-pass position draw; up to a quarter of the patch may exit frame.

    x ~ U[-w/4, W - 3w/4] and y ~ U[-h/4, H - 3h/4]. An empty range (patch
    wider than twice the page) degenerates to its midpoint and is flagged.
    """
    w_page, h_page = page_size
    w, h = patch_size
    degenerate = False
    coords = []
    for extent, size in ((w_page, w), (h_page, h)):
        lo, hi = -size / 4.0, extent - 3.0 * size / 4.0
        if hi < lo:
            coords.append((lo + hi) / 2.0)
            degenerate = True
        else:
            coords.append(float(rng.uniform(lo, hi)))
    return Point(coords[0], coords[1]), degenerate


def _map_angle(angle_deg: float) -> float:
    a = angle_deg % 360.0
    return a - 360.0 if a > 180.0 else a


def _warp_patch(rgba: np.ndarray, scale_x: float, scale_y: float,
                angle_deg: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scale then rotate a patch in one resample.

    Returns (rgb float64, alpha float64 in [0,1], alpha_nearest float64 in
    [0,1]). Color is warped premultiplied so transparent border pixels do
    not bleed into the fringe; the nearest-neighbour alpha feeds the masks
    so mask membership stays binary.
    """
    h0, w0 = rgba.shape[:2]
    sw = max(int(round(w0 * scale_x)), 1)
    sh = max(int(round(h0 * scale_y)), 1)
    rot = make_rotation(_map_angle(angle_deg), (sw, sh))
    (r00, r01, tx), (r10, r11, ty) = rot.matrix
    fx, fy = sw / w0, sh / h0
    mat = np.array([[r00 * fx, r01 * fy, tx],
                    [r10 * fx, r11 * fy, ty]], dtype=np.float64)
    dw, dh = rot.dst_size

    f = rgba.astype(np.float64)
    alpha = f[:, :, 3:4] / 255.0
    pm = np.dstack([f[:, :, :3] * alpha, alpha])
    warped = cv2.warpAffine(pm, mat, (dw, dh), flags=cv2.INTER_LINEAR,
                            borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    w_alpha = np.clip(warped[:, :, 3], 0.0, 1.0)
    rgb = warped[:, :, :3] / np.maximum(w_alpha, 1e-9)[:, :, None]
    rgb = np.clip(rgb, 0.0, 255.0)
    alpha_nn = cv2.warpAffine(alpha[:, :, 0], mat, (dw, dh), flags=cv2.INTER_NEAREST,
                              borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    return rgb, w_alpha, alpha_nn


def _composite(out: np.ndarray, cov: np.ndarray | None, occ: np.ndarray | None,
               rgb: np.ndarray, alpha: np.ndarray, alpha_nn: np.ndarray,
               x: float, y: float, class_tag: DegradationClass) -> None:
    """Alpha-blend a warped patch onto the page and update the masks in place."""
    page_h, page_w = out.shape[:2]
    ph, pw = alpha.shape
    x0, y0 = int(round(x)), int(round(y))
    dx1, dy1 = max(0, x0), max(0, y0)
    dx2, dy2 = min(page_w, x0 + pw), min(page_h, y0 + ph)
    if dx2 <= dx1 or dy2 <= dy1:
        return
    sx1, sy1 = dx1 - x0, dy1 - y0
    sx2, sy2 = sx1 + (dx2 - dx1), sy1 + (dy2 - dy1)

    a = alpha[sy1:sy2, sx1:sx2][:, :, None] * class_tag.opacity
    roi = out[dy1:dy2, dx1:dx2].astype(np.float64)
    blended = rgb[sy1:sy2, sx1:sx2] * a + roi * (1.0 - a)
    out[dy1:dy2, dx1:dx2] = np.rint(np.clip(blended, 0.0, 255.0)).astype(np.uint8)

    contrib = alpha_nn[sy1:sy2, sx1:sx2] * class_tag.opacity > MASK_ALPHA_CUTOFF
    if cov is not None:
        cov[dy1:dy2, dx1:dx2] |= contrib
    if occ is not None and class_tag.occludes:
        occ[dy1:dy2, dx1:dx2] |= contrib


def _check_page(page: np.ndarray) -> tuple[int, int]:
    if page.ndim != 3 or page.shape[2] != 3 or page.dtype != np.uint8:
        raise ValueError("page must be an H x W x 3 uint8 raster")
    h, w = page.shape[:2]
    if h < 8 or w < 8:
        raise ValueError(f"page too small: {w} x {h}")
    return h, w


def _fit_to_page(scale: float, asset: PatchAsset, angle: float,
                 max_w: float, max_h: float) -> float:
    """Shrink an isotropic scale until the rotated bbox fits the given bounds."""
    w0, h0 = asset.size
    phi = math.radians(_map_angle(angle))
    cos, sin = abs(math.cos(phi)), abs(math.sin(phi))
    bw = scale * (w0 * cos + h0 * sin)
    bh = scale * (w0 * sin + h0 * cos)
    fit = min(max_w / bw if bw > 0 else 1.0, max_h / bh if bh > 0 else 1.0, 1.0)
    return scale * fit


def place_standard(page: np.ndarray, class_tag: DegradationClass,
                   target: CoverageTarget, library: PatchLibrary,
                   seed: int) -> tuple[np.ndarray, MaskPair, GenerationRecord]:
    """Place coverage-targeted patches of one class onto a copy of the page.

    An initial pass of U{3..7} patches spreads the target area evenly; up to
    six top-up passes (one patch each, scaled to the full residual, placed
    fully in frame) then run until covered area reaches 95% of the target,
    else the record is flagged exhausted.
    """
    if not class_tag.coverage_targeted:
        raise ValueError(f"{class_tag.value} placements are not coverage-targeted")
    h, w = _check_page(page)
    if target.doc_area != h * w:
        raise ValueError("coverage target was built for a different page size")
    assets = library.assets_for(class_tag)
    rng = _rng(seed)

    out = page.copy()
    masks = MaskPair(cov=np.zeros((h, w), dtype=bool), occ=np.zeros((h, w), dtype=bool))
    record = GenerationRecord(seed=seed, class_tag=class_tag, target=target)

    n_initial = int(rng.integers(3, 8))
    record.initial_count = n_initial
    for i in range(n_initial):
        asset = assets[int(rng.integers(len(assets)))]
        angle = float(rng.uniform(0.0, 360.0))
        s = compute_patch_scale(target.area_target, masks.covered_area,
                                n_initial - i, asset.effective_area)
        rgb, alpha, alpha_nn = _warp_patch(asset.raster, s, s, angle)
        ph, pw = alpha.shape
        pos, degenerate = sample_initial_position(rng, (w, h), (pw, ph))
        record.degenerate_position_range |= degenerate
        _composite(out, masks.cov, masks.occ, rgb, alpha, alpha_nn,
                   pos.x, pos.y, class_tag)
        record.placements.append(Placement(
            asset_id=asset.asset_id, kind="initial", scale_x=s, scale_y=s,
            rotation_deg=angle, x=pos.x, y=pos.y, width=pw, height=ph))

    while (masks.covered_area < COVERAGE_TOLERANCE * target.area_target
           and record.topup_passes < MAX_TOPUP_PASSES):
        record.topup_passes += 1
        asset = assets[int(rng.integers(len(assets)))]
        angle = float(rng.uniform(0.0, 360.0))
        s = compute_patch_scale(target.area_target, masks.covered_area,
                                1, asset.effective_area)
        s = _fit_to_page(s, asset, angle, w - 1.0, h - 1.0)
        rgb, alpha, alpha_nn = _warp_patch(asset.raster, s, s, angle)
        ph, pw = alpha.shape
        x = float(rng.uniform(0.0, max(w - pw, 0)))
        y = float(rng.uniform(0.0, max(h - ph, 0)))
        _composite(out, masks.cov, masks.occ, rgb, alpha, alpha_nn, x, y, class_tag)
        record.placements.append(Placement(
            asset_id=asset.asset_id, kind="topup", scale_x=s, scale_y=s,
            rotation_deg=angle, x=x, y=y, width=pw, height=ph))

    record.achieved_cov = masks.covered_area
    record.achieved_occ = masks.occluded_area
    record.exhausted = masks.covered_area < COVERAGE_TOLERANCE * target.area_target
    return out, masks, record


MIN_SCRIBBLE_TEXT_LEN = 3
MIN_SCRIBBLE_BOX_WIDTH = 15.0


def scribble_candidates(annotations: list[WordAnnotation],
                        exclusion_zones: list[AABB]) -> list[int]:
    """Indices of words eligible for scribbling.

    Eligible words are paragraph-class, longer than two characters with at
    least one letter, at least 15 px wide, and clear of every exclusion
    zone (any overlap disqualifies).
    """
    out = []
    for i, ann in enumerate(annotations):
        if ann.class_label != "paragraph":
            continue
        if len(ann.text) < MIN_SCRIBBLE_TEXT_LEN:
            continue
        if not any(ch.isalpha() for ch in ann.text):
            continue
        box = ann.quad.bounds()
        if box.width < MIN_SCRIBBLE_BOX_WIDTH:
            continue
        if any(intersect(box, zone) is not None for zone in exclusion_zones):
            continue
        out.append(i)
    return out


def place_scribbles(page: np.ndarray, annotations: list[WordAnnotation],
                    exclusion_zones: list[AABB], library: PatchLibrary,
                    seed: int) -> tuple[np.ndarray, list[int], GenerationRecord]:
    """Scribble out U{5,6} eligible words; returns their annotation indices.

    Each scribble is stretched slightly beyond its word box (width x1.00-1.15,
    height x1.00-1.20), jittered by up to 5% of the box size, and tilted up
    to 10 degrees. Scribbled words must be dropped from the ground truth.
    """
    h, w = _check_page(page)
    assets = library.assets_for(DegradationClass.SCRIBBLE)
    rng = _rng(seed)

    out = page.copy()
    cov = np.zeros((h, w), dtype=bool)
    record = GenerationRecord(seed=seed, class_tag=DegradationClass.SCRIBBLE,
                              target=None, removed_word_indices=[])

    valid = scribble_candidates(annotations, exclusion_zones)
    n = int(rng.integers(5, 7))
    k = min(n, len(valid))
    record.shortfall = k < n
    if k:
        picks = rng.choice(len(valid), size=k, replace=False)
        chosen = sorted(valid[int(p)] for p in picks)
    else:
        chosen = []

    for idx in chosen:
        box = annotations[idx].quad.bounds()
        asset = assets[int(rng.integers(len(assets)))]
        wf = float(rng.uniform(1.00, 1.15))
        hf = float(rng.uniform(1.00, 1.20))
        dx = float(rng.uniform(-0.05, 0.05)) * box.width
        dy = float(rng.uniform(-0.05, 0.05)) * box.height
        tilt = float(rng.uniform(-10.0, 10.0))
        aw, ah = asset.size
        sx = box.width * wf / aw
        sy = box.height * hf / ah
        rgb, alpha, alpha_nn = _warp_patch(asset.raster, sx, sy, tilt)
        ph, pw = alpha.shape
        x = box.center.x + dx - pw / 2.0
        y = box.center.y + dy - ph / 2.0
        _composite(out, cov, None, rgb, alpha, alpha_nn, x, y,
                   DegradationClass.SCRIBBLE)
        record.placements.append(Placement(
            asset_id=asset.asset_id, kind="scribble", scale_x=sx, scale_y=sy,
            rotation_deg=tilt, x=x, y=y, width=pw, height=ph))
        record.removed_word_indices.append(idx)

    record.achieved_cov = int(np.count_nonzero(cov))
    return out, list(record.removed_word_indices), record


STAMP_MARGIN_FRAC = 0.03


def place_stamp(page: np.ndarray, library: PatchLibrary,
                seed: int) -> tuple[np.ndarray, GenerationRecord]:
    """Place exactly one translucent stamp; ground truth is untouched.

    Centre mode scales the stamp to 20-35% of page height and centres it;
    corner mode scales to 8-12% and drops it in the bottom-left or -right
    corner inside a 3% margin. Tilt is uniform within 15 degrees.
    """
    h, w = _check_page(page)
    assets = library.assets_for(DegradationClass.STAMP)
    rng = _rng(seed)

    out = page.copy()
    record = GenerationRecord(seed=seed, class_tag=DegradationClass.STAMP, target=None)

    centre = int(rng.integers(2)) == 0
    asset = assets[int(rng.integers(len(assets)))]
    if centre:
        frac = float(rng.uniform(0.20, 0.35))
    else:
        frac = float(rng.uniform(0.08, 0.12))
    tilt = float(rng.uniform(-15.0, 15.0))

    aw, ah = asset.size
    s = frac * h / ah
    mx, my = STAMP_MARGIN_FRAC * w, STAMP_MARGIN_FRAC * h
    if centre:
        s = _fit_to_page(s, asset, tilt, float(w), float(h))
    else:
        s = _fit_to_page(s, asset, tilt, w - 2.0 * mx, h - 2.0 * my)
    rgb, alpha, alpha_nn = _warp_patch(asset.raster, s, s, tilt)
    ph, pw = alpha.shape

    if centre:
        x, y = (w - pw) / 2.0, (h - ph) / 2.0
        record.stamp_mode = "centre"
    else:
        left = int(rng.integers(2)) == 0
        x = mx if left else w - mx - pw
        y = h - my - ph
        record.stamp_mode = "corner_left" if left else "corner_right"

    _composite(out, None, None, rgb, alpha, alpha_nn, x, y, DegradationClass.STAMP)
    record.placements.append(Placement(
        asset_id=asset.asset_id, kind="stamp", scale_x=s, scale_y=s,
        rotation_deg=tilt, x=float(x), y=float(y), width=pw, height=ph))
    record.achieved_cov = 0
    return out, record


ROTATION_RANGE_DEG = 5.0


def apply_global_rotation(raster: np.ndarray, annotations: list[WordAnnotation],
                          seed: int, angle_override: float | None = None,
                          ) -> tuple[np.ndarray, list[WordAnnotation], RotationTransform]:
    """Rotate the finished page by U[-5, 5] degrees onto a white canvas.

    Annotation quads ride along through the same transform, so the returned
    transform's inverse maps them exactly back.
    """
    h, w = raster.shape[:2]
    if angle_override is None:
        rng = _rng(seed)
        angle = float(rng.uniform(-ROTATION_RANGE_DEG, ROTATION_RANGE_DEG))
    else:
        angle = float(angle_override)
    t = make_rotation(angle, (w, h))
    mat = np.array(t.matrix, dtype=np.float64)
    canvas = cv2.warpAffine(raster, mat, t.dst_size, flags=cv2.INTER_LINEAR,
                            borderMode=cv2.BORDER_CONSTANT,
                            borderValue=(255, 255, 255))
    moved = [replace(ann, quad=transform_quad(t, ann.quad)) for ann in annotations]
    return canvas, moved, t
