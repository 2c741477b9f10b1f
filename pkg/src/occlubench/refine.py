"""Column-wise refinement of word boxes against the occlusion mask.

Words fully buried under opaque occluders are dropped from the ground truth;
words clipped at one side are trimmed to their visible horizontal extent.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .annotations import WordAnnotation
from .geometry import AABB, aabb_to_quad


@dataclass(frozen=True)
class RefinementConfig:
    col_threshold: float = 0.30    # column occupied-fraction below which it counts as visible
    dense_threshold: float = 0.90  # column fraction at or above which it is a dense wall
    global_threshold: float = 0.50 # max occluded fraction tolerated over the kept extent
    min_width: int = 10
    min_height: int = 10
    min_area: int = 150
    skip_ratio: float = 0.05       # boxes occluded below this fraction are left alone


class Decision(enum.Enum):
    KEPT = "kept_unchanged"
    TRIMMED = "trimmed"
    REMOVED = "removed"


class RemovalReason(enum.Enum):
    NO_VALID_EXTENT = "no_valid_extent"
    LEADING_DENSE_WALL = "leading_dense_wall"
    GLOBAL_RATIO = "global_ratio"
    MIN_DIMS = "min_dims"


@dataclass(frozen=True)
class RefinementOutcome:
    decision: Decision
    new_box: AABB | None = None
    reason: RemovalReason | None = None


def _clip_box(box: AABB, shape: tuple[int, int]) -> tuple[int, int, int, int]:
    """Integer pixel window of a real-valued box, clamped to the mask."""
    h, w = shape
    x1 = min(max(int(round(box.x1)), 0), w)
    x2 = min(max(int(round(box.x2)), 0), w)
    y1 = min(max(int(round(box.y1)), 0), h)
    y2 = min(max(int(round(box.y2)), 0), h)
    return x1, y1, x2, y2


def column_occupancy(occ_mask: np.ndarray, box: AABB) -> np.ndarray:
    """Per-column occluded fraction of the mask window under ``box``."""
    x1, y1, x2, y2 = _clip_box(box, occ_mask.shape)
    sub = occ_mask[y1:y2, x1:x2]
    if sub.size == 0:
        return np.zeros(max(x2 - x1, 0), dtype=np.float64)
    return sub.mean(axis=0, dtype=np.float64)


def refine_word(box: AABB, occ_mask: np.ndarray,
                cfg: RefinementConfig = RefinementConfig()) -> RefinementOutcome:
    """Refine one word box against the occlusion mask.

    The scan finds the leftmost/rightmost columns occluded below
    ``col_threshold``, truncates the extent before the first dense wall,
    then applies the global-ratio and minimum-dimension gates.
    """
    x1, y1, x2, y2 = _clip_box(box, occ_mask.shape)
    bw, bh = x2 - x1, y2 - y1
    if bw <= 0 or bh <= 0:
        return RefinementOutcome(Decision.KEPT)
    sub = occ_mask[y1:y2, x1:x2]
    occluded = int(np.count_nonzero(sub))
    if occluded / (bw * bh) < cfg.skip_ratio:
        return RefinementOutcome(Decision.KEPT)

    col = sub.mean(axis=0, dtype=np.float64)
    below = np.flatnonzero(col < cfg.col_threshold)
    if below.size == 0:
        return RefinementOutcome(Decision.REMOVED, reason=RemovalReason.NO_VALID_EXTENT)
    left, right = int(below[0]), int(below[-1])

    dense = np.flatnonzero(col[left:right + 1] >= cfg.dense_threshold)
    if dense.size:
        j = left + int(dense[0])
        if j == left:
            return RefinementOutcome(Decision.REMOVED,
                                     reason=RemovalReason.LEADING_DENSE_WALL)
        right = j - 1

    fw = right - left + 1
    kept_occluded = int(np.count_nonzero(sub[:, left:right + 1]))
    if kept_occluded / (fw * bh) > cfg.global_threshold:
        return RefinementOutcome(Decision.REMOVED, reason=RemovalReason.GLOBAL_RATIO)
    if fw < cfg.min_width or bh < cfg.min_height or fw * bh < cfg.min_area:
        return RefinementOutcome(Decision.REMOVED, reason=RemovalReason.MIN_DIMS)
    new_box = AABB(x1 + left, box.y1, x1 + right + 1, box.y2)
    return RefinementOutcome(Decision.TRIMMED, new_box=new_box)


def refine_page(annotations: list[WordAnnotation], occ_mask: np.ndarray,
                cfg: RefinementConfig = RefinementConfig(),
                ) -> tuple[list[WordAnnotation], list[dict]]:
    """Refine every word on a page; returns surviving annotations and a log.

    Word extents are taken as the axis-aligned bounds of each quad, so this
    runs before any global page rotation. Trimmed words get an axis-aligned
    replacement quad; removed words are dropped.
    """
    kept: list[WordAnnotation] = []
    log: list[dict] = []
    for i, ann in enumerate(annotations):
        outcome = refine_word(ann.quad.bounds(), occ_mask, cfg)
        entry = {"index": i, "text": ann.text, "decision": outcome.decision.value}
        if outcome.decision is Decision.REMOVED:
            entry["reason"] = outcome.reason.value
        elif outcome.decision is Decision.TRIMMED:
            entry["new_box"] = list(outcome.new_box.as_tuple())
            kept.append(replace(ann, quad=aabb_to_quad(outcome.new_box)))
        else:
            kept.append(ann)
        log.append(entry)
    return kept, log
