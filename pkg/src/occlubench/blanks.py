"""Blank-region extraction from OCR layouts and prompt-token generation.

Assumes single-column pages with horizontal lines. An occlusion patch
becomes a blank when it overlaps an inter-word gap, when it forms an
enclosure-checked start/end-of-line candidate, or (for scribbles) when it
overlaps a run of words by more than 30% of each word's width.
"""
from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field

from .annotations import DegradationClass, FormatError, OcrWord
from .geometry import AABB, intersect

GROUP_OVERLAP_FRAC = 0.5      # of the shorter height, for line membership
ENCLOSURE_TOL_PX = 2.0
SCRIBBLE_OVERLAP_FRAC = 0.30  # of the word width, strict
VISIBILITY_THRESHOLD = 0.5    # of patch area, ties go to inpaint_only
LENGTH_HEADROOM = 1.2         # chars-per-pixel headroom in the M formula
MULTI_COLUMN_GAP_FRAC = 0.25  # of text width; larger in-line gaps trigger a warning

_TYPE_ORDER = {"start": 0, "mid": 1, "end": 2}


@dataclass
class TextLine:
    """One horizontal text line: words sorted left-to-right plus its y-band."""

    id: int
    words: list[OcrWord]
    band: tuple[float, float]


@dataclass
class TextMargins:
    """Extremes of the page's text region."""

    left: float
    right: float
    top: float
    bottom: float


@dataclass
class BlankRecord:
    """One occluded text region with its reconstruction context."""

    blank_type: str            # start | mid | end
    box: AABB
    line_id: int
    patch_id: int
    gap_index: int | None
    pre_text: str
    post_text: str
    rho: float
    width: float               # b_w, the blank box width
    max_chars: int
    alpha: int | None = None

    def key(self) -> tuple:
        return (self.line_id, self.blank_type, self.gap_index, self.patch_id)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "type": self.blank_type,
            "box": list(self.box.as_tuple()),
            "pre_text": self.pre_text,
            "post_text": self.post_text,
            "max_chars": self.max_chars,
            "line": self.line_id,
            "patch": self.patch_id,
        }


@dataclass(frozen=True)
class PromptToken:
    """Rendered masked-query string for one blank."""

    text: str
    alpha: int


def group_lines(words: list[OcrWord]) -> list[TextLine]:
    """Greedy vertical-band clustering, 50% overlap-of-shorter-height rule."""
    if not words:
        raise ValueError("cannot group an empty word list")
    bands: list[dict] = []
    order = sorted(range(len(words)), key=lambda i: ((words[i].box.y1 + words[i].box.y2) / 2.0,
                                                     words[i].box.x1))
    for i in order:
        box = words[i].box
        best = None
        best_overlap = 0.0
        for line in bands:
            overlap = min(box.y2, line["y2"]) - max(box.y1, line["y1"])
            shorter = min(box.height, line["y2"] - line["y1"])
            if shorter <= 0 or overlap < GROUP_OVERLAP_FRAC * shorter:
                continue
            if overlap > best_overlap:
                best, best_overlap = line, overlap
        if best is None:
            bands.append({"y1": box.y1, "y2": box.y2, "members": [i]})
        else:
            best["members"].append(i)
            best["y1"] = min(best["y1"], box.y1)
            best["y2"] = max(best["y2"], box.y2)
    bands.sort(key=lambda line: (line["y1"], line["y2"]))
    out = []
    for lid, line in enumerate(bands):
        members = sorted((words[i] for i in line["members"]),
                         key=lambda w: (w.box.x1, w.box.x2))
        out.append(TextLine(id=lid, words=members, band=(line["y1"], line["y2"])))
    return out


def text_margins(lines: list[TextLine]) -> TextMargins:
    """Text-region extremes over all grouped words."""
    boxes = [w.box for line in lines for w in line.words]
    if not boxes:
        raise ValueError("no words to take margins from")
    return TextMargins(left=min(b.x1 for b in boxes), right=max(b.x2 for b in boxes),
                       top=min(b.y1 for b in boxes), bottom=max(b.y2 for b in boxes))


def estimate_chars_per_pixel(line: TextLine) -> float:
    """Character density of a line: total characters over total box width."""
    total_width = sum(w.box.width for w in line.words)
    if total_width <= 0:
        raise ValueError(f"line {line.id}: zero total word width")
    return sum(len(w.text) for w in line.words) / total_width


def compute_max_chars(rho: float, width: float) -> int:
    """Length budget for a blank: max(1, floor(1.2 * rho * b_w))."""
    return max(1, math.floor(LENGTH_HEADROOM * rho * width))


def _join(words: list[OcrWord]) -> str:
    return " ".join(w.text for w in words)


def _make_record(blank_type: str, box: AABB, line: TextLine, patch_id: int,
                 gap_index: int | None, pre: list[OcrWord],
                 post: list[OcrWord], rho: float) -> BlankRecord | None:
    """Build one record; blanks whose length budget is under 2 are dropped."""
    max_chars = compute_max_chars(rho, box.width)
    if max_chars < 2:
        return None
    return BlankRecord(blank_type=blank_type, box=box, line_id=line.id,
                       patch_id=patch_id, gap_index=gap_index,
                       pre_text=_join(pre), post_text=_join(post),
                       rho=rho, width=box.width, max_chars=max_chars)


def _edge_candidate(line_index: int, lines: list[TextLine], margins: TextMargins,
                    patch: AABB, side: str) -> AABB | None:
    """Enclosure-checked start/end-of-line candidate rectangle, or None.

    The candidate spans from the text margin to the line's first (or last)
    word, vertically between the neighbouring line bands (or text margins).
    It is accepted when the patch bounds it on the margin side, above, and
    below, all within a 2 px tolerance.
    """
    line = lines[line_index]
    top_bound = lines[line_index - 1].band[1] if line_index > 0 else margins.top
    bottom_bound = (lines[line_index + 1].band[0]
                    if line_index + 1 < len(lines) else margins.bottom)
    if bottom_bound <= top_bound:
        return None
    if side == "start":
        x1, x2 = margins.left, line.words[0].box.x1
    else:
        x1, x2 = line.words[-1].box.x2, margins.right
    if x2 <= x1:
        return None
    candidate = intersect(AABB(x1, top_bound, x2, bottom_bound), patch)
    if candidate is None:
        return None
    if side == "start" and candidate.x1 > margins.left + ENCLOSURE_TOL_PX:
        return None
    if side == "end" and candidate.x2 < margins.right - ENCLOSURE_TOL_PX:
        return None
    if candidate.y1 > top_bound + ENCLOSURE_TOL_PX:
        return None
    if candidate.y2 < bottom_bound - ENCLOSURE_TOL_PX:
        return None
    return candidate


def extract_blanks(lines: list[TextLine], patches: list[tuple[int, AABB]],
                   margins: TextMargins) -> list[BlankRecord]:
    """Mid/start/end blanks for non-scribble patches, unnumbered.

    ``patches`` pairs each patch id with its page-space box. Duplicate
    (line, type, gap index, patch) emissions are suppressed.
    """
    records: dict[tuple, BlankRecord] = {}
    for line_index, line in enumerate(lines):
        words = line.words
        rho = estimate_chars_per_pixel(line)
        for patch_id, patch in patches:
            for i in range(len(words) - 1):
                left, right = words[i], words[i + 1]
                if right.box.x1 <= left.box.x2:
                    continue  # touching or overlapping boxes leave no gap
                gap = AABB(left.box.x2, min(left.box.y1, right.box.y1),
                           right.box.x1, max(left.box.y2, right.box.y2))
                box = intersect(gap, patch)
                if box is None:
                    continue
                rec = _make_record("mid", box, line, patch_id, i,
                                   words[:i + 1], words[i + 1:], rho)
                if rec is not None:
                    records.setdefault(rec.key(), rec)
            for side in ("start", "end"):
                candidate = _edge_candidate(line_index, lines, margins, patch, side)
                if candidate is None:
                    continue
                pre = [] if side == "start" else words
                post = words if side == "start" else []
                rec = _make_record(side, candidate, line, patch_id, None,
                                   pre, post, rho)
                if rec is not None:
                    records.setdefault(rec.key(), rec)
    return list(records.values())


def extract_scribble_blanks(lines: list[TextLine],
                            patches: list[tuple[int, AABB]]) -> list[BlankRecord]:
    """One anchor-bounded mid blank per contiguous scribbled word run.

    A word joins a run when the patch overlaps more than 30% of its width.
    The blank spans from the previous unaffected word's right edge (or the
    line start) to the next unaffected word's left edge (or line end), and
    is clamped to the patch. The run's first word index serves as the gap
    index for duplicate suppression.
    """
    records: dict[tuple, BlankRecord] = {}
    for line in lines:
        words = line.words
        rho = estimate_chars_per_pixel(line)
        for patch_id, patch in patches:
            hit = []
            for w in words:
                overlap = min(w.box.x2, patch.x2) - max(w.box.x1, patch.x1)
                hit.append(w.box.width > 0
                           and overlap / w.box.width > SCRIBBLE_OVERLAP_FRAC)
            start = None
            for i in range(len(words) + 1):
                if i < len(words) and hit[i]:
                    if start is None:
                        start = i
                    continue
                if start is None:
                    continue
                run = (start, i - 1)
                start = None
                left_anchor = (words[run[0] - 1].box.x2 if run[0] > 0
                               else words[run[0]].box.x1)
                right_anchor = (words[run[1] + 1].box.x1 if run[1] + 1 < len(words)
                                else words[run[1]].box.x2)
                if right_anchor <= left_anchor:
                    continue
                box = intersect(AABB(left_anchor, line.band[0],
                                     right_anchor, line.band[1]), patch)
                if box is None:
                    continue
                rec = _make_record("mid", box, line, patch_id, run[0],
                                   words[:run[0]], words[run[1] + 1:], rho)
                if rec is not None:
                    records.setdefault(rec.key(), rec)
    return list(records.values())


def _union_area(rects: list[AABB]) -> float:
    """Exact union area by coordinate compression."""
    if not rects:
        return 0.0
    xs = sorted({r.x1 for r in rects} | {r.x2 for r in rects})
    ys = sorted({r.y1 for r in rects} | {r.y2 for r in rects})
    area = 0.0
    for i in range(len(xs) - 1):
        cx = (xs[i] + xs[i + 1]) / 2.0
        for j in range(len(ys) - 1):
            cy = (ys[j] + ys[j + 1]) / 2.0
            if any(r.x1 <= cx <= r.x2 and r.y1 <= cy <= r.y2 for r in rects):
                area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j])
    return area


def visibility_gate(patch: AABB, class_tag: DegradationClass,
                    lines: list[TextLine]) -> str:
    """Decide whether a translucent patch still needs text reconstruction.

    When recognized words cover at least half of the patch area the text
    survived OCR, so only visual inpainting remains.
    """
    if class_tag not in (DegradationClass.DUST, DegradationClass.STAMP):
        raise ValueError(f"visibility gate only applies to Dust/Stamp, got {class_tag.value}")
    covered = [r for line in lines for w in line.words
               if (r := intersect(w.box, patch)) is not None]
    if patch.area <= 0:
        return "reconstruct"
    fraction = _union_area(covered) / patch.area
    return "inpaint_only" if fraction >= VISIBILITY_THRESHOLD else "reconstruct"


def canonical_sort(records: list[BlankRecord]) -> list[BlankRecord]:
    """Stable total order: top-to-bottom by line, left-to-right within it."""
    return sorted(records, key=lambda r: (r.line_id, r.box.x1,
                                          _TYPE_ORDER[r.blank_type],
                                          -1 if r.gap_index is None else r.gap_index,
                                          r.patch_id))


def assign_alphas(records: list[BlankRecord]) -> list[BlankRecord]:
    """Canonically order records and number them 0..n-1."""
    ordered = canonical_sort(records)
    for alpha, rec in enumerate(ordered):
        rec.alpha = alpha
    return ordered


def render_token(record: BlankRecord) -> str:
    parts = [f"[K={record.max_chars}]"]
    if record.pre_text:
        parts.append(record.pre_text)
    parts.append("<mask>")
    if record.post_text:
        parts.append(record.post_text)
    return " ".join(parts)


def generate_prompt_tokens(blanks: list[BlankRecord]) -> list[PromptToken]:
    """Length-conditioned masked queries, numbered left-to-right per line.

    The length budget M is recomputed from each record's (rho, b_w); blanks
    whose budget falls below 2 are dropped. Records keep their assigned
    alpha; unnumbered records are numbered by emission order.
    """
    tokens = []
    next_alpha = 0
    for rec in canonical_sort(blanks):
        if compute_max_chars(rec.rho, rec.width) < 2:
            continue
        if rec.alpha is not None:
            alpha = rec.alpha
            next_alpha = max(next_alpha, alpha + 1)
        else:
            alpha = next_alpha
            next_alpha += 1
        tokens.append(PromptToken(text=render_token(rec), alpha=alpha))
    return tokens


_TOKEN_RE = re.compile(r"^\[K=(\d+)\] (.*)$", re.DOTALL)


def parse_prompt_token(token: str) -> tuple[int, str, str]:
    """Invert the token format; returns (max_chars, pre_text, post_text)."""
    m = _TOKEN_RE.match(token)
    if m is None:
        raise FormatError(f"token does not start with a [K=N] budget: {token!r}")
    rest = m.group(2)
    if rest.count("<mask>") != 1:
        raise FormatError(f"token needs exactly one <mask> marker: {token!r}")
    pre, post = rest.split("<mask>")
    if pre and (not pre.endswith(" ") or pre.endswith("  ")):
        raise FormatError(f"malformed spacing before <mask>: {token!r}")
    if post and (not post.startswith(" ") or post.startswith("  ")):
        raise FormatError(f"malformed spacing after <mask>: {token!r}")
    return int(m.group(1)), pre[:-1] if pre else "", post[1:] if post else ""


@dataclass
class PageBlanks:
    """Everything the extraction stage produces for one page."""

    records: list[BlankRecord]
    tokens: list[PromptToken]
    lines: list[TextLine]
    gate_log: list[dict] = field(default_factory=list)


def _warn_if_multi_column(lines: list[TextLine], margins: TextMargins) -> None:
    text_width = margins.right - margins.left
    if text_width <= 0:
        return
    for line in lines:
        for a, b in zip(line.words, line.words[1:]):
            if b.box.x1 - a.box.x2 > MULTI_COLUMN_GAP_FRAC * text_width:
                warnings.warn("layout has a wide in-line gap; multi-column pages "
                              "are outside the single-column assumption")
                return


def extract_page_blanks(words: list[OcrWord],
                        patches: list[tuple[AABB, DegradationClass]]) -> PageBlanks:
    """Full extraction for one page: group, gate, extract, number, render.

    Dust and Stamp patches pass through the visibility gate first; patches
    whose text survived OCR are logged as inpaint_only and skipped.
    """
    lines = group_lines(words)
    margins = text_margins(lines)
    _warn_if_multi_column(lines, margins)
    standard: list[tuple[int, AABB]] = []
    scribble: list[tuple[int, AABB]] = []
    gate_log: list[dict] = []
    for patch_id, (box, class_tag) in enumerate(patches):
        if class_tag is DegradationClass.SCRIBBLE:
            scribble.append((patch_id, box))
            continue
        if class_tag in (DegradationClass.DUST, DegradationClass.STAMP):
            decision = visibility_gate(box, class_tag, lines)
            gate_log.append({"patch": patch_id, "class": class_tag.value,
                             "decision": decision})
            if decision == "inpaint_only":
                continue
        standard.append((patch_id, box))
    records = (extract_blanks(lines, standard, margins)
               + extract_scribble_blanks(lines, scribble))
    ordered = assign_alphas(records)
    tokens = generate_prompt_tokens(ordered)
    return PageBlanks(records=ordered, tokens=tokens, lines=lines, gate_log=gate_log)


def dump_blank_records(page: PageBlanks) -> str:
    """Serialize records+tokens as JSON lines (one object per blank)."""
    token_by_alpha = {t.alpha: t.text for t in page.tokens}
    rows = []
    for rec in page.records:
        row = rec.to_dict()
        row["token"] = token_by_alpha.get(rec.alpha)
        rows.append(json.dumps(row, ensure_ascii=False))
    return "\n".join(rows) + ("\n" if rows else "")
