"""Fill scoring: edit/semantic/length similarities, context gating, SSIM.

Semantic similarity and context error depend on external providers; with
none configured both fall back to a fixed 0.5 so every run stays scoreable
offline, and each report carries the provenance of both values.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .providers import ProviderUnavailable

CosineProvider = Callable[[str, str], float]
LogProbProvider = Callable[[str, str, str], float]

OFFLINE_SEMANTIC = 0.5
OFFLINE_CONTEXT_ERROR = 0.5


@dataclass(frozen=True)
class UcsmWeights:
    """Exponents of the edit/semantic/length components."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("weights must be non-negative")
        if self.alpha + self.beta + self.gamma <= 0:
            raise ValueError("at least one weight must be positive")


@dataclass(frozen=True)
class ContextCalibration:
    """Negative-log-probability range mapped onto [0, 1] context error."""

    nll_min: float = -2.0
    nll_max: float = 10.0

    def __post_init__(self) -> None:
        if self.nll_max <= self.nll_min:
            raise ValueError("nll_max must exceed nll_min")


DEFAULT_WEIGHTS = UcsmWeights()
DEFAULT_CALIBRATION = ContextCalibration()


def levenshtein(a: str, b: str) -> int:
    """Character-level edit distance, two-row dynamic program."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1,          # deletion
                         cur[j - 1] + 1,       # insertion
                         prev[j - 1] + (ca != cb))
        prev = cur
    return prev[-1]


def edit_similarity(prediction: str, ground_truth: str) -> float:
    """1 - d_lev / max(|gt|, |pred|); two empty strings score 1."""
    longest = max(len(prediction), len(ground_truth))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(prediction, ground_truth) / longest


def length_similarity(prediction: str, ground_truth: str) -> float:
    """min/max length ratio; empty against non-empty scores 0."""
    a, b = len(prediction), len(ground_truth)
    if a == 0 and b == 0:
        return 1.0
    if a == 0 or b == 0:
        return 0.0
    return min(a, b) / max(a, b)


def semantic_similarity(prediction: str, ground_truth: str,
                        cosine_provider: CosineProvider | None = None) -> float:
    """Cosine similarity mapped onto [0, 1]; exactly 0.5 without a provider."""
    if cosine_provider is None:
        return OFFLINE_SEMANTIC
    cos = float(cosine_provider(prediction, ground_truth))
    if not -1.0 <= cos <= 1.0:
        warnings.warn(f"cosine {cos} outside [-1, 1], clipping")
        cos = min(max(cos, -1.0), 1.0)
    return (cos + 1.0) / 2.0


def combined_similarity(s_edit: float, s_sem: float, s_len: float,
                        weights: UcsmWeights = DEFAULT_WEIGHTS) -> float:
    """Weighted geometric mean of the three similarity components."""
    total = weights.alpha + weights.beta + weights.gamma
    pairs = ((s_edit, weights.alpha), (s_sem, weights.beta), (s_len, weights.gamma))
    for value, weight in pairs:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"similarity component {value} outside [0, 1]")
        if value == 0.0 and weight > 0:
            return 0.0
    return math.exp(sum(w * math.log(v) for v, w in pairs if w > 0) / total)


def context_error(logp: float | None,
                  calibration: ContextCalibration = DEFAULT_CALIBRATION) -> float:
    """Map a conditional log-probability onto [0, 1] predictability error.

    Low negative-log-probability (predictable ground truth) maps to 0,
    meaning exact wording matters; high maps to 1. Absent or non-finite
    values fall back to 0.5.
    """
    if logp is None:
        return OFFLINE_CONTEXT_ERROR
    if not math.isfinite(logp):
        warnings.warn(f"non-finite log-probability {logp}, using default context error")
        return OFFLINE_CONTEXT_ERROR
    nll = -float(logp)
    span = calibration.nll_max - calibration.nll_min
    return min(max((nll - calibration.nll_min) / span, 0.0), 1.0)


@dataclass
class UcsmReport:
    """Scored fill with full component breakdown and value provenance."""

    prediction: str
    ground_truth: str
    edit_distance: int
    s_edit: float
    s_sem: float
    s_len: float
    s_combined: float
    e_context: float
    ucsm: float
    exact: bool
    semantic_source: str  # "provider" | "default"
    context_source: str   # "provider" | "default"
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "prediction": self.prediction, "ground_truth": self.ground_truth,
            "edit_distance": self.edit_distance, "s_edit": self.s_edit,
            "s_sem": self.s_sem, "s_len": self.s_len,
            "s_combined": self.s_combined, "e_context": self.e_context,
            "ucsm": self.ucsm, "exact": self.exact,
            "semantic_source": self.semantic_source,
            "context_source": self.context_source, "warnings": self.warnings,
        }


def ucsm(prediction: str, ground_truth: str, pre_text: str = "",
         post_text: str = "", *, cosine_provider: CosineProvider | None = None,
         logprob_provider: LogProbProvider | None = None,
         weights: UcsmWeights = DEFAULT_WEIGHTS,
         calibration: ContextCalibration = DEFAULT_CALIBRATION) -> UcsmReport:
    """Score one predicted fill against its ground truth.

    The combined similarity is raised to (1 - E_context): fills whose ground
    truth is highly predictable from context are graded on the full score,
    unpredictable ones are graded leniently. An exact match short-circuits
    semantic similarity to 1 (self-similarity needs no provider) and scores
    1.0 regardless of context. Provider failures fall back to the offline
    defaults and are noted in the report warnings.
    """
    if ground_truth == "":
        raise ValueError("empty ground truth cannot be scored")
    notes: list[str] = []
    exact = prediction == ground_truth
    distance = levenshtein(prediction, ground_truth)
    s_edit = edit_similarity(prediction, ground_truth)
    s_len = length_similarity(prediction, ground_truth)

    if exact:
        s_sem = 1.0
        semantic_source = "provider" if cosine_provider is not None else "default"
    elif cosine_provider is None:
        s_sem = OFFLINE_SEMANTIC
        semantic_source = "default"
    else:
        try:
            s_sem = semantic_similarity(prediction, ground_truth, cosine_provider)
            semantic_source = "provider"
        except ProviderUnavailable as exc:
            notes.append(f"semantic provider unavailable: {exc}")
            s_sem = OFFLINE_SEMANTIC
            semantic_source = "default"

    if logprob_provider is None:
        e_ctx = OFFLINE_CONTEXT_ERROR
        context_source = "default"
    else:
        try:
            logp = float(logprob_provider(pre_text, ground_truth, post_text))
            e_ctx = context_error(logp, calibration)
            context_source = "provider"
        except ProviderUnavailable as exc:
            notes.append(f"context provider unavailable: {exc}")
            e_ctx = OFFLINE_CONTEXT_ERROR
            context_source = "default"

    s_combined = combined_similarity(s_edit, s_sem, s_len, weights)
    # 0 ** 0 evaluates to 1: a zero-similarity fill must not score perfect
    # just because the context made the ground truth fully unpredictable.
    value = 0.0 if s_combined == 0.0 else s_combined ** (1.0 - e_ctx)
    return UcsmReport(
        prediction=prediction, ground_truth=ground_truth, edit_distance=distance,
        s_edit=s_edit, s_sem=s_sem, s_len=s_len, s_combined=s_combined,
        e_context=e_ctx, ucsm=value, exact=exact,
        semantic_source=semantic_source, context_source=context_source,
        warnings=notes)


def aggregate_reports(reports: list[UcsmReport]) -> dict:
    """Corpus-level aggregates: mean UCSM, exact-match %, mean ED, CER."""
    n = len(reports)
    if n == 0:
        return {"count": 0, "mean_ucsm": None, "exact_match_percent": None,
                "mean_edit_distance": None, "cer": None}
    total_ed = sum(r.edit_distance for r in reports)
    total_gt = sum(len(r.ground_truth) for r in reports)
    return {
        "count": n,
        "mean_ucsm": sum(r.ucsm for r in reports) / n,
        "exact_match_percent": 100.0 * sum(r.exact for r in reports) / n,
        "mean_edit_distance": total_ed / n,
        "cer": total_ed / total_gt if total_gt else 0.0,
    }


def _window_sums(img: np.ndarray, k: int) -> np.ndarray:
    """Sums over every k x k window (valid positions), via integral image."""
    integral = np.zeros((img.shape[0] + 1, img.shape[1] + 1), dtype=np.float64)
    integral[1:, 1:] = img.cumsum(axis=0).cumsum(axis=1)
    return (integral[k:, k:] - integral[:-k, k:]
            - integral[k:, :-k] + integral[:-k, :-k])


def ssim(a: np.ndarray, b: np.ndarray, window: int = 8,
         data_range: float = 255.0) -> float:
    """Mean structural similarity over all valid uniform windows.

    Uses the standard stabilizers C1 = (0.01 L)^2, C2 = (0.03 L)^2 and
    population (biased) variance within each window.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError("ssim expects single-channel images")
    if min(a.shape) < window:
        raise ValueError(f"image smaller than {window} x {window} window")
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    n = float(window * window)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    mu_x = _window_sums(x, window) / n
    mu_y = _window_sums(y, window) / n
    var_x = _window_sums(x * x, window) / n - mu_x * mu_x
    var_y = _window_sums(y * y, window) / n - mu_y * mu_y
    cov = _window_sums(x * y, window) / n - mu_x * mu_y

    score_map = (((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2))
                 / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)))
    return float(score_map.mean())
