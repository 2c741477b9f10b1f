"""Occluded-document benchmark toolkit.

Three stages: synthesize degraded pages with pixel-exact coverage control
and refined word-level ground truth, extract occluded blank regions from
OCR layouts as length-conditioned fill-mask prompts, and score predicted
fills with the UCSM metric (offline-safe provider seams).
"""

__version__ = "0.1.0"

from .annotations import (DegradationClass, FormatError, OcrWord,
                          PatchAsset, PatchLibrary, WordAnnotation,
                          load_ocr_layout, load_patch_library,
                          parse_annotation_file, serialize_annotations)
from .blanks import (BlankRecord, PageBlanks, PromptToken, TextLine,
                     extract_blanks, extract_page_blanks,
                     extract_scribble_blanks, generate_prompt_tokens,
                     group_lines, parse_prompt_token, visibility_gate)
from .degrade import (CoverageTarget, GenerationRecord, MaskPair, Placement,
                      apply_global_rotation, compute_patch_scale,
                      place_scribbles, place_stamp, place_standard,
                      sample_initial_position)
from .geometry import (AABB, OrientedQuad, Point, RotationTransform,
                       aabb_to_quad, intersect, make_rotation, transform_quad)
from .metrics import (ContextCalibration, UcsmReport, UcsmWeights,
                      aggregate_reports, combined_similarity, context_error,
                      edit_similarity, length_similarity, levenshtein,
                      semantic_similarity, ssim, ucsm)
from .providers import (ProviderClient, ProviderEndpoint, ProviderUnavailable,
                        fetch_cosine, fetch_logprob)
from .refine import (Decision, RefinementConfig, RefinementOutcome,
                     RemovalReason, refine_page, refine_word)
