"""Command-line front end: generate, extract-blanks, score, report.

Every command writes a manifest listing its inputs, seed, and outputs.
Manifests carry no timestamps and all randomness is derived from the master
seed per page index, so reruns (serial or parallel) are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .annotations import (DegradationClass, FormatError, load_ocr_layout,
                          load_page_image, load_patch_library,
                          parse_annotation_file, save_page_image,
                          serialize_annotations)
from .blanks import dump_blank_records, extract_page_blanks
from .degrade import (CoverageTarget, apply_global_rotation, place_scribbles,
                      place_stamp, place_standard)
from .geometry import AABB, aabb_to_quad, transform_quad
from .metrics import aggregate_reports, ssim, ucsm
from .providers import (EMBED_URL_ENV, LM_URL_ENV, ProviderClient,
                        ProviderEndpoint)
from .refine import refine_page

EXCLUSION_CLASSES = ("figure", "equation")


def _derive_seed(seed: int, stream: int) -> int:
    """Stable 64-bit sub-seed for (master seed, stream index)."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1, np.uint64)[0])


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- generate

_LIBRARY_CACHE: dict[str, object] = {}


def _library(manifest_path: str):
    lib = _LIBRARY_CACHE.get(manifest_path)
    if lib is None:
        lib = load_patch_library(Path(manifest_path))
        _LIBRARY_CACHE[manifest_path] = lib
    return lib


def _clip_box_to(box: AABB, width: int, height: int) -> AABB | None:
    x1 = min(max(box.x1, 0.0), float(width))
    y1 = min(max(box.y1, 0.0), float(height))
    x2 = min(max(box.x2, 0.0), float(width))
    y2 = min(max(box.y2, 0.0), float(height))
    if x2 <= x1 or y2 <= y1:
        return None
    return AABB(x1, y1, x2, y2)


def run_generate_job(job: dict) -> dict:
    """Degrade one source page; returns its manifest entry.

    Runs in worker processes, so the job dict carries only primitives.
    """
    class_tag = DegradationClass(job["class"])
    library = _library(job["patch_manifest"])
    page = load_page_image(Path(job["image"]))
    annotations = parse_annotation_file(Path(job["annotations"]).read_text())
    page_seed = job["page_seed"]
    place_seed = _derive_seed(page_seed, 0)
    rotate_seed = _derive_seed(page_seed, 1)

    refine_log: list[dict] = []
    if class_tag.coverage_targeted:
        target = CoverageTarget(level_percent=job["level"],
                                doc_area=page.shape[0] * page.shape[1])
        raster, masks, record = place_standard(page, class_tag, target,
                                               library, place_seed)
        kept, refine_log = refine_page(annotations, masks.occ)
    elif class_tag is DegradationClass.SCRIBBLE:
        zones = [ann.quad.bounds() for ann in annotations
                 if ann.class_label in EXCLUSION_CLASSES]
        raster, removed, record = place_scribbles(page, annotations, zones,
                                                  library, place_seed)
        removed_set = set(removed)
        kept = [a for i, a in enumerate(annotations) if i not in removed_set]
        refine_log = [{"index": i, "text": annotations[i].text,
                       "decision": "removed", "reason": "scribbled"}
                      for i in sorted(removed_set)]
    else:
        raster, record = place_stamp(page, library, place_seed)
        kept = annotations

    rotated, final_annotations, transform = apply_global_rotation(
        raster, kept, rotate_seed)
    canvas_w, canvas_h = transform.dst_size
    patches = []
    for placement in record.placements:
        quad = transform_quad(transform, aabb_to_quad(placement.bbox))
        box = _clip_box_to(quad.bounds(), canvas_w, canvas_h)
        if box is not None:
            patches.append({"box": list(box.as_tuple()), "class": class_tag.value})

    out_dir = Path(job["out_dir"])
    stem = job["stem"]
    save_page_image(out_dir / f"{stem}.png", rotated)
    (out_dir / f"{stem}.txt").write_text(serialize_annotations(final_annotations))
    _write_json(out_dir / f"{stem}.patches.json", patches)
    sidecar = {
        "source_image": job["image"],
        "source_annotations": job["annotations"],
        "page_seed": page_seed,
        "generation": record.to_dict(),
        "rotation": {"seed": rotate_seed, "angle_deg": transform.angle_deg,
                     "canvas": [canvas_w, canvas_h]},
        "refinement": refine_log,
    }
    _write_json(out_dir / f"{stem}.json", sidecar)
    return {
        "stem": stem,
        "source": job["image"],
        "class": class_tag.value,
        "level": job.get("level"),
        "page_seed": page_seed,
        "outputs": [f"{stem}.png", f"{stem}.txt", f"{stem}.patches.json",
                    f"{stem}.json"],
    }


def _combo_stem(source: str, combo: dict) -> str:
    stem = Path(source).stem + "__" + combo["class"]
    if combo.get("level") is not None:
        stem += f"_T{combo['level']:g}"
    return stem


def _safe_generate_job(job: dict) -> dict:
    try:
        return {"ok": run_generate_job(job)}
    except (FormatError, ValueError, OSError) as exc:
        return {"error": {"stem": job["stem"], "error": str(exc)}}


def cmd_generate(args: argparse.Namespace) -> int:
    config = json.loads(Path(args.config).read_text())
    seed = args.seed if args.seed is not None else config.get("seed")
    if seed is None:
        print("error: no seed given (flag --seed or config key)", file=sys.stderr)
        return 2
    combos = config["combos"]
    for combo in combos:
        try:
            class_tag = DegradationClass(combo["class"])
        except ValueError:
            print(f"error: unknown degradation class {combo['class']!r}",
                  file=sys.stderr)
            return 2
        if class_tag.coverage_targeted:
            if combo.get("level") is None:
                print(f"error: class {class_tag.value} needs a coverage level",
                      file=sys.stderr)
                return 2
        elif combo.get("level") is not None:
            print(f"error: class {class_tag.value} is simulation-driven and "
                  f"takes no coverage level", file=sys.stderr)
            return 2

    pages = config["pages"]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    # Partition sources across combos so no page serves two combinations.
    shuffle_rng = np.random.Generator(np.random.Philox(seed))
    order = list(shuffle_rng.permutation(len(pages)))
    jobs = []
    for position, page_index in enumerate(order):
        combo = combos[position % len(combos)]
        page = pages[page_index]
        jobs.append({
            "image": page["image"],
            "annotations": page["annotations"],
            "class": combo["class"],
            "level": combo.get("level"),
            "patch_manifest": config["patch_manifest"],
            "page_seed": _derive_seed(seed, int(page_index)),
            "out_dir": str(out_dir),
            "stem": _combo_stem(page["image"], combo),
        })
    jobs.sort(key=lambda j: j["stem"])
    stems = [j["stem"] for j in jobs]
    if len(set(stems)) != len(stems):
        print("error: duplicate output stems; source basenames must be "
              "unique per class-level combination", file=sys.stderr)
        return 2

    entries: list[dict] = []
    errors: list[dict] = []
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_safe_generate_job, jobs))
    else:
        results = [_safe_generate_job(job) for job in jobs]
    for i, result in enumerate(results):
        if "ok" in result:
            entries.append(result["ok"])
            _progress(f"[generate] {i + 1}/{len(jobs)} {result['ok']['stem']}")
        else:
            errors.append(result["error"])

    manifest = {
        "command": "generate",
        "version": __version__,
        "seed": seed,
        "config": str(args.config),
        "combos": combos,
        "pages": entries,
        "outputs": sorted(name for e in entries for name in e["outputs"]),
    }
    _write_json(out_dir / "manifest.json", manifest)
    if errors:
        _write_json(out_dir / "errors.json", errors)
        return 1
    return 0


# ---------------------------------------------------------- extract-blanks

def _load_patch_boxes(path: Path) -> list[tuple[AABB, DegradationClass]]:
    doc = json.loads(path.read_text())
    if not isinstance(doc, list):
        raise FormatError(f"{path}: patch boxes file must be a JSON array")
    out = []
    for i, entry in enumerate(doc):
        try:
            x1, y1, x2, y2 = (float(v) for v in entry["box"])
            class_tag = DegradationClass(entry["class"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: entry {i}: {exc}") from None
        out.append((AABB(x1, y1, x2, y2), class_tag))
    return out


def cmd_extract_blanks(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        words = load_ocr_layout(Path(args.layout).read_text())
        patches = _load_patch_boxes(Path(args.patches))
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if words:
        page = extract_page_blanks(words, patches)
        blanks_text = dump_blank_records(page)
        gate_log = page.gate_log
        count = len(page.records)
    else:
        blanks_text, gate_log, count = "", [], 0
    (out_dir / "blanks.jsonl").write_text(blanks_text)
    _write_json(out_dir / "gate_log.json", gate_log)
    _write_json(out_dir / "manifest.json", {
        "command": "extract-blanks",
        "version": __version__,
        "layout": str(args.layout),
        "patches": str(args.patches),
        "blank_count": count,
        "outputs": ["blanks.jsonl", "gate_log.json"],
    })
    _progress(f"[extract-blanks] {count} blanks")
    return 0


# ------------------------------------------------------------------- score

def _resolve_providers(args: argparse.Namespace):
    if args.offline:
        return None, None
    embed_url = args.embed_url or os.environ.get(EMBED_URL_ENV)
    lm_url = args.lm_url or os.environ.get(LM_URL_ENV)
    cosine = None
    logprob = None
    if embed_url:
        cosine = ProviderClient(ProviderEndpoint(embed_url)).cosine
    if lm_url:
        logprob = ProviderClient(ProviderEndpoint(lm_url)).logprob
    return cosine, logprob


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}", line=lineno) from None
    return rows


def cmd_score(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        blank_rows = _read_jsonl(Path(args.blanks))
        prediction_rows = _read_jsonl(Path(args.predictions))
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    blanks = {row["alpha"]: row for row in blank_rows}
    cosine, logprob = _resolve_providers(args)

    def score_one(row: dict):
        alpha = row.get("alpha")
        blank = blanks.get(alpha)
        if blank is None:
            return alpha, None, f"unknown blank id {alpha}"
        try:
            report = ucsm(row["prediction"], row["ground_truth"],
                          pre_text=blank.get("pre_text", ""),
                          post_text=blank.get("post_text", ""),
                          cosine_provider=cosine, logprob_provider=logprob)
        except (KeyError, ValueError) as exc:
            return alpha, None, str(exc)
        return alpha, report, None

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(score_one, prediction_rows))
    else:
        results = [score_one(row) for row in prediction_rows]

    reports = []
    errors = []
    lines = []
    for alpha, report, error in results:
        if error is not None:
            errors.append({"alpha": alpha, "error": error})
            continue
        reports.append(report)
        lines.append(json.dumps({"alpha": alpha, **report.to_dict()},
                                ensure_ascii=False))
    (out_dir / "scores.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""))

    provenance = {"semantic": {"provider": 0, "default": 0},
                  "context": {"provider": 0, "default": 0}}
    for report in reports:
        provenance["semantic"][report.semantic_source] += 1
        provenance["context"][report.context_source] += 1
    summary = {
        "command": "score",
        "version": __version__,
        "blanks": str(args.blanks),
        "predictions": str(args.predictions),
        "offline": bool(args.offline),
        "aggregates": aggregate_reports(reports),
        "provenance": provenance,
        "error_count": len(errors),
        "outputs": ["scores.jsonl", "summary.json"],
    }
    _write_json(out_dir / "summary.json", summary)
    _progress(f"[score] {len(reports)} scored, {len(errors)} errors")
    if errors:
        _write_json(out_dir / "errors.json", errors)
        return 1
    return 0


# ------------------------------------------------------------------ report

def _mean_ucsm(scores_path: Path) -> float | None:
    rows = _read_jsonl(scores_path)
    values = [row["ucsm"] for row in rows if "ucsm" in row]
    if not values:
        return None
    return sum(values) / len(values)


def _type_ssim(restored_dir: Path, reference_dir: Path,
               errors: list[dict]) -> float | None:
    restored = {p.name: p for p in sorted(restored_dir.iterdir()) if p.is_file()}
    reference = {p.name: p for p in sorted(reference_dir.iterdir()) if p.is_file()}
    for name in sorted(set(restored) ^ set(reference)):
        errors.append({"image": name, "error": "unpaired image"})
    values = []
    for name in sorted(set(restored) & set(reference)):
        with Image.open(restored[name]) as a, Image.open(reference[name]) as b:
            ga = np.asarray(a.convert("L"), dtype=np.uint8)
            gb = np.asarray(b.convert("L"), dtype=np.uint8)
        if ga.shape != gb.shape:
            errors.append({"image": name, "error": f"size mismatch {ga.shape} vs {gb.shape}"})
            continue
        values.append(ssim(ga, gb))
    if not values:
        return None
    return float(np.mean(values))


def _format_cell(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def cmd_report(args: argparse.Namespace) -> int:
    config = json.loads(Path(args.config).read_text())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    errors: list[dict] = []
    rows = []
    for entry in config.get("types", []):
        name = entry["name"]
        ssim_value = None
        ucsm_value = None
        if entry.get("restored_dir") and entry.get("reference_dir"):
            ssim_value = _type_ssim(Path(entry["restored_dir"]),
                                    Path(entry["reference_dir"]), errors)
        if entry.get("scores"):
            ucsm_value = _mean_ucsm(Path(entry["scores"]))
        rows.append((name, ssim_value, ucsm_value))

    if rows:
        ssim_values = [s for _, s, _ in rows if s is not None]
        ucsm_values = [u for _, _, u in rows if u is not None]
        average = ("Average",
                   float(np.mean(ssim_values)) if ssim_values else None,
                   float(np.mean(ucsm_values)) if ucsm_values else None)
        rows.append(average)

    csv_lines = ["type,ssim,ucsm"]
    for name, s, u in rows:
        csv_lines.append(f"{name},{_format_cell(s)},{_format_cell(u)}")
    (out_dir / "report.csv").write_text("\n".join(csv_lines) + "\n")

    name_w = max([len(r[0]) for r in rows] + [4])
    text_lines = [f"{'type'.ljust(name_w)}  {'SSIM':>8}  {'UCSM':>8}"]
    for name, s, u in rows:
        text_lines.append(f"{name.ljust(name_w)}  {_format_cell(s):>8}  "
                          f"{_format_cell(u):>8}")
    table = "\n".join(text_lines) + "\n"
    (out_dir / "report.txt").write_text(table)

    _write_json(out_dir / "manifest.json", {
        "command": "report",
        "version": __version__,
        "config": str(args.config),
        "rows": [{"type": n, "ssim": s, "ucsm": u} for n, s, u in rows],
        "outputs": ["report.csv", "report.txt"],
    })
    _progress(table.rstrip("\n"))
    if errors:
        _write_json(out_dir / "errors.json", errors)
        return 1
    return 0


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="occlubench",
        description="Occluded-document benchmark pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="degrade source pages")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--workers", type=int, default=1)
    p_gen.set_defaults(func=cmd_generate)

    p_ext = sub.add_parser("extract-blanks",
                           help="extract blanks from an OCR layout")
    p_ext.add_argument("--layout", required=True)
    p_ext.add_argument("--patches", required=True)
    p_ext.add_argument("--out", required=True)
    p_ext.set_defaults(func=cmd_extract_blanks)

    p_score = sub.add_parser("score", help="score predicted fills")
    p_score.add_argument("--predictions", required=True)
    p_score.add_argument("--blanks", required=True)
    p_score.add_argument("--out", required=True)
    p_score.add_argument("--embed-url", default=None)
    p_score.add_argument("--lm-url", default=None)
    p_score.add_argument("--offline", action="store_true",
                         help="ignore provider flags and env vars")
    p_score.add_argument("--workers", type=int, default=1)
    p_score.set_defaults(func=cmd_score)

    p_rep = sub.add_parser("report", help="per-type SSIM/UCSM table")
    p_rep.add_argument("--config", required=True)
    p_rep.add_argument("--out", required=True)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
