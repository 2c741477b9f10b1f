#!/usr/bin/env python3
"""End-to-end demo: synthesize a corpus, degrade it, extract fill-mask
blanks from one degraded page, score a batch of toy predictions offline,
and build the per-type summary report.

The demo needs no network and no trained models: semantic similarity and
context error fall back to their documented 0.5 defaults, and the
"restored" images for the report are noised copies of the clean pages.
Run `scripts/serve_mock_providers.py` and set UCSM_EMBED_URL / UCSM_LM_URL
to exercise the live-provider path instead of the defaults.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from occlubench.annotations import parse_annotation_file
from occlubench.cli import main as cli
from occlubench.synthetic import perfect_ocr

sys.path.insert(0, str(Path(__file__).resolve().parent))
from make_demo_assets import build_corpus  # noqa: E402


def run(args: list[str]) -> None:
    code = cli(args)
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}: {args}")


def fabricate_predictions(blanks_path: Path, out_path: Path, seed: int) -> int:
    """Toy predictions: exact fills, typo fills, and truncated fills.

    The blanks carry no reconstruction target (that lives with the
    benchmark corpus), so the demo invents a ground truth per blank and
    derives predictions of varying quality from it.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    vocab = ["results", "model", "sample", "figure", "method", "value"]
    rows = []
    for line in blanks_path.read_text().splitlines():
        blank = json.loads(line)
        n = max(1, blank["max_chars"] // 6)
        gt = " ".join(vocab[int(rng.integers(0, len(vocab)))] for _ in range(n))
        style = int(rng.integers(0, 3))
        if style == 0:
            pred = gt
        elif style == 1:
            chars = list(gt)
            chars[int(rng.integers(0, len(chars)))] = "#"
            pred = "".join(chars)
        else:
            pred = gt[: max(1, len(gt) // 2)]
        rows.append({"alpha": blank["alpha"], "prediction": pred,
                     "ground_truth": gt})
    out_path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return len(rows)


def fake_restorations(pages_dir: Path, restored_dir: Path,
                      reference_dir: Path, seed: int) -> None:
    """Stand-in restorer: the clean page plus faint pixel noise.

    Also mirrors the clean pages into an image-only reference directory,
    since the report pairs every file in restored/reference by name.
    """
    restored_dir.mkdir(parents=True, exist_ok=True)
    reference_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.Philox(seed))
    for src in sorted(pages_dir.glob("*.png")):
        img = np.asarray(Image.open(src).convert("RGB"), dtype=np.int16)
        noise = rng.integers(-4, 5, size=img.shape, dtype=np.int16)
        out = np.clip(img + noise, 0, 255).astype(np.uint8)
        Image.fromarray(out, "RGB").save(restored_dir / src.name)
        Image.fromarray(img.astype(np.uint8), "RGB").save(reference_dir / src.name)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default="demo_run")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--pages", type=int, default=6)
    parser.add_argument("--size", type=int, default=1000)
    args = parser.parse_args()
    work = Path(args.workdir)

    print("== 1/5 corpus ==")
    config_path = build_corpus(work / "corpus", args.seed, args.pages, args.size)

    print("== 2/5 generate ==")
    degraded = work / "degraded"
    run(["generate", "--config", str(config_path), "--out", str(degraded)])

    print("== 3/5 extract-blanks ==")
    manifest = json.loads((degraded / "manifest.json").read_text())
    coverage = [e for e in manifest["pages"]
                if e["class"] in ("BlackInk", "Burnt", "Whitener", "Dust")]
    # Not every degraded page has occluded gaps; demo the first that does.
    blanks_dir = work / "blanks"
    layout_path = work / "layout.json"
    selected = coverage[0]
    for entry in coverage:
        annotations = parse_annotation_file(
            (degraded / f"{entry['stem']}.txt").read_text())
        layout_path.write_text(json.dumps(
            [{"text": w.text, "box": list(w.box.as_tuple()),
              "confidence": w.confidence} for w in perfect_ocr(annotations)]))
        run(["extract-blanks", "--layout", str(layout_path),
             "--patches", str(degraded / f"{entry['stem']}.patches.json"),
             "--out", str(blanks_dir)])
        selected = entry
        if json.loads((blanks_dir / "manifest.json").read_text())["blank_count"]:
            break
    stem = selected["stem"]

    print("== 4/5 score (offline defaults) ==")
    preds_path = work / "demo_predictions.jsonl"
    n = fabricate_predictions(blanks_dir / "blanks.jsonl", preds_path,
                              args.seed + 2)
    scores_dir = work / "scores"
    if n:
        run(["score", "--blanks", str(blanks_dir / "blanks.jsonl"),
             "--predictions", str(preds_path), "--out", str(scores_dir),
             "--offline"])
    else:
        print(f"page {stem} produced no blanks; skipping the scoring step")

    print("== 5/5 report ==")
    fake_restorations(work / "corpus" / "pages", work / "restored",
                      work / "reference", args.seed + 3)
    report_config = work / "report_config.json"
    entry = {"name": selected["class"],
             "restored_dir": str(work / "restored"),
             "reference_dir": str(work / "reference")}
    if n:
        entry["scores"] = str(scores_dir / "scores.jsonl")
    report_config.write_text(json.dumps({"types": [entry]}, indent=2))
    report_dir = work / "report"
    run(["report", "--config", str(report_config), "--out", str(report_dir)])

    print()
    print(f"degraded pages:   {degraded}")
    print(f"blank prompts:    {blanks_dir / 'blanks.jsonl'} ({n} blanks)")
    if n:
        print(f"scores:           {scores_dir / 'summary.json'}")
    print(f"report:           {report_dir / 'report.txt'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
