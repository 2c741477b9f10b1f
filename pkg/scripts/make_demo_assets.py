#!/usr/bin/env python3
"""Build a small self-contained demo corpus: patch assets, source pages,
and a ready-to-run generation config.

Everything is synthetic and seeded, so repeated runs with the same seed
produce identical bytes. The output directory layout:

    <out>/assets/*.png + manifest.json   patch library
    <out>/pages/page_*.png + .txt        clean pages with word annotations
    <out>/gen_config.json                config for `occlubench generate`
"""
import argparse
import json
from pathlib import Path

import numpy as np
from PIL import Image

from occlubench.annotations import DegradationClass, serialize_annotations
from occlubench.synthetic import make_patch_asset, make_text_page


def build_library(out_dir: Path, seed: int, per_class: int) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.Philox(seed))
    manifest = {}
    for tag in DegradationClass:
        names = []
        for k in range(per_class):
            raster = make_patch_asset(rng, tag)
            name = f"{tag.value.lower()}_{k}.png"
            Image.fromarray(raster, "RGBA").save(out_dir / name)
            names.append(name)
        manifest[tag.value] = names
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def build_pages(out_dir: Path, seed: int, count: int, size: int) -> list[dict]:
    out_dir.mkdir(parents=True, exist_ok=True)
    pages = []
    for i in range(count):
        rng = np.random.Generator(np.random.Philox([seed, i]))
        page, annotations = make_text_page(rng, width=size, height=size)
        img = out_dir / f"page_{i:03d}.png"
        txt = out_dir / f"page_{i:03d}.txt"
        Image.fromarray(page, "RGB").save(img)
        txt.write_text(serialize_annotations(annotations))
        pages.append({"image": str(img), "annotations": str(txt)})
    return pages


def build_corpus(out: Path, seed: int, count: int, size: int,
                 per_class: int = 3) -> Path:
    manifest = build_library(out / "assets", seed, per_class)
    pages = build_pages(out / "pages", seed + 1, count, size)
    config = {
        "seed": seed,
        "patch_manifest": str(manifest),
        "pages": pages,
        "combos": [
            {"class": "BlackInk", "level": 1.0},
            {"class": "Burnt", "level": 1.5},
            {"class": "Whitener", "level": 0.5},
            {"class": "Dust", "level": 1.0},
            {"class": "Scribble"},
            {"class": "Stamp"},
        ],
    }
    config_path = out / "gen_config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n")
    return config_path


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="demo_corpus", help="output directory")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--pages", type=int, default=6)
    parser.add_argument("--size", type=int, default=1000,
                        help="page side length in pixels")
    args = parser.parse_args()
    config_path = build_corpus(Path(args.out), args.seed, args.pages, args.size)
    print(f"demo corpus ready; generation config at {config_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
