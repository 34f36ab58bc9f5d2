"""Corpus construction walkthrough: rasterize bundled fonts, synthesize
light/medium/bold weight triples, build split manifests, and preview the
shift augmentation.

Run:  python demos/01_dataset_pipeline.py [OUT_DIR]
"""

import sys
from pathlib import Path

import numpy as np

from glyphfusion.corpus import build_toy_corpus, find_font_files
from glyphfusion.data import (
    GlyphImage,
    augment_shift,
    build_manifest,
    load_glyph_arrays,
    split_fonts,
    validate_split_disjoint,
)
from glyphfusion.interpolate import save_mosaic_png

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/dataset")
out.mkdir(parents=True, exist_ok=True)

print("== discovering bundled fonts")
faces = find_font_files()
print(f"   {len(faces)} faces, e.g. {faces[0].name}")

print("== rendering the toy corpus (3 synthetic weights per face)")
fonts_dir = build_toy_corpus(out / "fonts", side=32)

print("== building the manifest and the train/val/test split")
manifest = build_manifest(fonts_dir, side=32)
train, val, test = split_fonts(manifest, (0.8, 0.1, 0.1), seed=0)
validate_split_disjoint(train, val, test)
print(f"   {len(manifest)} fonts -> {len(train)}/{len(val)}/{len(test)}")
for split, m in (("train", train), ("val", val), ("test", test)):
    m.save(out / f"manifest_{split}.jsonl")

print("== weight triples change stroke coverage monotonically")
by_family = {}
for rec in manifest.records:
    by_family.setdefault(rec.family, {})[rec.weight] = rec
family = sorted(by_family)[0]
row = []
for weight in ("Light", "Medium", "Bold"):
    img = manifest.load_glyph(by_family[family][weight], "A")
    row.append(img)
    print(f"   {family:<24s} {weight:<7s} ink fraction {img.ink_fraction():.3f}")
save_mosaic_png(row, out / "weights_A.png", cols=3)

print("== shift augmentation examples (30% rate, up to 20% of the side)")
rng = np.random.default_rng(7)
base = manifest.load_glyph(by_family[family]["Medium"], "G")
shifted = [base] + [augment_shift(base, rng, prob=1.0) for _ in range(7)]
save_mosaic_png(shifted, out / "augmented_G.png", cols=8)

arrays = load_glyph_arrays(train)
sheet = [GlyphImage(arrays.images[i, j]) for i in range(min(8, arrays.n_fonts)) for j in range(26)]
save_mosaic_png(sheet, out / "contact_sheet.png", cols=26)
print(f"== wrote previews under {out}")
