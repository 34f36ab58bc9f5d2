"""Measurement walkthrough: recognition accuracy of generated glyphs,
distribution-level precision/recall in classifier feature space, and the
light/medium/bold interpolation MSE protocol.

Needs checkpoints from 03_train_toy_models.py.

Run:  python demos/05_evaluation_metrics.py [MODEL_DIR]
"""

import sys
from pathlib import Path

import numpy as np

from glyphfusion.data import CharClass, build_manifest, load_glyph_arrays, split_fonts
from glyphfusion.diffusion import DiffusionCheckpoint, sample_batch
from glyphfusion.evaluate import (
    ClassifierCheckpoint,
    collect_weight_triples,
    embed_features,
    improved_precision_recall,
    recognition_accuracy,
    weight_triple_mse,
)
from glyphfusion.fannet import FannetCheckpoint, encode_batch
from glyphfusion.rng import np_stream

root = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/toy_models")
fannet = FannetCheckpoint.load(root / "fannet.npz")
diffusion = DiffusionCheckpoint.load(root / "diffusion.npz")
clf = ClassifierCheckpoint.load(root / "classifier.npz")

manifest = build_manifest(root / "fonts", side=32)
train_m, _, _ = split_fonts(manifest, (0.8, 0.1, 0.1), seed=0)
arrays = load_glyph_arrays(train_m)
imgs, labels = arrays.flat()

n = 40
print(f"== sampling {n} conditional glyphs (style = training-font references)")
rng = np_stream(2, "demo-eval")
idx = rng.integers(0, imgs.shape[0], size=n)
classes = [CharClass(int(labels[i]), arrays.alphabet[int(labels[i])]) for i in idx]
styles = encode_batch(imgs[idx], fannet)
generated = sample_batch(diffusion, classes, styles, 3.0, seeds=list(range(n)))

acc = recognition_accuracy(generated, labels[idx], clf)
print(f"   recognition accuracy {acc:.2f}  (classifier held-out baseline {clf.held_out_accuracy:.2f})")

print("== distribution-level precision/recall (k = 3, classifier features)")
real_feats = embed_features(imgs[idx], clf)
gen_feats = embed_features(generated, clf)
precision, recall = improved_precision_recall(real_feats, gen_feats, k=3)
print(f"   precision {precision:.3f}  recall {recall:.3f}")
p_same, r_same = improved_precision_recall(real_feats, real_feats.copy(), k=3)
print(f"   sanity, real vs itself: precision {p_same:.1f} recall {r_same:.1f}")

print("== light/medium/bold MSE protocol at lambda = 0.5 (medium = quasi-ground-truth)")
triples = collect_weight_triples(manifest)[:4]
for approach in ("fannet", "cond"):
    per_cat, avg = weight_triple_mse(
        triples, approach, "AHOS", manifest, fannet=fannet, diffusion=diffusion, w=3.0, seed=5
    )
    cats = "  ".join(f"{k}={v:.3f}" for k, v in per_cat.items())
    print(f"   {approach:<7s} average {avg:.3f}   {cats}")
print("== done")
