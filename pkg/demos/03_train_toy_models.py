"""Train the three toy models (style encoder, classifier, diffusion) on the
bundled-font corpus and keep the checkpoints for the later demos.

Budgets are CLI-tunable; the defaults finish in a few minutes and produce a
*weak* diffusion model. For readable samples use something like
``--diffusion-iters 12000`` (roughly a CPU lunch break).

Run:  python demos/03_train_toy_models.py [OUT_DIR] [--diffusion-iters N]
"""

import argparse
from pathlib import Path

import numpy as np

from glyphfusion.corpus import build_toy_corpus
from glyphfusion.data import build_manifest, load_glyph_arrays, split_fonts
from glyphfusion.diffusion import DiffusionConfig, train_diffusion
from glyphfusion.evaluate import ClassifierConfig, train_classifier
from glyphfusion.fannet import FannetConfig, train_fannet

parser = argparse.ArgumentParser()
parser.add_argument("out", nargs="?", default="demo_output/toy_models")
parser.add_argument("--fannet-iters", type=int, default=1500)
parser.add_argument("--classifier-iters", type=int, default=800)
parser.add_argument("--diffusion-iters", type=int, default=1500)
args = parser.parse_args()

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)

fonts = out / "fonts"
if not fonts.exists():
    print("== rendering toy corpus")
    build_toy_corpus(fonts, side=32)
manifest = build_manifest(fonts, side=32)
train_m, val_m, _ = split_fonts(manifest, (0.8, 0.1, 0.1), seed=0)
train_arr = load_glyph_arrays(train_m)
val_arr = load_glyph_arrays(val_m)
print(f"== corpus ready: {train_arr.n_fonts} training fonts")

print(f"== training style encoder ({args.fannet_iters} iters)")
fannet = train_fannet(
    train_arr, val_arr,
    FannetConfig(style_dim=64, side=32, enc_channels=(16, 32, 64),
                 iters=args.fannet_iters, val_every=250, patience=4, seed=0),
)
fannet.save(out / "fannet.npz")
print(f"   best val MAE {fannet.meta['best_val_loss']:.4f}")

print(f"== training classifier ({args.classifier_iters} iters)")
clf = train_classifier(
    train_arr, val_arr,
    ClassifierConfig(side=32, base_channels=16, n_stages=3, iters=args.classifier_iters, seed=0),
)
clf.save(out / "classifier.npz")
print(f"   held-out accuracy {clf.held_out_accuracy:.3f}")

print(f"== training diffusion model ({args.diffusion_iters} iters)")
diffusion = train_diffusion(
    train_arr, fannet,
    DiffusionConfig(T=200, side=32, base_channels=32, channel_mult=(1, 2), num_res_blocks=1,
                    batch_size=32, lr=1e-4, iters=args.diffusion_iters,
                    p_drop=0.1, w=3.0, augment_prob=0.0, seed=0),
    log_every=250,
)
diffusion.save(out / "diffusion.npz")
recent = float(np.mean(diffusion.curves["train_loss"][-200:]))
print(f"   final loss (200-step mean) {recent:.4f}")
print(f"== checkpoints under {out}")
