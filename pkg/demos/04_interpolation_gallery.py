"""The three interpolation procedures plus the encoder/decoder baseline,
applied to a light/bold pair, and a lambda sweep grid.

Needs checkpoints from 03_train_toy_models.py.

Run:  python demos/04_interpolation_gallery.py [MODEL_DIR]
"""

import sys
from pathlib import Path

from glyphfusion.data import CharClass, build_manifest
from glyphfusion.diffusion import DiffusionCheckpoint, sample
from glyphfusion.fannet import FannetCheckpoint, encode_style
from glyphfusion.interpolate import (
    InterpolationRequest,
    lambda_sweep,
    or_blend,
    run_request,
    save_mosaic_png,
)

root = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/toy_models")
fannet = FannetCheckpoint.load(root / "fannet.npz")
diffusion = DiffusionCheckpoint.load(root / "diffusion.npz")
out = root / "gallery"
out.mkdir(exist_ok=True)

manifest = build_manifest(root / "fonts", side=32)
recs = {(r.family, r.weight): r for r in manifest.records}
letter = "A"
c = CharClass.from_letter(letter)
r1 = manifest.load_glyph(recs[("DejaVuSerif", "Light")], letter)
r2 = manifest.load_glyph(recs[("DejaVuSerif", "Bold")], letter)
print(f"== references: DejaVuSerif Light vs Bold '{letter}'  (ink {r1.ink_fraction():.3f} / {r2.ink_fraction():.3f})")

print("== one result per approach at lambda = 0.5")
results = [r1, r2, or_blend(r1, r2)]
for approach in ("image", "cond", "noise", "fannet"):
    req = InterpolationRequest(approach, r1, r2, c, lam=0.5, w=3.0, seed=11)
    img = run_request(req, fannet, diffusion)
    results.append(img)
    print(f"   {approach:<7s} ink fraction {img.ink_fraction():.3f}")
save_mosaic_png(results, out / "approaches_row.png", cols=len(results))
print("   columns: r1, r2, OR-union, image, cond, noise, fannet")

print("== endpoint sanity: lambda=1 equals plain sampling with s1")
s1 = encode_style(r1, fannet)
plain = sample(diffusion, c, s1, 3.0, seed=11)
endpoint = run_request(InterpolationRequest("cond", r1, r2, c, lam=1.0, w=3.0, seed=11), fannet, diffusion)
print(f"   max abs pixel difference {abs(plain.pixels - endpoint.pixels).max():.2e}")

n = 9
print(f"== lambda sweep ({n} steps, shared seed) for cond and noise blending")
for approach in ("cond", "noise"):
    images = lambda_sweep(approach, r1, r2, c, n, 3.0, 11, fannet, diffusion)
    save_mosaic_png(images, out / f"sweep_{approach}.png", cols=n)
    print(f"   {approach}: ink fractions", [round(i.ink_fraction(), 3) for i in images])
print(f"== gallery under {out}")
