"""The cosine noise schedule and the forward diffusion it drives.

Prints the analytic signal-retention curve, verifies the product identity,
and renders a glyph at increasing noise levels.

Run:  python demos/02_schedule_and_forward_process.py [OUT_DIR]
"""

import sys
from pathlib import Path

import numpy as np
import torch

from glyphfusion.corpus import find_font_files
from glyphfusion.data import from_model_range, rasterize_glyph, to_model_range
from glyphfusion.diffusion import forward_noise
from glyphfusion.interpolate import save_mosaic_png
from glyphfusion.schedule import cosine_schedule

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/schedule")
out.mkdir(parents=True, exist_ok=True)

print("== cosine schedule at three sizes")
for T in (4, 200, 1000):
    sched = cosine_schedule(T)
    drift = np.max(np.abs(sched.alpha_bar - np.cumprod(1.0 - sched.beta)))
    print(
        f"   T={T:5d}  abar_1={sched.alpha_bar_t(1):.6f}  abar_T={sched.alpha_bar_t(T):.2e}"
        f"  max|prod drift|={drift:.1e}"
    )

sched = cosine_schedule(200)
with open(out / "cosine_T200.csv", "w") as fh:
    fh.write("t,beta,alpha_bar\n")
    for t in range(1, 201):
        fh.write(f"{t},{sched.beta_t(t):.10f},{sched.alpha_bar_t(t):.10f}\n")
print(f"   full table -> {out / 'cosine_T200.csv'}")

print("== forward-noising a glyph along the schedule")
glyph = rasterize_glyph(find_font_files()[0], "R", 32)
x0 = torch.from_numpy(to_model_range(glyph)).reshape(1, 1, 32, 32)
gen = torch.Generator().manual_seed(0)
frames = [glyph]
for t in (25, 50, 100, 150, 200):
    eps = torch.randn(x0.shape, generator=gen)
    xt = forward_noise(x0, t, eps, sched)
    frames.append(from_model_range(torch.clamp(xt, -1, 1)[0, 0].numpy()))
    kept = sched.alpha_bar_t(t)
    print(f"   t={t:3d}  signal kept {kept:6.3f}")
save_mosaic_png(frames, out / "forward_noising.png", cols=len(frames))
print(f"== wrote {out / 'forward_noising.png'}")
