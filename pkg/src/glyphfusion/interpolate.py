"""Style interpolation over a frozen diffusion checkpoint.

Three procedures blend a pair of same-letter reference glyphs:

* image blending: union the two rasters pixel-wise, partially noise the
  union to an intermediate step t', and denoise from there with the class
  condition active and the style condition nulled;
* condition blending: convexly mix the two style vectors and run the full
  sampling loop under the blended condition;
* noise blending: convexly mix the two guided noise predictions at every
  step, sharing a single stochastic draw per step.

A fourth baseline decodes the blended style vector directly with the
encoder/decoder network instead of a diffusion model. All procedures are
deterministic functions of (checkpoints, request, seed) and never mutate
any checkpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .data import CharClass, GlyphImage, from_model_range, to_model_range
from .diffusion import DEFAULT_GUIDANCE, DiffusionCheckpoint, ancestral_loop, guided_noise, sample
from .errors import ShapeMismatchError, StepOutOfRangeError
from .fannet import FannetCheckpoint, encode_style, fannet_interpolate
from .rng import torch_stream
from .schedule import NoiseSchedule

APPROACHES = ("image", "cond", "noise", "fannet")


@dataclass(frozen=True)
class InterpolationRequest:
    """One interpolation job over a same-letter reference pair."""

    approach: str
    r1: GlyphImage
    r2: GlyphImage
    c: CharClass
    lam: float = 0.5
    w: float = DEFAULT_GUIDANCE
    seed: int = 0
    t_prime: int | None = None  # image blending only

    def __post_init__(self) -> None:
        if self.approach not in APPROACHES:
            raise ValueError(f"approach must be one of {APPROACHES}, got {self.approach!r}")
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.w < 0:
            raise ValueError(f"guidance scale must be >= 0, got {self.w}")
        if self.r1.side != self.r2.side:
            raise ShapeMismatchError(f"reference sides differ: {self.r1.side} vs {self.r2.side}")


def or_blend(r1: GlyphImage, r2: GlyphImage) -> GlyphImage:
    """Pixel-wise OR of two glyphs: elementwise max of ink intensities."""
    if r1.pixels.shape != r2.pixels.shape:
        raise ShapeMismatchError(f"shapes differ: {r1.pixels.shape} vs {r2.pixels.shape}")
    return GlyphImage(np.maximum(r1.pixels, r2.pixels))


def blend_styles(s1: np.ndarray, s2: np.ndarray, lam: float) -> np.ndarray:
    """Convex combination lam*s1 + (1-lam)*s2 in float32."""
    return np.float32(lam) * np.asarray(s1, np.float32) + np.float32(1.0 - lam) * np.asarray(s2, np.float32)


def sdedit_interpolate(
    req: InterpolationRequest,
    ckpt: DiffusionCheckpoint,
    sched: NoiseSchedule | None = None,
) -> GlyphImage:
    """Image blending: partially noise the OR-union and denoise it.

    The union is diffused to step t' with the proper forward marginal
    ``sqrt(abar_t') r + sqrt(1 - abar_t') z`` and denoised from there with a
    null style condition and the class condition active. ``t_prime = 0``
    returns the union unchanged; the default is T/2.
    """
    if req.approach != "image":
        raise ValueError(f"expected approach 'image', got {req.approach!r}")
    sched = sched or ckpt.schedule()
    t_prime = req.t_prime if req.t_prime is not None else sched.T // 2
    if not (0 <= t_prime <= sched.T):
        raise StepOutOfRangeError(f"t_prime {t_prime} outside 0..{sched.T}")

    blended = or_blend(req.r1, req.r2)
    if t_prime == 0:
        return blended

    gen = torch_stream(req.seed, "sampling")
    rbar = torch.from_numpy(to_model_range(blended)).reshape(1, 1, blended.side, blended.side)
    ab = sched.alpha_bar_t(t_prime)
    z = torch.randn(rbar.shape, generator=gen)
    x_init = math.sqrt(ab) * rbar + math.sqrt(1.0 - ab) * z

    onehot = torch.from_numpy(req.c.one_hot()).unsqueeze(0)

    def eps_fn(x: torch.Tensor, t: int) -> torch.Tensor:
        return guided_noise(ckpt, x, t, onehot, None, req.w)

    x0 = ancestral_loop(eps_fn, sched, rbar.shape, gen, t_start=t_prime, x_init=x_init)
    return from_model_range(torch.clamp(x0, -1.0, 1.0)[0, 0].numpy())


def condition_interpolate(
    req: InterpolationRequest,
    fannet: FannetCheckpoint,
    ckpt: DiffusionCheckpoint,
    sched: NoiseSchedule | None = None,
) -> GlyphImage:
    """Condition blending: sample under the blended style vector."""
    if req.approach != "cond":
        raise ValueError(f"expected approach 'cond', got {req.approach!r}")
    s_bar = blend_styles(encode_style(req.r1, fannet), encode_style(req.r2, fannet), req.lam)
    return sample(ckpt, req.c, s_bar, req.w, torch_stream(req.seed, "sampling"), sched)


def noise_interpolate(
    req: InterpolationRequest,
    fannet: FannetCheckpoint,
    ckpt: DiffusionCheckpoint,
    sched: NoiseSchedule | None = None,
) -> GlyphImage:
    """Noise blending: mix the two guided predictions at every step.

    Each step draws one shared stochastic perturbation, so lambda is the only
    varying factor across a sweep with a fixed seed; the endpoints degenerate
    to plain conditional sampling.
    """
    if req.approach != "noise":
        raise ValueError(f"expected approach 'noise', got {req.approach!r}")
    sched = sched or ckpt.schedule()
    gen = torch_stream(req.seed, "sampling")
    s1 = torch.from_numpy(encode_style(req.r1, fannet)).unsqueeze(0)
    s2 = torch.from_numpy(encode_style(req.r2, fannet)).unsqueeze(0)
    onehot = torch.from_numpy(req.c.one_hot()).unsqueeze(0)
    lam = req.lam

    def eps_fn(x: torch.Tensor, t: int) -> torch.Tensor:
        if lam == 1.0:
            return guided_noise(ckpt, x, t, onehot, s1, req.w)
        if lam == 0.0:
            return guided_noise(ckpt, x, t, onehot, s2, req.w)
        e1 = guided_noise(ckpt, x, t, onehot, s1, req.w)
        e2 = guided_noise(ckpt, x, t, onehot, s2, req.w)
        return lam * e1 + (1.0 - lam) * e2

    x0 = ancestral_loop(eps_fn, sched, (1, 1, ckpt.side, ckpt.side), gen)
    return from_model_range(torch.clamp(x0, -1.0, 1.0)[0, 0].numpy())


def run_request(
    req: InterpolationRequest,
    fannet: FannetCheckpoint | None,
    ckpt: DiffusionCheckpoint | None,
    sched: NoiseSchedule | None = None,
) -> GlyphImage:
    """Dispatch a request to the approach it names."""
    if req.approach == "image":
        if ckpt is None:
            raise ValueError("image blending requires a diffusion checkpoint")
        return sdedit_interpolate(req, ckpt, sched)
    if fannet is None:
        raise ValueError(f"approach {req.approach!r} requires a style encoder checkpoint")
    if req.approach == "fannet":
        return fannet_interpolate(req.r1, req.r2, req.lam, req.c, fannet)
    if ckpt is None:
        raise ValueError(f"approach {req.approach!r} requires a diffusion checkpoint")
    if req.approach == "cond":
        return condition_interpolate(req, fannet, ckpt, sched)
    return noise_interpolate(req, fannet, ckpt, sched)


def lambda_sweep(
    approach: str,
    r1: GlyphImage,
    r2: GlyphImage,
    c: CharClass,
    n_steps: int,
    w: float,
    seed: int,
    fannet: FannetCheckpoint | None = None,
    ckpt: DiffusionCheckpoint | None = None,
) -> list[GlyphImage]:
    """Interpolations at lambda = 0, 1/(n-1), ..., 1, all under the same seed."""
    if n_steps < 2:
        raise ValueError(f"a sweep needs at least 2 steps, got {n_steps}")
    if approach == "image":
        raise ValueError("image blending has no lambda parameter; sweep cond/noise/fannet instead")
    out = []
    for i in range(n_steps):
        lam = i / (n_steps - 1)
        req = InterpolationRequest(approach, r1, r2, c, lam=lam, w=w, seed=seed)
        out.append(run_request(req, fannet, ckpt))
    return out


def mosaic(images: list[GlyphImage], cols: int | None = None, pad: int = 2) -> np.ndarray:
    """Tile glyphs row-major into one ink-intensity array (background-padded)."""
    if not images:
        raise ValueError("cannot tile an empty image list")
    side = images[0].side
    n = len(images)
    cols = cols if cols is not None else math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    out = np.zeros((rows * (side + pad) - pad, cols * (side + pad) - pad), dtype=np.float32)
    for i, img in enumerate(images):
        r, col = divmod(i, cols)
        y, x = r * (side + pad), col * (side + pad)
        out[y : y + side, x : x + side] = img.pixels
    return out


def save_mosaic_png(images: list[GlyphImage], path, cols: int | None = None) -> None:
    from PIL import Image

    arr = mosaic(images, cols)
    Image.fromarray(np.rint((1.0 - arr) * 255.0).astype(np.uint8), mode="L").save(path, format="PNG")
