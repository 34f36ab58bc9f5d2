"""Conditional denoising diffusion: forward process, guidance, sampling, training.

The noise predictor is conditioned on (step, character class, style vector).
Sampling combines the unconditional (null-token) and conditional predictions
as ``(1 - w) * eps(x_t | t) + w * eps(x_t | t, c, s)`` with guidance scale
``w``, then applies the standard ancestral update
``x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps) / sqrt(alpha_t) + sigma_t z``
with ``sigma_t^2 = beta_t`` and no noise on the final step.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
from torch.nn import functional as F

from . import checkpoints as ckpt_io
from .data import (
    DEFAULT_ALPHABET,
    CharClass,
    GlyphArrays,
    GlyphImage,
    Manifest,
    from_model_range,
    glyph_batches,
    load_glyph_arrays,
    to_model_range,
)
from .errors import DivergenceError, ShapeMismatchError, StepOutOfRangeError
from .fannet import FannetCheckpoint, encode_batch
from .rng import derive_seed, np_stream, torch_stream
from .schedule import NoiseSchedule, make_schedule
from .unet import GlyphUNet, UNetConfig

log = logging.getLogger(__name__)

DEFAULT_GUIDANCE = 3.0

#: signature of the per-step noise estimate used by the ancestral loop
EpsFn = Callable[[torch.Tensor, int], torch.Tensor]


@dataclass(frozen=True)
class DiffusionConfig:
    T: int = 200
    side: int = 32
    alphabet: str = DEFAULT_ALPHABET
    schedule: str = "cosine"
    base_channels: int = 64
    channel_mult: tuple[int, ...] = (1, 2, 2)
    num_res_blocks: int = 2
    attn_middle: bool = True
    batch_size: int = 64
    lr: float = 1e-4
    iters: int = 30000
    p_drop: float = 0.1
    w: float = DEFAULT_GUIDANCE
    augment_prob: float = 0.3
    augment_max_frac: float = 0.2
    seed: int = 0

    def unet_config(self, style_dim: int) -> UNetConfig:
        return UNetConfig(
            side=self.side,
            n_classes=len(self.alphabet),
            style_dim=style_dim,
            base_channels=self.base_channels,
            channel_mult=self.channel_mult,
            num_res_blocks=self.num_res_blocks,
            attn_middle=self.attn_middle,
        )


@dataclass
class DiffusionCheckpoint:
    """Trained noise predictor plus schedule and conditioning metadata."""

    model: GlyphUNet
    meta: dict
    curves: dict[str, np.ndarray]
    opt_arrays: dict[str, np.ndarray] | None = None

    @property
    def T(self) -> int:
        return int(self.meta["T"])

    @property
    def side(self) -> int:
        return int(self.meta["canvas_side"])

    @property
    def alphabet(self) -> str:
        return str(self.meta["alphabet"])

    @property
    def style_dim(self) -> int:
        return int(self.meta["style_dim"])

    @property
    def default_w(self) -> float:
        return float(self.meta["w"])

    @property
    def fannet_hash(self) -> str:
        return str(self.meta["fannet_hash"])

    @property
    def step(self) -> int:
        return int(self.meta["step"])

    @property
    def null_style_token(self) -> np.ndarray:
        return self.model.null_style.detach().numpy().copy()

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.meta["schedule"], self.T)

    def content_hash(self) -> str:
        return ckpt_io.content_hash(ckpt_io.state_dict_to_arrays(self.model), self.meta)

    def save(self, path) -> None:
        arrays = ckpt_io.state_dict_to_arrays(self.model)
        arrays.update({f"curve::{k}": v for k, v in self.curves.items()})
        if self.opt_arrays:
            arrays.update(self.opt_arrays)
        ckpt_io.save_arrays(path, arrays, self.meta)

    @classmethod
    def load(cls, path) -> "DiffusionCheckpoint":
        arrays, meta = ckpt_io.load_arrays(path)
        if meta.get("kind") != "diffusion":
            raise ValueError(f"{path} is not a diffusion checkpoint")
        model = GlyphUNet(UNetConfig.from_meta(meta["arch"]))
        model.load_state_dict(ckpt_io.arrays_to_state_dict(arrays))
        model.eval()
        curves = {k.split("::", 1)[1]: v for k, v in arrays.items() if k.startswith("curve::")}
        opt_arrays = {k: v for k, v in arrays.items() if k.startswith("opt::")} or None
        return cls(model, meta, curves, opt_arrays)


# ---------------------------------------------------------------------------
# core per-step operations
# ---------------------------------------------------------------------------


def _gather(values: np.ndarray, t: torch.Tensor | int, sched: NoiseSchedule, ndim: int) -> torch.Tensor:
    """Per-sample schedule constants, shaped for broadcasting against images."""
    if isinstance(t, int):
        sched.check_step(t)
        idx = torch.tensor([t - 1])
    else:
        if bool((t < 1).any()) or bool((t > sched.T).any()):
            raise StepOutOfRangeError(f"steps outside 1..{sched.T}")
        idx = (t - 1).long()
    out = torch.from_numpy(values).float()[idx]
    return out.reshape(-1, *([1] * (ndim - 1)))


def forward_noise(x0: torch.Tensor, t: torch.Tensor | int, eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """Diffuse x0 to step t: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    ab = _gather(sched.alpha_bar, t, sched, x0.ndim)
    return torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * eps


def predict_noise(
    ckpt: DiffusionCheckpoint,
    x_t: torch.Tensor,
    t: torch.Tensor | int,
    c: torch.Tensor | None,
    s: torch.Tensor | None,
) -> torch.Tensor:
    """Run the frozen noise predictor; None conditions select the null pathway."""
    if x_t.ndim != 4 or x_t.shape[-1] != ckpt.side:
        raise ShapeMismatchError(f"expected (B, 1, {ckpt.side}, {ckpt.side}) input, got {tuple(x_t.shape)}")
    if isinstance(t, int):
        ckpt.schedule().check_step(t)
        t = torch.full((x_t.shape[0],), t, dtype=torch.long)
    ckpt.model.eval()
    with torch.no_grad():
        return ckpt.model(x_t, t, c, s)


def guided_noise(
    ckpt: DiffusionCheckpoint,
    x_t: torch.Tensor,
    t: torch.Tensor | int,
    c: torch.Tensor | None,
    s: torch.Tensor | None,
    w: float,
) -> torch.Tensor:
    """Classifier-free guidance: (1 - w) * uncond + w * cond."""
    if w < 0:
        raise ValueError(f"guidance scale must be >= 0, got {w}")
    cond = predict_noise(ckpt, x_t, t, c, s)
    if w == 1.0:
        return cond
    uncond = predict_noise(ckpt, x_t, t, None, None)
    return (1.0 - w) * uncond + w * cond


def denoise_step(
    x_t: torch.Tensor,
    t: int,
    eps_hat: torch.Tensor,
    sched: NoiseSchedule,
    generator: torch.Generator,
) -> torch.Tensor:
    """One ancestral step x_t -> x_{t-1}; stochastic only for t > 1."""
    sched.check_step(t)
    beta = sched.beta_t(t)
    alpha = sched.alpha_t(t)
    ab = sched.alpha_bar_t(t)
    mean = (x_t - (beta / math.sqrt(1.0 - ab)) * eps_hat) / math.sqrt(alpha)
    if t > 1:
        z = torch.randn(x_t.shape, generator=generator)
        return mean + math.sqrt(beta) * z
    return mean


def ancestral_loop(
    eps_fn: EpsFn,
    sched: NoiseSchedule,
    shape: tuple[int, ...],
    generator: torch.Generator,
    t_start: int | None = None,
    x_init: torch.Tensor | None = None,
) -> torch.Tensor:
    """Denoise from t_start (default T) to 0, drawing x_T if no x_init given."""
    t_start = sched.T if t_start is None else t_start
    sched.check_step(t_start)
    x = torch.randn(shape, generator=generator) if x_init is None else x_init
    for t in range(t_start, 0, -1):
        x = denoise_step(x, t, eps_fn(x, t), sched, generator)
    return x


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _class_onehot(c: CharClass, n: int = 1) -> torch.Tensor:
    return torch.from_numpy(c.one_hot()).unsqueeze(0).expand(n, -1).contiguous()


def _style_tensor(s: np.ndarray | None, ckpt: DiffusionCheckpoint, n: int = 1) -> torch.Tensor | None:
    if s is None:
        return None
    s = np.asarray(s, dtype=np.float32)
    if s.shape != (ckpt.style_dim,):
        raise ShapeMismatchError(f"style vector shape {s.shape} != ({ckpt.style_dim},)")
    return torch.from_numpy(s).unsqueeze(0).expand(n, -1).contiguous()


def sample(
    ckpt: DiffusionCheckpoint,
    c: CharClass,
    s: np.ndarray | None,
    w: float,
    seed: int | torch.Generator,
    sched: NoiseSchedule | None = None,
) -> GlyphImage:
    """Generate one glyph of class c in style s by the full T-step loop."""
    sched = sched or ckpt.schedule()
    gen = seed if isinstance(seed, torch.Generator) else torch_stream(int(seed), "sampling")
    onehot = _class_onehot(c)
    style = _style_tensor(s, ckpt)

    def eps_fn(x: torch.Tensor, t: int) -> torch.Tensor:
        return guided_noise(ckpt, x, t, onehot, style, w)

    x0 = ancestral_loop(eps_fn, sched, (1, 1, ckpt.side, ckpt.side), gen)
    return from_model_range(torch.clamp(x0, -1.0, 1.0)[0, 0].numpy())


def sample_batch(
    ckpt: DiffusionCheckpoint,
    classes: list[CharClass],
    styles: np.ndarray | None,
    w: float,
    seeds: list[int],
    sched: NoiseSchedule | None = None,
) -> np.ndarray:
    """Generate len(seeds) glyphs jointly; per-sample noise comes from per-seed streams.

    Returns (N, side, side) ink images. Faster than repeated :func:`sample`
    calls, but batched network evaluation is not guaranteed bitwise equal to
    the single-sample path.
    """
    if len(classes) != len(seeds):
        raise ValueError("classes and seeds must have the same length")
    sched = sched or ckpt.schedule()
    n = len(seeds)
    gens = [torch_stream(int(sd), "sampling") for sd in seeds]
    onehot = torch.stack([torch.from_numpy(c.one_hot()) for c in classes])
    style = None
    if styles is not None:
        styles = np.asarray(styles, dtype=np.float32)
        if styles.shape != (n, ckpt.style_dim):
            raise ShapeMismatchError(f"styles shape {styles.shape} != ({n}, {ckpt.style_dim})")
        style = torch.from_numpy(styles)

    shape = (1, 1, ckpt.side, ckpt.side)
    x = torch.cat([torch.randn(shape, generator=g) for g in gens])
    for t in range(sched.T, 0, -1):
        eps = guided_noise(ckpt, x, t, onehot, style, w)
        beta, alpha, ab = sched.beta_t(t), sched.alpha_t(t), sched.alpha_bar_t(t)
        x = (x - (beta / math.sqrt(1.0 - ab)) * eps) / math.sqrt(alpha)
        if t > 1:
            x = x + math.sqrt(beta) * torch.cat([torch.randn(shape, generator=g) for g in gens])
    return np.stack([from_model_range(torch.clamp(x, -1, 1)[i, 0].numpy()).pixels for i in range(n)])


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    model: GlyphUNet
    opt: torch.optim.Optimizer
    step: int = 0


def train_step(
    state: TrainState,
    batch_images: np.ndarray,
    batch_labels: np.ndarray,
    fannet: FannetCheckpoint,
    sched: NoiseSchedule,
    cfg: DiffusionConfig,
    np_rng: np.random.Generator,
    torch_gen: torch.Generator,
) -> float:
    """One optimization step on a batch of (ink image, class index) pairs.

    The style condition of each sample is its own frozen-encoder embedding;
    with probability ``p_drop`` both conditions jointly fall back to the
    learned null pathway.
    """
    n = batch_images.shape[0]
    styles = torch.from_numpy(encode_batch(batch_images, fannet))
    x0 = torch.from_numpy(to_model_range(batch_images)).unsqueeze(1)
    onehot = F.one_hot(torch.from_numpy(np.ascontiguousarray(batch_labels)), len(cfg.alphabet)).float()

    t = torch.from_numpy(np_rng.integers(1, sched.T + 1, size=n))
    eps = torch.randn(x0.shape, generator=torch_gen)
    x_t = forward_noise(x0, t, eps, sched)
    null_mask = torch.from_numpy(np_rng.random(n) < cfg.p_drop)

    state.model.train()
    pred = state.model(x_t, t, onehot, styles, null_mask)
    loss = F.mse_loss(pred, eps)
    if not torch.isfinite(loss):
        raise DivergenceError(f"diffusion training loss became non-finite at step {state.step + 1}")
    state.opt.zero_grad()
    loss.backward()
    state.opt.step()
    state.step += 1
    return float(loss.detach())


def train_diffusion(
    train: Manifest | GlyphArrays,
    fannet: FannetCheckpoint,
    cfg: DiffusionConfig,
    resume_from: DiffusionCheckpoint | None = None,
    log_every: int = 200,
) -> DiffusionCheckpoint:
    """Train the conditional noise predictor against a frozen style encoder."""
    arrays = _as_glyph_arrays(train)
    if arrays.side != cfg.side or fannet.side != cfg.side:
        raise ShapeMismatchError(
            f"sides disagree: corpus {arrays.side}, fannet {fannet.side}, config {cfg.side}"
        )
    sched = make_schedule(cfg.schedule, cfg.T)

    torch.manual_seed(derive_seed(cfg.seed, "diffusion-init"))
    model = GlyphUNet(cfg.unet_config(fannet.style_dim))
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    state = TrainState(model, opt)
    prev_curve: list[float] = []
    if resume_from is not None:
        model.load_state_dict(ckpt_io.arrays_to_state_dict(ckpt_io.state_dict_to_arrays(resume_from.model)))
        if resume_from.opt_arrays:
            ckpt_io.arrays_to_optimizer(resume_from.opt_arrays, opt)
        state.step = resume_from.step
        prev_curve = list(resume_from.curves.get("train_loss", []))

    np_rng = np_stream(cfg.seed, f"diffusion-train-{state.step}")
    torch_gen = torch_stream(cfg.seed, f"diffusion-noise-{state.step}")
    batches = glyph_batches(
        arrays, cfg.batch_size, derive_seed(cfg.seed, f"diffusion-batches-{state.step}"),
        cfg.augment_prob, cfg.augment_max_frac,
    )

    curve: list[float] = []
    t0 = time.time()
    target = state.step + cfg.iters
    while state.step < target:
        images, labels = next(batches)
        loss = train_step(state, images, labels, fannet, sched, cfg, np_rng, torch_gen)
        curve.append(loss)
        if state.step % log_every == 0 or state.step == target:
            recent = float(np.mean(curve[-log_every:]))
            log.info("diffusion step %d/%d loss %.4f (%.0fs)", state.step, target, recent, time.time() - t0)

    meta = {
        "kind": "diffusion",
        "schedule": cfg.schedule,
        "T": cfg.T,
        "w": cfg.w,
        "p_drop": cfg.p_drop,
        "alphabet": cfg.alphabet,
        "canvas_side": cfg.side,
        "style_dim": fannet.style_dim,
        "fannet_hash": fannet.content_hash(),
        "seed": cfg.seed,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "arch": cfg.unet_config(fannet.style_dim).to_meta(),
        "step": state.step,
        "config": {
            "batch_size": cfg.batch_size, "lr": cfg.lr, "iters": cfg.iters,
            "augment_prob": cfg.augment_prob, "augment_max_frac": cfg.augment_max_frac,
        },
        "train_seconds": round(time.time() - t0, 3),
    }
    curves = {"train_loss": np.asarray(prev_curve + curve, dtype=np.float64)}
    return DiffusionCheckpoint(model, meta, curves, ckpt_io.optimizer_to_arrays(opt))


def _as_glyph_arrays(data: Manifest | GlyphArrays) -> GlyphArrays:
    return load_glyph_arrays(data) if isinstance(data, Manifest) else data
