"""Style feature extraction via a glyph-to-glyph conversion network.

An encoder compresses a glyph into a d-dimensional style vector; a
class-conditional decoder renders any requested letter in that style.
Training samples (input glyph, target class, target glyph) triples from the
same font, including identity pairs, and minimizes mean absolute pixel
error. The trained encoder provides the style conditions used elsewhere;
the full encoder+decoder also serves as a baseline interpolator by blending
two style vectors before decoding.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import checkpoints as ckpt_io
from .data import DEFAULT_ALPHABET, CharClass, GlyphImage, Manifest, GlyphArrays, load_glyph_arrays
from .errors import DimensionMismatchError, DivergenceError, ShapeMismatchError
from .rng import derive_seed, np_stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FannetConfig:
    style_dim: int = 512
    side: int = 32
    alphabet: str = DEFAULT_ALPHABET
    enc_channels: tuple[int, ...] = (32, 64, 128)
    batch_size: int = 64
    lr: float = 1e-3
    iters: int = 4000
    val_every: int = 200
    patience: int = 5
    val_probe_size: int = 512
    seed: int = 0

    def arch_meta(self) -> dict:
        return {
            "style_dim": self.style_dim,
            "side": self.side,
            "alphabet": self.alphabet,
            "enc_channels": list(self.enc_channels),
        }


class FanEncoder(nn.Module):
    def __init__(self, side: int, style_dim: int, channels: tuple[int, ...]):
        super().__init__()
        c1, c2, c3 = channels
        self.body = nn.Sequential(
            nn.Conv2d(1, c1, 3, padding=1), nn.BatchNorm2d(c1), nn.ReLU(),
            nn.Conv2d(c1, c1, 3, padding=1), nn.BatchNorm2d(c1), nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(c1, c2, 3, padding=1), nn.BatchNorm2d(c2), nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(c2, c3, 3, padding=1), nn.BatchNorm2d(c3), nn.ReLU(),
        )
        self.fc = nn.Linear(c3 * (side // 4) ** 2, style_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.body(x)
        return self.fc(h.flatten(1))


class FanDecoder(nn.Module):
    def __init__(self, side: int, style_dim: int, n_classes: int, channels: tuple[int, ...]):
        super().__init__()
        c1, c2, c3 = channels
        self.side = side
        self.c3 = c3
        self.fc = nn.Linear(style_dim + n_classes, c3 * (side // 4) ** 2)
        self.body = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c3, c2, 3, padding=1), nn.BatchNorm2d(c2), nn.ReLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c2, c1, 3, padding=1), nn.BatchNorm2d(c1), nn.ReLU(),
            nn.Conv2d(c1, 1, 3, padding=1),
        )

    def forward(self, style: torch.Tensor, class_onehot: torch.Tensor) -> torch.Tensor:
        h = self.fc(torch.cat([style, class_onehot], dim=1))
        h = h.reshape(-1, self.c3, self.side // 4, self.side // 4)
        return torch.sigmoid(self.body(h))


class Fannet(nn.Module):
    def __init__(self, cfg: FannetConfig):
        super().__init__()
        self.encoder = FanEncoder(cfg.side, cfg.style_dim, cfg.enc_channels)
        self.decoder = FanDecoder(cfg.side, cfg.style_dim, len(cfg.alphabet), cfg.enc_channels)

    def forward(self, x: torch.Tensor, class_onehot: torch.Tensor) -> torch.Tensor:
        return self.decoder(self.encoder(x), class_onehot)


@dataclass
class FannetCheckpoint:
    """Frozen encoder/decoder weights plus training metadata."""

    model: Fannet
    meta: dict
    curves: dict[str, np.ndarray]

    @property
    def style_dim(self) -> int:
        return int(self.meta["style_dim"])

    @property
    def side(self) -> int:
        return int(self.meta["canvas_side"])

    @property
    def alphabet(self) -> str:
        return str(self.meta["alphabet"])

    def content_hash(self) -> str:
        return ckpt_io.content_hash(ckpt_io.state_dict_to_arrays(self.model), self.meta)

    def save(self, path) -> None:
        arrays = ckpt_io.state_dict_to_arrays(self.model)
        arrays.update({f"curve::{k}": v for k, v in self.curves.items()})
        ckpt_io.save_arrays(path, arrays, self.meta)

    @classmethod
    def load(cls, path) -> "FannetCheckpoint":
        arrays, meta = ckpt_io.load_arrays(path)
        if meta.get("kind") != "fannet":
            raise ValueError(f"{path} is not a fannet checkpoint")
        cfg = FannetConfig(
            style_dim=meta["style_dim"],
            side=meta["canvas_side"],
            alphabet=meta["alphabet"],
            enc_channels=tuple(meta["arch"]["enc_channels"]),
        )
        model = Fannet(cfg)
        model.load_state_dict(ckpt_io.arrays_to_state_dict(arrays))
        model.eval()
        curves = {k.split("::", 1)[1]: v for k, v in arrays.items() if k.startswith("curve::")}
        return cls(model, meta, curves)


def _as_arrays(data: Manifest | GlyphArrays) -> GlyphArrays:
    return load_glyph_arrays(data) if isinstance(data, Manifest) else data


def _sample_triples(rng: np.random.Generator, n_fonts: int, n_classes: int, count: int) -> np.ndarray:
    fonts = rng.integers(0, n_fonts, size=count)
    c_in = rng.integers(0, n_classes, size=count)
    c_out = rng.integers(0, n_classes, size=count)  # includes identity pairs
    return np.stack([fonts, c_in, c_out], axis=1)


def _conversion_loss(model: Fannet, images: np.ndarray, triples: np.ndarray, n_classes: int) -> torch.Tensor:
    x = torch.from_numpy(images[triples[:, 0], triples[:, 1]]).unsqueeze(1)
    y = torch.from_numpy(images[triples[:, 0], triples[:, 2]]).unsqueeze(1)
    onehot = F.one_hot(torch.from_numpy(triples[:, 2]), n_classes).float()
    return F.l1_loss(model(x, onehot), y)


def train_fannet(
    train: Manifest | GlyphArrays,
    val: Manifest | GlyphArrays,
    cfg: FannetConfig,
) -> FannetCheckpoint:
    """Train the conversion network; early-stops on stalled validation loss."""
    train_arr = _as_arrays(train)
    val_arr = _as_arrays(val)
    if train_arr.n_fonts == 0 or val_arr.n_fonts == 0:
        raise ValueError("training and validation sets must be nonempty")
    n_classes = len(cfg.alphabet)
    if train_arr.side != cfg.side:
        raise ShapeMismatchError(f"corpus side {train_arr.side} != config side {cfg.side}")

    torch.manual_seed(derive_seed(cfg.seed, "fannet-init"))
    model = Fannet(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    data_rng = np_stream(cfg.seed, "fannet-data")
    val_triples = _sample_triples(
        np_stream(cfg.seed, "fannet-val"), val_arr.n_fonts, n_classes, cfg.val_probe_size
    )

    train_curve: list[float] = []
    val_curve: list[float] = []
    best_val = float("inf")
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    stalled = 0
    t0 = time.time()

    for step in range(1, cfg.iters + 1):
        model.train()
        triples = _sample_triples(data_rng, train_arr.n_fonts, n_classes, cfg.batch_size)
        loss = _conversion_loss(model, train_arr.images, triples, n_classes)
        if not torch.isfinite(loss):
            raise DivergenceError(f"fannet training loss became non-finite at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        train_curve.append(float(loss.detach()))

        if step % cfg.val_every == 0 or step == cfg.iters:
            model.eval()
            with torch.no_grad():
                vloss = float(_conversion_loss(model, val_arr.images, val_triples, n_classes))
            val_curve.append(vloss)
            improved = vloss < best_val - 1e-6
            if improved:
                best_val = vloss
                best_state = {k: v.clone() for k, v in model.state_dict().items()}
                stalled = 0
            else:
                stalled += 1
            log.info("fannet step %d/%d train %.4f val %.4f%s", step, cfg.iters, float(loss.detach()), vloss,
                     "" if improved else f" (stalled {stalled})")
            if stalled >= cfg.patience:
                log.info("fannet early stop at step %d", step)
                break

    model.load_state_dict(best_state)
    model.eval()
    meta = {
        "kind": "fannet",
        "style_dim": cfg.style_dim,
        "alphabet": cfg.alphabet,
        "canvas_side": cfg.side,
        "seed": cfg.seed,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "arch": cfg.arch_meta(),
        "iters_run": len(train_curve),
        "best_val_loss": best_val,
        "train_seconds": round(time.time() - t0, 3),
        "config": {
            "batch_size": cfg.batch_size, "lr": cfg.lr, "iters": cfg.iters,
            "val_every": cfg.val_every, "patience": cfg.patience,
        },
    }
    curves = {
        "train_loss": np.asarray(train_curve, dtype=np.float64),
        "val_loss": np.asarray(val_curve, dtype=np.float64),
    }
    return FannetCheckpoint(model, meta, curves)


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


def encode_batch(images: np.ndarray, ckpt: FannetCheckpoint) -> np.ndarray:
    """Encode (N, side, side) ink images into (N, d) style vectors."""
    if images.ndim != 3 or images.shape[1] != ckpt.side or images.shape[2] != ckpt.side:
        raise ShapeMismatchError(f"expected (N, {ckpt.side}, {ckpt.side}) images, got {images.shape}")
    ckpt.model.eval()
    with torch.no_grad():
        out = ckpt.model.encoder(torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32)).unsqueeze(1))
    return out.numpy()


def encode_style(img: GlyphImage, ckpt: FannetCheckpoint) -> np.ndarray:
    """Extract the d-dimensional style vector of one glyph."""
    return encode_batch(img.pixels[None], ckpt)[0]


def decode_glyph(style: np.ndarray, c: CharClass, ckpt: FannetCheckpoint) -> GlyphImage:
    """Render the letter ``c`` in the style encoded by ``style``."""
    style = np.asarray(style, dtype=np.float32)
    if style.shape != (ckpt.style_dim,):
        raise DimensionMismatchError(f"style vector shape {style.shape} != ({ckpt.style_dim},)")
    onehot = torch.from_numpy(c.one_hot()).unsqueeze(0)
    ckpt.model.eval()
    with torch.no_grad():
        out = ckpt.model.decoder(torch.from_numpy(style).unsqueeze(0), onehot)
    return GlyphImage.from_array(out[0, 0].numpy())


def fannet_interpolate(
    r1: GlyphImage, r2: GlyphImage, lam: float, c: CharClass, ckpt: FannetCheckpoint
) -> GlyphImage:
    """Decode the convex combination lam*s1 + (1-lam)*s2 of the two reference styles."""
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    s1 = encode_style(r1, ckpt)
    s2 = encode_style(r2, ckpt)
    blended = np.float32(lam) * s1 + np.float32(1.0 - lam) * s2
    return decode_glyph(blended, c, ckpt)
