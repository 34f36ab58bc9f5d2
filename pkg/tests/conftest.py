"""Shared fixtures: toy corpus, untrained tiny checkpoints, trained toy checkpoints.

Trained artifacts are expensive on CPU, so they are built once per
configuration and cached under ``tests/_cache``; delete that directory to
force retraining. Every fixture is fully seeded, so cached and fresh runs
agree.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from glyphfusion.corpus import build_toy_corpus
from glyphfusion.data import Manifest, build_manifest, load_glyph_arrays, split_fonts
from glyphfusion.diffusion import DiffusionCheckpoint, DiffusionConfig, train_diffusion
from glyphfusion.evaluate import ClassifierCheckpoint, ClassifierConfig, train_classifier
from glyphfusion.fannet import Fannet, FannetCheckpoint, FannetConfig, train_fannet
from glyphfusion.unet import GlyphUNet

CACHE_VERSION = 1
CACHE_DIR = Path(__file__).parent / "_cache"

# toy training budgets (single-core CPU friendly)
FANNET_CFG = FannetConfig(
    style_dim=64, side=32, enc_channels=(16, 32, 64), batch_size=64,
    lr=1e-3, iters=2500, val_every=250, patience=4, seed=0,
)
CLASSIFIER_CFG = ClassifierConfig(
    side=32, base_channels=16, n_stages=3, batch_size=64, lr=1e-3, iters=1200, seed=0,
)
DIFFUSION_CFG = DiffusionConfig(
    T=200, side=32, base_channels=32, channel_mult=(1, 2), num_res_blocks=1,
    attn_middle=True, batch_size=32, lr=1e-4, iters=12000, p_drop=0.1, w=3.0,
    augment_prob=0.0, seed=0,
)


def _key(*parts) -> str:
    return hashlib.sha256(json.dumps([CACHE_VERSION, *map(str, parts)]).encode()).hexdigest()[:16]


def _log(msg: str) -> None:
    print(f"[fixtures {time.strftime('%H:%M:%S')}] {msg}", file=sys.stderr, flush=True)


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    out = CACHE_DIR / f"corpus-{_key('toy', 32)}"
    if not (out / "fonts").exists():
        _log("building toy corpus ...")
        build_toy_corpus(out / "fonts", side=32)
    return out / "fonts"


@pytest.fixture(scope="session")
def manifests(corpus_dir) -> tuple[Manifest, Manifest, Manifest]:
    manifest = build_manifest(corpus_dir, side=32)
    return split_fonts(manifest, (0.8, 0.1, 0.1), seed=0)


@pytest.fixture(scope="session")
def full_manifest(corpus_dir) -> Manifest:
    return build_manifest(corpus_dir, side=32)


@pytest.fixture(scope="session")
def train_arrays(manifests):
    return load_glyph_arrays(manifests[0])


@pytest.fixture(scope="session")
def val_arrays(manifests):
    return load_glyph_arrays(manifests[1])


@pytest.fixture(scope="session")
def test_arrays(manifests):
    return load_glyph_arrays(manifests[2])


# ---------------------------------------------------------------------------
# untrained tiny checkpoints for structural/determinism tests
# ---------------------------------------------------------------------------


def make_tiny_fannet(seed: int = 0, style_dim: int = 16, side: int = 32) -> FannetCheckpoint:
    cfg = FannetConfig(style_dim=style_dim, side=side, enc_channels=(8, 16, 32))
    torch.manual_seed(seed)
    model = Fannet(cfg)
    model.eval()
    meta = {
        "kind": "fannet", "style_dim": style_dim, "alphabet": cfg.alphabet,
        "canvas_side": side, "seed": seed, "created_at": "1970-01-01T00:00:00",
        "arch": cfg.arch_meta(), "iters_run": 0, "best_val_loss": None,
        "train_seconds": 0, "config": {},
    }
    return FannetCheckpoint(model, meta, {})


def make_tiny_diffusion(
    fannet: FannetCheckpoint, seed: int = 1, T: int = 24, side: int = 32
) -> DiffusionCheckpoint:
    cfg = DiffusionConfig(
        T=T, side=side, base_channels=16, channel_mult=(1, 2), num_res_blocks=1, attn_middle=True
    )
    torch.manual_seed(seed)
    model = GlyphUNet(cfg.unet_config(fannet.style_dim))
    with torch.no_grad():
        # an untrained net is the constant-zero function (zero-initialized
        # output convs); perturb those layers so structural tests see a
        # non-degenerate input-dependent network
        for p in model.parameters():
            if float(p.abs().sum()) == 0.0:
                p.normal_(std=0.05)
    model.eval()
    meta = {
        "kind": "diffusion", "schedule": "cosine", "T": T, "w": 3.0, "p_drop": 0.1,
        "alphabet": cfg.alphabet, "canvas_side": side, "style_dim": fannet.style_dim,
        "fannet_hash": fannet.content_hash(), "seed": seed,
        "created_at": "1970-01-01T00:00:00",
        "arch": cfg.unet_config(fannet.style_dim).to_meta(), "step": 0,
        "config": {}, "train_seconds": 0,
    }
    return DiffusionCheckpoint(model, meta, {})


@pytest.fixture(scope="session")
def tiny_fannet() -> FannetCheckpoint:
    return make_tiny_fannet()


@pytest.fixture(scope="session")
def tiny_diffusion(tiny_fannet) -> DiffusionCheckpoint:
    return make_tiny_diffusion(tiny_fannet)


# ---------------------------------------------------------------------------
# trained toy checkpoints (cached)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def trained_fannet(train_arrays, val_arrays) -> FannetCheckpoint:
    path = CACHE_DIR / f"fannet-{_key(FANNET_CFG)}.npz"
    if path.exists():
        return FannetCheckpoint.load(path)
    _log(f"training fannet ({FANNET_CFG.iters} iters) ...")
    ckpt = train_fannet(train_arrays, val_arrays, FANNET_CFG)
    ckpt.save(path)
    _log(f"fannet done, best val {ckpt.meta['best_val_loss']:.4f}")
    return ckpt


@pytest.fixture(scope="session")
def trained_classifier(train_arrays, val_arrays) -> ClassifierCheckpoint:
    path = CACHE_DIR / f"classifier-{_key(CLASSIFIER_CFG)}.npz"
    if path.exists():
        return ClassifierCheckpoint.load(path)
    _log(f"training classifier ({CLASSIFIER_CFG.iters} iters) ...")
    ckpt = train_classifier(train_arrays, val_arrays, CLASSIFIER_CFG)
    ckpt.save(path)
    _log(f"classifier done, held-out accuracy {ckpt.held_out_accuracy:.3f}")
    return ckpt


@pytest.fixture(scope="session")
def trained_diffusion(train_arrays, trained_fannet) -> DiffusionCheckpoint:
    path = CACHE_DIR / f"diffusion-{_key(DIFFUSION_CFG, FANNET_CFG)}.npz"
    if path.exists():
        return DiffusionCheckpoint.load(path)
    _log(f"training diffusion ({DIFFUSION_CFG.iters} iters; this is the long one) ...")
    ckpt = train_diffusion(train_arrays, trained_fannet, DIFFUSION_CFG, log_every=1000)
    ckpt.save(path)
    recent = float(np.mean(ckpt.curves["train_loss"][-200:]))
    _log(f"diffusion done at step {ckpt.step}, recent loss {recent:.4f}")
    return ckpt
