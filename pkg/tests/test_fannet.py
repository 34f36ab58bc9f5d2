"""Style encoder/decoder: contracts on untrained nets, quality on the trained toy net."""

import itertools

import numpy as np
import pytest

from glyphfusion.data import CharClass, GlyphImage
from glyphfusion.errors import DimensionMismatchError, ShapeMismatchError
from glyphfusion.fannet import (
    FannetCheckpoint,
    FannetConfig,
    decode_glyph,
    encode_batch,
    encode_style,
    train_fannet,
)


def test_encode_deterministic(tiny_fannet):
    img = GlyphImage.from_array(np.random.default_rng(0).random((32, 32), dtype=np.float32))
    a = encode_style(img, tiny_fannet)
    b = encode_style(img, tiny_fannet)
    assert np.array_equal(a, b)
    assert a.shape == (16,)


def test_encode_blank_image_finite(tiny_fannet):
    v = encode_style(GlyphImage.blank(32), tiny_fannet)
    assert np.isfinite(v).all()


def test_encode_shape_mismatch(tiny_fannet):
    with pytest.raises(ShapeMismatchError):
        encode_style(GlyphImage.blank(16), tiny_fannet)


def test_decode_contract(tiny_fannet):
    c = CharClass.from_letter("K")
    img = decode_glyph(np.zeros(16, dtype=np.float32), c, tiny_fannet)
    assert img.side == 32
    assert np.isfinite(img.pixels).all()
    a = decode_glyph(np.ones(16, dtype=np.float32), c, tiny_fannet)
    b = decode_glyph(np.ones(16, dtype=np.float32), c, tiny_fannet)
    assert np.array_equal(a.pixels, b.pixels)
    with pytest.raises(DimensionMismatchError):
        decode_glyph(np.zeros(17, dtype=np.float32), c, tiny_fannet)


def test_checkpoint_round_trip(tmp_path, tiny_fannet):
    tiny_fannet.save(tmp_path / "f.npz")
    back = FannetCheckpoint.load(tmp_path / "f.npz")
    assert back.content_hash() == tiny_fannet.content_hash()
    img = GlyphImage.from_array(np.random.default_rng(1).random((32, 32), dtype=np.float32))
    assert np.array_equal(encode_style(img, back), encode_style(img, tiny_fannet))


# ---------------------------------------------------------------------------
# training behaviour (micro runs)
# ---------------------------------------------------------------------------


MICRO_CFG = FannetConfig(
    style_dim=16, side=32, enc_channels=(8, 16, 32), batch_size=16,
    lr=1e-3, iters=60, val_every=30, patience=10, val_probe_size=64, seed=3,
)


def test_training_reduces_loss(train_arrays, val_arrays):
    ckpt = train_fannet(train_arrays, val_arrays, MICRO_CFG)
    curve = ckpt.curves["train_loss"]
    assert float(np.mean(curve[-10:])) < float(np.mean(curve[:10]))


def test_training_deterministic(train_arrays, val_arrays):
    a = train_fannet(train_arrays, val_arrays, MICRO_CFG)
    b = train_fannet(train_arrays, val_arrays, MICRO_CFG)
    assert np.array_equal(a.curves["train_loss"], b.curves["train_loss"])
    assert np.array_equal(a.curves["val_loss"], b.curves["val_loss"])
    assert a.content_hash() == b.content_hash()


# ---------------------------------------------------------------------------
# trained toy checkpoint quality
# ---------------------------------------------------------------------------


def test_reconstruction_mae_on_training_fonts(trained_fannet, train_arrays):
    rng = np.random.default_rng(17)
    imgs, labels = train_arrays.flat()
    idx = rng.choice(imgs.shape[0], size=100, replace=False)
    styles = encode_batch(imgs[idx], trained_fannet)
    maes = []
    for row, i in enumerate(idx):
        c = CharClass(int(labels[i]), train_arrays.alphabet[int(labels[i])])
        recon = decode_glyph(styles[row], c, trained_fannet)
        maes.append(float(np.abs(recon.pixels - imgs[i]).mean()))
    assert float(np.mean(maes)) < 0.25


def test_intra_family_similarity_exceeds_inter(trained_fannet, full_manifest):
    """Same-face weight variants should look closer in style space than
    unrelated faces, on average over many pairs."""
    by_family = {}
    for rec in full_manifest.records:
        by_family.setdefault(rec.family, {})[rec.weight] = rec

    def cos(a, b):
        return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-12))

    letters = "AEMRSW"
    intra, inter = [], []
    families = sorted(by_family)
    for fam in families:
        weights = by_family[fam]
        if not all(w in weights for w in ("Light", "Bold")):
            continue
        for ch in letters:
            s_l = encode_style(full_manifest.load_glyph(weights["Light"], ch), trained_fannet)
            s_b = encode_style(full_manifest.load_glyph(weights["Bold"], ch), trained_fannet)
            intra.append(cos(s_l, s_b))
    for fam_a, fam_b in itertools.islice(itertools.combinations(families, 2), 20):
        rec_a = next(iter(by_family[fam_a].values()))
        rec_b = next(iter(by_family[fam_b].values()))
        for ch in letters:
            s_a = encode_style(full_manifest.load_glyph(rec_a, ch), trained_fannet)
            s_b = encode_style(full_manifest.load_glyph(rec_b, ch), trained_fannet)
            inter.append(cos(s_a, s_b))
    assert len(intra) >= 50 and len(inter) >= 50
    assert float(np.mean(intra)) > float(np.mean(inter))
