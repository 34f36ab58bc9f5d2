"""End-to-end CLI flows on micro budgets: artifacts, error paths, provenance."""

import json
from pathlib import Path

import numpy as np
import pytest

from glyphfusion.cli import main
from glyphfusion.data import GlyphImage, Manifest

MICRO_CONFIG = """
canvas_side = 32
split_ratios = 0.6, 0.2, 0.2
split_seed = 0
seed = 0
augment_prob = 0.0

fannet_d = 8
fannet_channels = 4, 8, 8
fannet_iters = 6
fannet_val_every = 3
fannet_batch_size = 8

T = 8
base_channels = 8
channel_mult = 1, 2
num_res_blocks = 1
batch_size = 8
iters = 5

clf_base_channels = 8
clf_stages = 2
clf_batch_size = 8
clf_iters = 5
"""


@pytest.fixture(scope="module")
def micro_exp(tmp_path_factory, corpus_dir):
    """A complete micro experiment directory: data prepared, all three models trained."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "exp.cfg"
    cfg.write_text(MICRO_CONFIG)
    out = root / "exp"
    base = ["--config", str(cfg), "--out-dir", str(out)]
    assert main(["prepare-data", "--data-root", str(corpus_dir), *base]) == 0
    assert main(["train-fannet", *base]) == 0
    assert main(["train-diffusion", *base]) == 0
    assert main(["train-classifier", *base]) == 0
    return root, cfg, out


def _records(out: Path) -> list[dict]:
    with open(out / "run_records.jsonl") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def test_prepare_and_training_artifacts(micro_exp):
    _, _, out = micro_exp
    for split in ("train", "val", "test"):
        m = Manifest.load(out / f"manifest_{split}.jsonl", canvas_side=32)
        assert len(m) > 0
        m.validate(check_images=True)
    for name in ("fannet", "diffusion", "classifier"):
        assert (out / "checkpoints" / f"{name}.npz").exists()
        assert (out / "curves" / f"{name}_loss.csv").exists()
    records = _records(out)
    assert [r["command"] for r in records] == [
        "prepare-data", "train-fannet", "train-diffusion", "train-classifier",
    ]
    for r in records:
        assert r["output_hash"]
        assert r["wall_time_s"] >= 0


def test_missing_prerequisite_fails_fast(tmp_path, corpus_dir):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(MICRO_CONFIG)
    out = tmp_path / "exp"
    base = ["--config", str(cfg), "--out-dir", str(out)]
    # no prepare-data ran: manifests are missing
    assert main(["train-fannet", *base]) == 1
    # prepared but no fannet checkpoint: diffusion refuses
    assert main(["prepare-data", "--data-root", str(corpus_dir), *base]) == 0
    assert main(["train-diffusion", *base]) == 1


def test_bad_data_root_nonzero_exit(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(MICRO_CONFIG)
    code = main([
        "prepare-data", "--data-root", str(tmp_path / "nope"),
        "--config", str(cfg), "--out-dir", str(tmp_path / "exp"),
    ])
    assert code == 1


def test_sample_and_determinism(micro_exp, tmp_path):
    root, cfg, out = micro_exp
    ref = next((out / "fonts").iterdir()) if (out / "fonts").exists() else None
    diffusion = out / "checkpoints" / "diffusion.npz"
    fannet = out / "checkpoints" / "fannet.npz"
    m = Manifest.load(out / "manifest_train.jsonl", canvas_side=32)
    ref_png = m.glyph_path(m.records[0], "A")

    out1 = tmp_path / "a1.png"
    out2 = tmp_path / "a2.png"
    args = ["sample", "--diffusion", str(diffusion), "--fannet", str(fannet),
            "--style-ref", str(ref_png), "--letter", "A", "--seed", "3", "--config", str(cfg)]
    assert main([*args, "--out", str(out1)]) == 0
    assert main([*args, "--out", str(out2)]) == 0
    a = GlyphImage.load_png(out1)
    b = GlyphImage.load_png(out2)
    assert np.array_equal(a.pixels, b.pixels)


def test_interpolate_all_approaches(micro_exp, tmp_path):
    _, cfg, out = micro_exp
    m = Manifest.load(out / "manifest_train.jsonl", canvas_side=32)
    ref1 = m.glyph_path(m.records[0], "B")
    ref2 = m.glyph_path(m.records[1], "B")
    diffusion = out / "checkpoints" / "diffusion.npz"
    fannet = out / "checkpoints" / "fannet.npz"
    for approach in ("image", "cond", "noise", "fannet"):
        dest = tmp_path / f"{approach}.png"
        code = main([
            "interpolate", "--approach", approach, "--ref1", str(ref1), "--ref2", str(ref2),
            "--letter", "B", "--lambda", "0.5", "--w", "3.0", "--seed", "1",
            "--diffusion", str(diffusion), "--fannet", str(fannet),
            "--out", str(dest), "--config", str(cfg),
        ])
        assert code == 0, approach
        assert dest.exists() and dest.with_suffix(".json").exists()
        img = GlyphImage.load_png(dest)
        assert img.side == 32


def test_sweep_artifact_counts(micro_exp, tmp_path):
    _, cfg, out = micro_exp
    m = Manifest.load(out / "manifest_train.jsonl", canvas_side=32)
    ref1 = m.glyph_path(m.records[0], "C")
    ref2 = m.glyph_path(m.records[1], "C")
    sweep_dir = tmp_path / "sweep"
    code = main([
        "sweep", "--approach", "cond", "--ref1", str(ref1), "--ref2", str(ref2),
        "--letter", "C", "--n", "5", "--seed", "2",
        "--diffusion", str(out / "checkpoints" / "diffusion.npz"),
        "--fannet", str(out / "checkpoints" / "fannet.npz"),
        "--out-dir", str(sweep_dir), "--config", str(cfg),
    ])
    assert code == 0
    pngs = sorted(sweep_dir.glob("lambda_*.png"))
    assert len(pngs) == 5
    assert (sweep_dir / "mosaic.png").exists()
    sidecar = json.loads((sweep_dir / "sweep.json").read_text())
    assert sidecar["lambdas"] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_encoder_mismatch_refused(micro_exp, tmp_path, corpus_dir):
    root, cfg, out = micro_exp
    # train a second fannet with a different seed -> different hash
    out2 = root / "exp2"
    base2 = ["--config", str(cfg), "--out-dir", str(out2), "--seed", "99"]
    assert main(["prepare-data", "--data-root", str(corpus_dir), *base2]) == 0
    assert main(["train-fannet", *base2]) == 0
    m = Manifest.load(out / "manifest_train.jsonl", canvas_side=32)
    ref_png = m.glyph_path(m.records[0], "A")
    args = [
        "sample", "--diffusion", str(out / "checkpoints" / "diffusion.npz"),
        "--fannet", str(out2 / "checkpoints" / "fannet.npz"),
        "--style-ref", str(ref_png), "--letter", "A", "--seed", "3",
        "--out", str(tmp_path / "x.png"), "--config", str(cfg),
    ]
    assert main(args) == 1  # refused
    assert main([*args, "--allow-encoder-mismatch"]) == 0


def test_evaluate_report(micro_exp, tmp_path):
    _, cfg, out = micro_exp
    m = Manifest.load(out / "manifest_train.jsonl", canvas_side=32)
    real = tmp_path / "real"
    gen = tmp_path / "gen"
    real.mkdir()
    gen.mkdir()
    for rec in m.records[:2]:
        for ch in m.alphabet:
            img = m.load_glyph(rec, ch)
            img.save_png(real / f"{ch}_{rec.font_id}.png")
            img.save_png(gen / f"{ch}_{rec.font_id}.png")
    report_path = tmp_path / "report.json"
    code = main([
        "evaluate", "--real", str(real), "--gen", str(gen),
        "--clf", str(out / "checkpoints" / "classifier.npz"),
        "--k", "3", "--out", str(report_path), "--config", str(cfg),
    ])
    assert code == 0
    report = json.loads(report_path.read_text())
    # identical directories: perfect distribution match, zero paired MSE
    assert report["precision"] == 1.0 and report["recall"] == 1.0
    assert report["mse_per_category"]["paired_by_filename"] == 0.0
    assert report["n_real"] == report["n_gen"] == 52
    assert 0.0 <= report["accuracy"] <= 1.0


def test_lock_released_after_run(micro_exp):
    _, _, out = micro_exp
    # lock file exists but must be free once commands returned
    from filelock import FileLock

    lock = FileLock(out / ".glyphfusion.lock")
    lock.acquire(timeout=1)
    lock.release()
