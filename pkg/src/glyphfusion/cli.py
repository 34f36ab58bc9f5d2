"""Command-line entry points and reproducible experiment plumbing.

Every invocation resolves a layered config, takes an exclusive lock on its
output directory, writes outputs atomically, and appends one immutable run
record (command, resolved config, input checkpoint hashes, output content
hashes, wall time) to ``run_records.jsonl``. Rerunning a command with the
same config and seed reproduces identical output hashes.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import checkpoints as ckpt_io
from .config import ExperimentConfig, load_config
from .corpus import build_toy_corpus
from .data import (
    CharClass,
    GlyphImage,
    Manifest,
    build_manifest,
    split_fonts,
    validate_split_disjoint,
)
from .diffusion import DiffusionCheckpoint, DiffusionConfig, sample, train_diffusion
from .errors import EncoderMismatchError, GlyphFusionError, MissingPrerequisiteError
from .evaluate import (
    ClassifierCheckpoint,
    ClassifierConfig,
    MetricReport,
    embed_features,
    improved_precision_recall,
    mse,
    recognition_accuracy,
    train_classifier,
)
from .fannet import FannetCheckpoint, FannetConfig, encode_style, train_fannet
from .interpolate import InterpolationRequest, lambda_sweep, run_request, save_mosaic_png

log = logging.getLogger(__name__)

LOCK_NAME = ".glyphfusion.lock"
RUN_RECORDS = "run_records.jsonl"


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------


class RunRecorder:
    """Collects provenance for one CLI invocation and appends it on success."""

    def __init__(self, command: str, argv: list[str], cfg: ExperimentConfig, out_dir: Path):
        self.command = command
        self.argv = argv
        self.cfg = cfg
        self.out_dir = out_dir
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.t0 = time.time()

    def add_input(self, name: str, content_hash: str) -> None:
        self.inputs[name] = content_hash

    def add_output_file(self, path: Path) -> None:
        rel = str(path.relative_to(self.out_dir)) if path.is_relative_to(self.out_dir) else str(path)
        self.outputs[rel] = ckpt_io.file_hash(path)

    def add_output_hash(self, name: str, content_hash: str) -> None:
        self.outputs[name] = content_hash

    def finish(self) -> dict:
        combined = ckpt_io.content_hash(
            {}, {"outputs": dict(sorted(self.outputs.items()))}
        )
        record = {
            "command": self.command,
            "argv": self.argv,
            "config": self.cfg.to_dict(),
            "checkpoint_hashes": self.inputs,
            "outputs": dict(sorted(self.outputs.items())),
            "output_hash": combined,
            "wall_time_s": round(time.time() - self.t0, 3),
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.out_dir / RUN_RECORDS, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        return record


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, out_dir: bool = True, seed: bool = True) -> None:
    p.add_argument("--config", type=Path, default=None, help="key = value config file")
    if out_dir:
        p.add_argument("--out-dir", type=Path, default=None, help="experiment output directory")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="override the experiment seed")


def _resolve(args: argparse.Namespace, **extra) -> ExperimentConfig:
    overrides = {
        "out_dir": str(args.out_dir) if getattr(args, "out_dir", None) else None,
        "seed": getattr(args, "seed", None),
    }
    overrides.update(extra)
    return load_config(args.config, overrides=overrides)


def _out_dir(cfg: ExperimentConfig) -> Path:
    if not cfg.out_dir:
        raise ValueError("an output directory is required (--out-dir or the out_dir config key)")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _lock(out_dir: Path) -> FileLock:
    lock = FileLock(out_dir / LOCK_NAME)
    try:
        lock.acquire(timeout=10)
    except Timeout:
        raise GlyphFusionError(f"output directory {out_dir} is locked by another invocation")
    return lock


def _manifests(cfg: ExperimentConfig, base: Path) -> tuple[Manifest, Manifest, Manifest]:
    out = []
    for split in ("train", "val", "test"):
        path = base / f"manifest_{split}.jsonl"
        if not path.exists():
            raise MissingPrerequisiteError(f"{path} not found; run prepare-data first")
        out.append(Manifest.load(path, alphabet=cfg.alphabet, canvas_side=cfg.canvas_side, split=split))
    return out[0], out[1], out[2]


def _write_loss_csv(path: Path, curve: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(curve, 1):
            fh.write(f"{i},{v:.8f}\n")


def _load_fannet(path: Path) -> FannetCheckpoint:
    if not path.exists():
        raise MissingPrerequisiteError(f"style encoder checkpoint {path} not found")
    return FannetCheckpoint.load(path)


def _load_diffusion(path: Path) -> DiffusionCheckpoint:
    if not path.exists():
        raise MissingPrerequisiteError(f"diffusion checkpoint {path} not found")
    return DiffusionCheckpoint.load(path)


def _check_encoder(diffusion: DiffusionCheckpoint, fannet: FannetCheckpoint, allow_mismatch: bool) -> None:
    if fannet.content_hash() != diffusion.fannet_hash:
        msg = (
            "style encoder hash does not match the one this diffusion model was trained with"
            " (pass --allow-encoder-mismatch to override)"
        )
        if not allow_mismatch:
            raise EncoderMismatchError(msg)
        log.warning("proceeding despite encoder mismatch")


def _glyph_sidecar(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_prepare_data(args: argparse.Namespace) -> None:
    cfg = _resolve(args, data_root=str(args.data_root) if args.data_root else None)
    out = _out_dir(cfg)
    with _lock(out):
        rec = RunRecorder("prepare-data", args.argv, cfg, out)
        if args.toy_corpus:
            data_root = out / "fonts"
            build_toy_corpus(data_root, side=cfg.canvas_side, alphabet=cfg.alphabet,
                             synth_weights=cfg.synth_weights)
        else:
            if not cfg.data_root:
                raise ValueError("--data-root (or the data_root config key) is required")
            data_root = Path(cfg.data_root)
        manifest = build_manifest(data_root, cfg.alphabet, cfg.canvas_side, images_out=out / "images")
        train, val, test = split_fonts(manifest, cfg.split_ratios, cfg.split_seed)
        validate_split_disjoint(train, val, test)
        image_digest = ckpt_io.content_hash({}, {
            "images": {
                f"{r.font_id}/{ch}": ckpt_io.file_hash(manifest.glyph_path(r, ch))
                for r in manifest.records
                for ch in manifest.alphabet
            }
        })
        rec.add_output_hash("glyph_images", image_digest)
        for split, m in zip(("train", "val", "test"), (train, val, test)):
            path = out / f"manifest_{split}.jsonl"
            m.save(path)
            rec.add_output_file(path)
        record = rec.finish()
    print(f"prepare-data: {len(train)}/{len(val)}/{len(test)} fonts -> {out} ({record['output_hash'][:12]})")


def cmd_train_fannet(args: argparse.Namespace) -> None:
    cfg = _resolve(args)
    out = _out_dir(cfg)
    with _lock(out):
        rec = RunRecorder("train-fannet", args.argv, cfg, out)
        train, val, _ = _manifests(cfg, out)
        fcfg = FannetConfig(
            style_dim=cfg.fannet_d, side=cfg.canvas_side, alphabet=cfg.alphabet,
            enc_channels=cfg.fannet_channels, batch_size=cfg.fannet_batch_size,
            lr=cfg.fannet_lr, iters=cfg.fannet_iters, val_every=cfg.fannet_val_every,
            patience=cfg.fannet_patience, seed=cfg.seed,
        )
        ckpt = train_fannet(train, val, fcfg)
        path = out / "checkpoints" / "fannet.npz"
        ckpt.save(path)
        _write_loss_csv(out / "curves" / "fannet_loss.csv", ckpt.curves["train_loss"])
        rec.add_output_hash("checkpoints/fannet.npz", ckpt.content_hash())
        rec.add_output_file(out / "curves" / "fannet_loss.csv")
        record = rec.finish()
    print(f"train-fannet: best val {ckpt.meta['best_val_loss']:.4f} -> {path} ({record['output_hash'][:12]})")


def cmd_train_diffusion(args: argparse.Namespace) -> None:
    cfg = _resolve(args)
    out = _out_dir(cfg)
    with _lock(out):
        rec = RunRecorder("train-diffusion", args.argv, cfg, out)
        train, _, _ = _manifests(cfg, out)
        fannet_path = args.fannet or (out / "checkpoints" / "fannet.npz")
        fannet = _load_fannet(Path(fannet_path))
        rec.add_input("fannet", fannet.content_hash())
        dcfg = DiffusionConfig(
            T=cfg.T, side=cfg.canvas_side, alphabet=cfg.alphabet,
            base_channels=cfg.base_channels, channel_mult=cfg.channel_mult,
            num_res_blocks=cfg.num_res_blocks, attn_middle=cfg.attn_middle,
            batch_size=cfg.batch_size, lr=cfg.lr, iters=cfg.iters, p_drop=cfg.p_drop,
            w=cfg.w, augment_prob=cfg.augment_prob, augment_max_frac=cfg.augment_max_frac,
            seed=cfg.seed,
        )
        path = out / "checkpoints" / "diffusion.npz"
        resume = _load_diffusion(path) if args.resume else None
        ckpt = train_diffusion(train, fannet, dcfg, resume_from=resume)
        ckpt.save(path)
        _write_loss_csv(out / "curves" / "diffusion_loss.csv", ckpt.curves["train_loss"])
        rec.add_output_hash("checkpoints/diffusion.npz", ckpt.content_hash())
        rec.add_output_file(out / "curves" / "diffusion_loss.csv")
        record = rec.finish()
    recent = float(np.mean(ckpt.curves["train_loss"][-100:]))
    print(f"train-diffusion: step {ckpt.step}, recent loss {recent:.4f} -> {path} ({record['output_hash'][:12]})")


def cmd_train_classifier(args: argparse.Namespace) -> None:
    cfg = _resolve(args)
    out = _out_dir(cfg)
    with _lock(out):
        rec = RunRecorder("train-classifier", args.argv, cfg, out)
        train, val, _ = _manifests(cfg, out)
        ccfg = ClassifierConfig(
            side=cfg.canvas_side, alphabet=cfg.alphabet, base_channels=cfg.clf_base_channels,
            n_stages=cfg.clf_stages, batch_size=cfg.clf_batch_size, lr=cfg.clf_lr,
            iters=cfg.clf_iters, augment_prob=cfg.augment_prob,
            augment_max_frac=cfg.augment_max_frac, seed=cfg.seed,
        )
        ckpt = train_classifier(train, val, ccfg)
        path = out / "checkpoints" / "classifier.npz"
        ckpt.save(path)
        _write_loss_csv(out / "curves" / "classifier_loss.csv", ckpt.curves["train_loss"])
        rec.add_output_hash("checkpoints/classifier.npz", ckpt.content_hash())
        rec.add_output_file(out / "curves" / "classifier_loss.csv")
        record = rec.finish()
    print(
        f"train-classifier: held-out accuracy {ckpt.held_out_accuracy:.3f} -> {path} "
        f"({record['output_hash'][:12]})"
    )


def cmd_sample(args: argparse.Namespace) -> None:
    cfg = _resolve(args)
    out_path = Path(args.out)
    out = out_path.parent
    out.mkdir(parents=True, exist_ok=True)
    with _lock(out):
        rec = RunRecorder("sample", args.argv, cfg, out)
        diffusion = _load_diffusion(Path(args.diffusion))
        rec.add_input("diffusion", diffusion.content_hash())
        style = None
        if args.style_ref is not None:
            fannet = _load_fannet(Path(args.fannet)) if args.fannet else None
            if fannet is None:
                raise MissingPrerequisiteError("--fannet is required when --style-ref is given")
            _check_encoder(diffusion, fannet, args.allow_encoder_mismatch)
            rec.add_input("fannet", fannet.content_hash())
            style = encode_style(GlyphImage.load_png(args.style_ref), fannet)
        c = CharClass.from_letter(args.letter, cfg.alphabet)
        w = cfg.w if args.w is None else args.w
        img = sample(diffusion, c, style, w, int(args.sample_seed))
        img.save_png(out_path)
        rec.add_output_file(out_path)
        record = rec.finish()
    print(f"sample: wrote {out_path} ({record['output_hash'][:12]})")


def _interp_checkpoints(args, rec: RunRecorder, approach: str):
    fannet = diffusion = None
    if approach != "fannet":
        diffusion = _load_diffusion(Path(args.diffusion)) if args.diffusion else None
        if diffusion is None:
            raise MissingPrerequisiteError(f"approach {approach!r} requires --diffusion")
        rec.add_input("diffusion", diffusion.content_hash())
    if approach != "image":
        fannet = _load_fannet(Path(args.fannet)) if args.fannet else None
        if fannet is None:
            raise MissingPrerequisiteError(f"approach {approach!r} requires --fannet")
        rec.add_input("fannet", fannet.content_hash())
        if diffusion is not None:
            _check_encoder(diffusion, fannet, args.allow_encoder_mismatch)
    return fannet, diffusion


def cmd_interpolate(args: argparse.Namespace) -> None:
    cfg = _resolve(args)
    out_path = Path(args.out)
    out = out_path.parent
    out.mkdir(parents=True, exist_ok=True)
    with _lock(out):
        rec = RunRecorder("interpolate", args.argv, cfg, out)
        fannet, diffusion = _interp_checkpoints(args, rec, args.approach)
        r1 = GlyphImage.load_png(args.ref1)
        r2 = GlyphImage.load_png(args.ref2)
        c = CharClass.from_letter(args.letter, cfg.alphabet)
        w = cfg.w if args.w is None else args.w
        req = InterpolationRequest(
            args.approach, r1, r2, c, lam=args.lam, w=w,
            seed=int(args.sample_seed), t_prime=args.t_prime,
        )
        img = run_request(req, fannet, diffusion)
        img.save_png(out_path)
        sidecar = out_path.with_suffix(".json")
        _glyph_sidecar(sidecar, {
            "approach": args.approach, "ref1": str(args.ref1), "ref2": str(args.ref2),
            "letter": args.letter, "lambda": args.lam, "w": w, "seed": int(args.sample_seed),
            "t_prime": args.t_prime, "checkpoints": rec.inputs,
        })
        rec.add_output_file(out_path)
        rec.add_output_file(sidecar)
        record = rec.finish()
    print(f"interpolate: wrote {out_path} ({record['output_hash'][:12]})")


def cmd_sweep(args: argparse.Namespace) -> None:
    cfg = _resolve(args)
    out = Path(args.sweep_out)
    out.mkdir(parents=True, exist_ok=True)
    with _lock(out):
        rec = RunRecorder("sweep", args.argv, cfg, out)
        fannet, diffusion = _interp_checkpoints(args, rec, args.approach)
        r1 = GlyphImage.load_png(args.ref1)
        r2 = GlyphImage.load_png(args.ref2)
        c = CharClass.from_letter(args.letter, cfg.alphabet)
        w = cfg.w if args.w is None else args.w
        images = lambda_sweep(args.approach, r1, r2, c, args.n, w, int(args.sample_seed), fannet, diffusion)
        for i, img in enumerate(images):
            path = out / f"lambda_{i:03d}.png"
            img.save_png(path)
            rec.add_output_file(path)
        save_mosaic_png(images, out / "mosaic.png")
        rec.add_output_file(out / "mosaic.png")
        sidecar = out / "sweep.json"
        _glyph_sidecar(sidecar, {
            "approach": args.approach, "ref1": str(args.ref1), "ref2": str(args.ref2),
            "letter": args.letter, "n": args.n, "lambdas": [i / (args.n - 1) for i in range(args.n)],
            "w": w, "seed": int(args.sample_seed), "checkpoints": rec.inputs,
        })
        rec.add_output_file(sidecar)
        record = rec.finish()
    print(f"sweep: wrote {args.n} images + mosaic to {out} ({record['output_hash'][:12]})")


def _load_labelled_dir(path: Path, alphabet: str, side: int) -> tuple[np.ndarray, np.ndarray, list[str]]:
    images, labels, names = [], [], []
    for p in sorted(path.glob("*.png")):
        letter = p.stem.split("_")[0]
        if len(letter) != 1 or letter not in alphabet:
            log.warning("skipping %s: cannot infer letter from filename", p.name)
            continue
        img = GlyphImage.load_png(p)
        if img.side != side:
            log.warning("skipping %s: side %d != expected %d", p.name, img.side, side)
            continue
        images.append(img.pixels)
        labels.append(alphabet.index(letter))
        names.append(p.name)
    if not images:
        raise GlyphFusionError(f"no usable labelled images under {path}")
    return np.stack(images), np.asarray(labels, dtype=np.int64), names


def cmd_evaluate(args: argparse.Namespace) -> None:
    cfg = _resolve(args)
    out_path = Path(args.out)
    out = out_path.parent
    out.mkdir(parents=True, exist_ok=True)
    with _lock(out):
        rec = RunRecorder("evaluate", args.argv, cfg, out)
        clf = ClassifierCheckpoint.load(args.clf)
        rec.add_input("classifier", clf.content_hash())
        real_imgs, _, real_names = _load_labelled_dir(Path(args.real), clf.alphabet, clf.side)
        gen_imgs, gen_labels, gen_names = _load_labelled_dir(Path(args.gen), clf.alphabet, clf.side)

        accuracy = recognition_accuracy(gen_imgs, gen_labels, clf)
        precision, recall = improved_precision_recall(
            embed_features(real_imgs, clf), embed_features(gen_imgs, clf), k=args.k
        )
        mse_map: dict[str, float] = {}
        paired = [(i, gen_names.index(n)) for i, n in enumerate(real_names) if n in gen_names]
        if paired:
            errs = [mse(real_imgs[i], gen_imgs[j]) for i, j in paired]
            mse_map["paired_by_filename"] = float(np.mean(errs))
        report = MetricReport(
            accuracy=accuracy, precision=precision, recall=recall,
            mse_per_category=mse_map, mse_average=mse_map.get("paired_by_filename"),
            n_real=len(real_names), n_gen=len(gen_names),
            config={"k": args.k, "feature_space": "classifier_penultimate",
                    "real": str(args.real), "gen": str(args.gen)},
        )
        with open(out_path, "w") as fh:
            fh.write(report.to_json() + "\n")
        rec.add_output_file(out_path)
        record = rec.finish()
    print(
        f"evaluate: accuracy {accuracy:.3f} precision {precision:.3f} recall {recall:.3f}"
        f" -> {out_path} ({record['output_hash'][:12]})"
    )


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glyphfusion",
        description="Glyph diffusion training, font style interpolation, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="rasterize fonts, build split manifests")
    _add_common(p)
    p.add_argument("--data-root", type=Path, default=None, help="directory of font files or glyph images")
    p.add_argument("--toy-corpus", action="store_true", help="synthesize the bundled-font toy corpus")
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("train-fannet", help="train the style encoder/decoder")
    _add_common(p)
    p.set_defaults(func=cmd_train_fannet)

    p = sub.add_parser("train-diffusion", help="train the conditional noise predictor")
    _add_common(p)
    p.add_argument("--fannet", type=Path, default=None, help="style encoder checkpoint (default: out_dir)")
    p.add_argument("--resume", action="store_true", help="continue from the existing checkpoint")
    p.set_defaults(func=cmd_train_diffusion)

    p = sub.add_parser("train-classifier", help="train the recognition classifier")
    _add_common(p)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("sample", help="generate one glyph from a trained model")
    _add_common(p, out_dir=False, seed=False)
    p.add_argument("--diffusion", type=Path, required=True)
    p.add_argument("--fannet", type=Path, default=None)
    p.add_argument("--style-ref", type=Path, default=None, help="reference glyph PNG for the style condition")
    p.add_argument("--letter", required=True)
    p.add_argument("--w", type=float, default=None)
    p.add_argument("--seed", dest="sample_seed", type=int, default=0, help="sampling seed")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--allow-encoder-mismatch", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("interpolate", help="blend two reference glyphs into a new style")
    _add_common(p, out_dir=False, seed=False)
    p.add_argument("--approach", choices=("image", "cond", "noise", "fannet"), required=True)
    p.add_argument("--ref1", type=Path, required=True)
    p.add_argument("--ref2", type=Path, required=True)
    p.add_argument("--letter", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--w", type=float, default=None)
    p.add_argument("--seed", dest="sample_seed", type=int, default=0, help="sampling seed")
    p.add_argument("--t-prime", type=int, default=None, help="restart step for image blending")
    p.add_argument("--diffusion", type=Path, default=None)
    p.add_argument("--fannet", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--allow-encoder-mismatch", action="store_true")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("sweep", help="lambda sweep grid with a shared seed")
    _add_common(p, out_dir=False, seed=False)
    p.add_argument("--approach", choices=("cond", "noise", "fannet"), required=True)
    p.add_argument("--ref1", type=Path, required=True)
    p.add_argument("--ref2", type=Path, required=True)
    p.add_argument("--letter", required=True)
    p.add_argument("--n", type=int, default=49)
    p.add_argument("--w", type=float, default=None)
    p.add_argument("--seed", dest="sample_seed", type=int, default=0, help="sampling seed")
    p.add_argument("--diffusion", type=Path, default=None)
    p.add_argument("--fannet", type=Path, default=None)
    p.add_argument("--out-dir", dest="sweep_out", type=Path, required=True)
    p.add_argument("--allow-encoder-mismatch", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="metric report over real and generated image dirs")
    _add_common(p)
    p.add_argument("--real", type=Path, required=True)
    p.add_argument("--gen", type=Path, required=True)
    p.add_argument("--clf", type=Path, required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(argv) if argv is not None else sys.argv[1:]
    try:
        args.func(args)
    except (GlyphFusionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
