"""Quantitative evaluation: recognition accuracy, distributional precision/recall,
and the light/medium/bold interpolation MSE protocol.

Precision/recall follow the k-NN manifold rule: a point lies in a set's
manifold iff it is within some member's distance to its own k-th nearest
neighbour (self excluded). Precision is the fraction of generated points
inside the real manifold; recall is the fraction of real points inside the
generated manifold.
"""

from __future__ import annotations

import json
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import checkpoints as ckpt_io
from .data import (
    DEFAULT_ALPHABET,
    CharClass,
    GlyphArrays,
    GlyphImage,
    Manifest,
    FontRecord,
    glyph_batches,
    load_glyph_arrays,
)
from .errors import (
    DivergenceError,
    IncompleteTripleError,
    ShapeMismatchError,
    TooFewPointsError,
)
from .rng import derive_seed, np_stream

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# classifier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassifierConfig:
    side: int = 32
    alphabet: str = DEFAULT_ALPHABET
    base_channels: int = 32
    n_stages: int = 3
    batch_size: int = 64
    lr: float = 1e-3
    iters: int = 2000
    augment_prob: float = 0.3
    augment_max_frac: float = 0.2
    seed: int = 0

    def arch_meta(self) -> dict:
        return {
            "side": self.side,
            "alphabet": self.alphabet,
            "base_channels": self.base_channels,
            "n_stages": self.n_stages,
        }


class _ResidualUnit(nn.Module):
    def __init__(self, ch_in: int, ch_out: int, stride: int):
        super().__init__()
        self.conv1 = nn.Conv2d(ch_in, ch_out, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(ch_out)
        self.conv2 = nn.Conv2d(ch_out, ch_out, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(ch_out)
        self.down = (
            nn.Sequential(nn.Conv2d(ch_in, ch_out, 1, stride=stride, bias=False), nn.BatchNorm2d(ch_out))
            if (stride != 1 or ch_in != ch_out)
            else nn.Identity()
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        return F.relu(h + self.down(x))


class GlyphClassifier(nn.Module):
    """Small residual CNN; penultimate features are the pooled stage output."""

    def __init__(self, cfg: ClassifierConfig):
        super().__init__()
        base = cfg.base_channels
        self.stem = nn.Sequential(nn.Conv2d(1, base, 3, padding=1, bias=False), nn.BatchNorm2d(base), nn.ReLU())
        stages = []
        ch = base
        for i in range(cfg.n_stages):
            ch_out = base * (2**i)
            stages.append(_ResidualUnit(ch, ch_out, stride=1 if i == 0 else 2))
            stages.append(_ResidualUnit(ch_out, ch_out, stride=1))
            ch = ch_out
        self.stages = nn.Sequential(*stages)
        self.feature_dim = ch
        self.head = nn.Linear(ch, len(cfg.alphabet))

    def features(self, x: torch.Tensor) -> torch.Tensor:
        h = self.stages(self.stem(x))
        return h.mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))


@dataclass
class ClassifierCheckpoint:
    model: GlyphClassifier
    meta: dict
    curves: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def side(self) -> int:
        return int(self.meta["canvas_side"])

    @property
    def alphabet(self) -> str:
        return str(self.meta["alphabet"])

    @property
    def held_out_accuracy(self) -> float:
        return float(self.meta["held_out_accuracy"])

    def content_hash(self) -> str:
        return ckpt_io.content_hash(ckpt_io.state_dict_to_arrays(self.model), self.meta)

    def save(self, path) -> None:
        arrays = ckpt_io.state_dict_to_arrays(self.model)
        arrays.update({f"curve::{k}": v for k, v in self.curves.items()})
        ckpt_io.save_arrays(path, arrays, self.meta)

    @classmethod
    def load(cls, path) -> "ClassifierCheckpoint":
        arrays, meta = ckpt_io.load_arrays(path)
        if meta.get("kind") != "classifier":
            raise ValueError(f"{path} is not a classifier checkpoint")
        cfg = ClassifierConfig(
            side=meta["canvas_side"],
            alphabet=meta["alphabet"],
            base_channels=meta["arch"]["base_channels"],
            n_stages=meta["arch"]["n_stages"],
        )
        model = GlyphClassifier(cfg)
        model.load_state_dict(ckpt_io.arrays_to_state_dict(arrays))
        model.eval()
        curves = {k.split("::", 1)[1]: v for k, v in arrays.items() if k.startswith("curve::")}
        return cls(model, meta, curves)


def _as_arrays(data: Manifest | GlyphArrays) -> GlyphArrays:
    return load_glyph_arrays(data) if isinstance(data, Manifest) else data


def train_classifier(
    train: Manifest | GlyphArrays,
    val: Manifest | GlyphArrays,
    cfg: ClassifierConfig,
) -> ClassifierCheckpoint:
    """Train the letter classifier and record its held-out accuracy."""
    train_arr = _as_arrays(train)
    val_arr = _as_arrays(val)
    if train_arr.n_fonts == 0 or val_arr.n_fonts == 0:
        raise ValueError("training and validation sets must be nonempty")
    if train_arr.side != cfg.side:
        raise ShapeMismatchError(f"corpus side {train_arr.side} != config side {cfg.side}")

    torch.manual_seed(derive_seed(cfg.seed, "classifier-init"))
    model = GlyphClassifier(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    batches = glyph_batches(
        train_arr, cfg.batch_size, derive_seed(cfg.seed, "classifier-data"),
        cfg.augment_prob, cfg.augment_max_frac,
    )

    curve = []
    t0 = time.time()
    model.train()
    for step in range(1, cfg.iters + 1):
        images, labels = next(batches)
        logits = model(torch.from_numpy(images).unsqueeze(1))
        loss = F.cross_entropy(logits, torch.from_numpy(labels))
        if not torch.isfinite(loss):
            raise DivergenceError(f"classifier loss became non-finite at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        curve.append(float(loss.detach()))
        if step % 200 == 0 or step == cfg.iters:
            log.info("classifier step %d/%d loss %.4f (%.0fs)", step, cfg.iters, float(loss.detach()), time.time() - t0)

    model.eval()
    val_images, val_labels = val_arr.flat()
    meta = {
        "kind": "classifier",
        "alphabet": cfg.alphabet,
        "canvas_side": cfg.side,
        "seed": cfg.seed,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "arch": cfg.arch_meta(),
        "iters_run": cfg.iters,
        "config": {"batch_size": cfg.batch_size, "lr": cfg.lr, "augment_prob": cfg.augment_prob},
    }
    ckpt = ClassifierCheckpoint(model, meta, {"train_loss": np.asarray(curve, dtype=np.float64)})
    meta["held_out_accuracy"] = recognition_accuracy(val_images, val_labels, ckpt)
    return ckpt


def _predict_logits(images: np.ndarray, clf: ClassifierCheckpoint, batch: int = 256) -> np.ndarray:
    if images.ndim != 3 or images.shape[1] != clf.side or images.shape[2] != clf.side:
        raise ShapeMismatchError(f"expected (N, {clf.side}, {clf.side}) images, got {images.shape}")
    clf.model.eval()
    outs = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch):
            x = torch.from_numpy(np.ascontiguousarray(images[start : start + batch], dtype=np.float32))
            outs.append(clf.model(x.unsqueeze(1)).numpy())
    return np.concatenate(outs, axis=0)


def predictions_from_logits(logits: np.ndarray) -> np.ndarray:
    """Argmax class indices; ties resolve to the lowest class index."""
    return np.argmax(np.asarray(logits), axis=1)


def recognition_accuracy(
    images: np.ndarray | list[GlyphImage],
    labels: np.ndarray,
    clf: ClassifierCheckpoint,
) -> float:
    """Fraction of argmax predictions matching labels (ties: lowest class index)."""
    if isinstance(images, list):
        images = np.stack([g.pixels for g in images])
    pred = predictions_from_logits(_predict_logits(images, clf))
    return float((pred == np.asarray(labels)).mean())


def embed_features(images: np.ndarray | list[GlyphImage], clf: ClassifierCheckpoint) -> np.ndarray:
    """Penultimate-layer activations, one row per image."""
    if isinstance(images, list):
        images = np.stack([g.pixels for g in images])
    if images.ndim != 3 or images.shape[1] != clf.side or images.shape[2] != clf.side:
        raise ShapeMismatchError(f"expected (N, {clf.side}, {clf.side}) images, got {images.shape}")
    clf.model.eval()
    outs = []
    with torch.no_grad():
        for start in range(0, images.shape[0], 256):
            x = torch.from_numpy(np.ascontiguousarray(images[start : start + 256], dtype=np.float32))
            outs.append(clf.model.features(x.unsqueeze(1)).numpy())
    return np.concatenate(outs, axis=0).astype(np.float64)


# ---------------------------------------------------------------------------
# improved precision / recall
# ---------------------------------------------------------------------------


def _pairwise_distances(a: np.ndarray, b: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Euclidean distances via explicit differences (no dot-product trick)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    for start in range(0, a.shape[0], chunk):
        d = a[start : start + chunk, None, :] - b[None, :, :]
        out[start : start + chunk] = np.sqrt(np.sum(d * d, axis=-1))
    return out


def _knn_radii(x: np.ndarray, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest other point in the same set."""
    d = _pairwise_distances(x, x)
    np.fill_diagonal(d, np.inf)
    return np.partition(d, k - 1, axis=1)[:, k - 1]


def _in_manifold(queries: np.ndarray, support: np.ndarray, radii: np.ndarray) -> np.ndarray:
    d = _pairwise_distances(queries, support)
    return (d <= radii[None, :]).any(axis=1)


def improved_precision_recall(
    real: np.ndarray,
    gen: np.ndarray,
    k: int = 3,
) -> tuple[float, float]:
    """Distribution-level precision and recall under the k-NN manifold rule."""
    real = np.asarray(real, dtype=np.float64)
    gen = np.asarray(gen, dtype=np.float64)
    for name, arr in (("real", real), ("gen", gen)):
        if arr.ndim != 2:
            raise ValueError(f"{name} features must be 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError(f"{name} features must be finite")
        if arr.shape[0] <= k:
            raise TooFewPointsError(f"{name} set has {arr.shape[0]} points; needs > k = {k}")
    precision = float(_in_manifold(gen, real, _knn_radii(real, k)).mean())
    recall = float(_in_manifold(real, gen, _knn_radii(gen, k)).mean())
    return precision, recall


# ---------------------------------------------------------------------------
# pixel MSE protocols
# ---------------------------------------------------------------------------


def mse(a: GlyphImage | np.ndarray, b: GlyphImage | np.ndarray) -> float:
    """Mean squared error over [0, 1] ink intensities."""
    pa = a.pixels if isinstance(a, GlyphImage) else np.asarray(a, dtype=np.float32)
    pb = b.pixels if isinstance(b, GlyphImage) else np.asarray(b, dtype=np.float32)
    if pa.shape != pb.shape:
        raise ShapeMismatchError(f"shapes differ: {pa.shape} vs {pb.shape}")
    return float(np.mean((pa.astype(np.float64) - pb.astype(np.float64)) ** 2))


_CATEGORY_PAIR = {
    "Serif": "S-S",
    "SansSerif": "SS-SS",
    "Handwriting": "H-H",
    "Display": "D-D",
    "Unknown": "U-U",
}


def collect_weight_triples(manifest: Manifest) -> list[tuple[FontRecord, FontRecord, FontRecord]]:
    """Group records into (light, medium, bold) triples by family."""
    by_family: dict[str, dict[str, FontRecord]] = defaultdict(dict)
    for rec in manifest.records:
        by_family[rec.family][rec.weight] = rec
    triples = []
    for family in sorted(by_family):
        weights = by_family[family]
        if all(w in weights for w in ("Light", "Medium", "Bold")):
            triples.append((weights["Light"], weights["Medium"], weights["Bold"]))
    return triples


def weight_triple_mse(
    triples: list[tuple[FontRecord, FontRecord, FontRecord]],
    approach: str,
    letters: str,
    manifest: Manifest,
    fannet=None,
    diffusion=None,
    w: float | None = None,
    seed: int = 0,
) -> tuple[dict[str, float], float]:
    """MSE between lambda=0.5 light/bold interpolations and the medium glyph.

    Returns (per-category mean MSE keyed like "S-S", overall mean). The
    medium weight serves as quasi-ground-truth.
    """
    from .interpolate import DEFAULT_GUIDANCE, InterpolationRequest, run_request

    if not triples:
        raise IncompleteTripleError("no complete light/medium/bold triples given")
    w = DEFAULT_GUIDANCE if w is None else w
    per_category: dict[str, list[float]] = defaultdict(list)
    everything: list[float] = []
    for light, medium, bold in triples:
        if not (light.family == medium.family == bold.family):
            raise IncompleteTripleError(f"triple spans families: {light.family}, {medium.family}, {bold.family}")
        if (light.weight, medium.weight, bold.weight) != ("Light", "Medium", "Bold"):
            raise IncompleteTripleError(f"triple of family {light.family} has wrong weights")
        cat = _CATEGORY_PAIR[light.category]
        for ch in letters:
            c = CharClass.from_letter(ch, manifest.alphabet)
            r1 = manifest.load_glyph(light, ch)
            r2 = manifest.load_glyph(bold, ch)
            target = manifest.load_glyph(medium, ch)
            req = InterpolationRequest(approach, r1, r2, c, lam=0.5, w=w, seed=seed)
            result = run_request(req, fannet, diffusion)
            err = mse(result, target)
            per_category[cat].append(err)
            everything.append(err)
    means = {cat: float(np.mean(v)) for cat, v in sorted(per_category.items())}
    return means, float(np.mean(everything))


# ---------------------------------------------------------------------------
# report container
# ---------------------------------------------------------------------------


@dataclass
class MetricReport:
    """Serializable bundle of evaluation results."""

    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    mse_per_category: dict[str, float] = field(default_factory=dict)
    mse_average: float | None = None
    n_real: int = 0
    n_gen: int = 0
    config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("accuracy", "precision", "recall"):
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "accuracy": self.accuracy,
                "precision": self.precision,
                "recall": self.recall,
                "mse_per_category": self.mse_per_category,
                "mse_average": self.mse_average,
                "n_real": self.n_real,
                "n_gen": self.n_gen,
                "config": self.config,
            },
            indent=2,
            sort_keys=True,
        )
