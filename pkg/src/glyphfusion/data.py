"""Glyph images, font manifests, splits, and training-batch streams.

Pixel polarity is ink-centric throughout: ``1.0`` is full ink, ``0.0`` is
background. This makes the pixel-wise OR used for image blending a literal
elementwise ``max``. Files on disk use the conventional dark-ink-on-white
8-bit grayscale PNG and are inverted on load.
"""

from __future__ import annotations

import functools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import (
    EmptyCorpusError,
    FontDecodeError,
    MissingGlyphError,
    ShapeMismatchError,
    TooFewFontsError,
)

log = logging.getLogger(__name__)

DEFAULT_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
DEFAULT_SIDE = 32

#: fraction of the canvas the glyph bounding box is scaled to fit
GLYPH_BOX_FRAC = 0.8

#: supersampling factor used when rendering font outlines
RENDER_SUPERSAMPLE = 4

FONT_CATEGORIES = ("Serif", "SansSerif", "Handwriting", "Display", "Unknown")
FONT_WEIGHTS = ("Light", "Medium", "Bold", "Unspecified")

SPLITS = ("train", "val", "test")


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GlyphImage:
    """A square single-channel glyph raster with ink intensity in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = self.pixels
        if px.ndim != 2:
            raise ShapeMismatchError(f"glyph pixels must be 2-D, got shape {px.shape}")
        if px.shape[0] != px.shape[1]:
            raise ShapeMismatchError(f"glyph canvas must be square, got {px.shape}")
        if px.dtype != np.float32:
            raise ShapeMismatchError(f"glyph pixels must be float32, got {px.dtype}")
        if not np.isfinite(px).all():
            raise ValueError("glyph pixels must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("glyph pixels must lie in [0, 1]")

    @property
    def side(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "GlyphImage":
        return cls(np.ascontiguousarray(arr, dtype=np.float32))

    @classmethod
    def blank(cls, side: int) -> "GlyphImage":
        return cls(np.zeros((side, side), dtype=np.float32))

    @classmethod
    def load_png(cls, path: Path | str) -> "GlyphImage":
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float32)
        return cls.from_array(1.0 - arr / 255.0)

    def save_png(self, path: Path | str) -> None:
        arr = np.rint((1.0 - self.pixels) * 255.0).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(path, format="PNG")

    def ink_fraction(self, threshold: float = 0.5) -> float:
        """Fraction of pixels carrying ink; a crude stroke-weight proxy."""
        return float((self.pixels > threshold).mean())


@dataclass(frozen=True)
class CharClass:
    """One letter of the alphabet together with its class index."""

    index: int
    letter: str
    alphabet: str = DEFAULT_ALPHABET

    def __post_init__(self) -> None:
        if not (0 <= self.index < len(self.alphabet)):
            raise ValueError(f"class index {self.index} outside alphabet of size {len(self.alphabet)}")
        if self.alphabet[self.index] != self.letter:
            raise ValueError(f"letter {self.letter!r} is not at index {self.index} of the alphabet")

    @classmethod
    def from_letter(cls, letter: str, alphabet: str = DEFAULT_ALPHABET) -> "CharClass":
        idx = alphabet.find(letter)
        if idx < 0:
            raise ValueError(f"letter {letter!r} not in alphabet {alphabet!r}")
        return cls(idx, letter, alphabet)

    def one_hot(self) -> np.ndarray:
        v = np.zeros(len(self.alphabet), dtype=np.float32)
        v[self.index] = 1.0
        return v


@dataclass
class FontRecord:
    """One font: identity, style metadata, and letter -> image path map."""

    font_id: str
    family: str
    category: str = "Unknown"
    weight: str = "Unspecified"
    glyphs: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.category not in FONT_CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.weight not in FONT_WEIGHTS:
            raise ValueError(f"unknown weight {self.weight!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "font_id": self.font_id,
                "family": self.family,
                "category": self.category,
                "weight": self.weight,
                "glyphs": self.glyphs,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "FontRecord":
        d = json.loads(line)
        return cls(
            font_id=d["font_id"],
            family=d["family"],
            category=d["category"],
            weight=d["weight"],
            glyphs=dict(d["glyphs"]),
        )


@dataclass
class Manifest:
    """An ordered collection of font records plus corpus-level settings."""

    records: list[FontRecord]
    alphabet: str = DEFAULT_ALPHABET
    canvas_side: int = DEFAULT_SIDE
    split: str | None = None
    root: Path | None = None

    def __post_init__(self) -> None:
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        seen: set[tuple[str, str]] = set()
        for rec in self.records:
            key = (rec.family, rec.weight)
            if key in seen:
                raise ValueError(f"duplicate (family, weight) pair {key} in manifest")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.records)

    def font_ids(self) -> set[str]:
        return {r.font_id for r in self.records}

    def glyph_path(self, record: FontRecord, letter: str) -> Path:
        if self.root is None:
            raise ValueError("manifest has no root directory; cannot resolve glyph paths")
        return self.root / record.glyphs[letter]

    def load_glyph(self, record: FontRecord, letter: str) -> GlyphImage:
        img = GlyphImage.load_png(self.glyph_path(record, letter))
        if img.side != self.canvas_side:
            raise ShapeMismatchError(
                f"{record.font_id}/{letter}: image side {img.side} != manifest canvas {self.canvas_side}"
            )
        return img

    def validate(self, check_images: bool = True) -> None:
        """Check alphabet coverage and, optionally, that every image decodes."""
        for rec in self.records:
            missing = [ch for ch in self.alphabet if ch not in rec.glyphs]
            if missing:
                raise ValueError(f"font {rec.font_id} missing letters {''.join(missing)}")
            if check_images:
                for ch in self.alphabet:
                    self.load_glyph(rec, ch)

    def save(self, path: Path | str) -> None:
        """Write JSON-lines records with glyph paths relative to the file's directory."""
        import os

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        base = path.parent.resolve()
        with open(path, "w") as fh:
            for rec in self.records:
                glyphs = rec.glyphs
                if self.root is not None and self.root.resolve() != base:
                    glyphs = {
                        ch: os.path.relpath((self.root / rel).resolve(), base)
                        for ch, rel in rec.glyphs.items()
                    }
                out = FontRecord(rec.font_id, rec.family, rec.category, rec.weight, glyphs)
                fh.write(out.to_json() + "\n")

    @classmethod
    def load(
        cls,
        path: Path | str,
        alphabet: str = DEFAULT_ALPHABET,
        canvas_side: int = DEFAULT_SIDE,
        split: str | None = None,
    ) -> "Manifest":
        path = Path(path)
        if split is None:
            for name in SPLITS:
                if name in path.stem.split("_"):
                    split = name
                    break
        records = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(FontRecord.from_json(line))
        return cls(records, alphabet=alphabet, canvas_side=canvas_side, split=split, root=path.parent)


def validate_split_disjoint(*manifests: Manifest) -> None:
    """Raise if any font_id appears in more than one of the given manifests."""
    seen: dict[str, str] = {}
    for m in manifests:
        tag = m.split or "?"
        for fid in m.font_ids():
            if fid in seen:
                raise ValueError(f"font {fid} appears in both {seen[fid]} and {tag} splits")
            seen[fid] = tag


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=64)
def _font_codepoints(font_file: str) -> frozenset[int]:
    from fontTools.ttLib import TTFont

    try:
        tt = TTFont(font_file, fontNumber=0, lazy=True)
        cmap = tt.getBestCmap()
    except Exception as exc:  # fontTools raises a mixed bag on corrupt files
        raise FontDecodeError(f"cannot parse font {font_file}: {exc}") from exc
    return frozenset(cmap.keys())


def render_ink(font_file: Path | str, letter: str, canvas_px: int, box_frac: float = GLYPH_BOX_FRAC) -> np.ndarray:
    """Render one letter as an ink-intensity array of shape (canvas_px, canvas_px).

    The glyph is cropped to its ink bounding box, scaled (preserving aspect)
    to fit a ``box_frac`` x canvas box, and centered. Raises
    :class:`MissingGlyphError` if the font has no outline for the letter.
    """
    font_file = str(font_file)
    if ord(letter) not in _font_codepoints(font_file):
        raise MissingGlyphError(f"font {font_file} has no glyph for {letter!r}")
    try:
        font = ImageFont.truetype(font_file, size=canvas_px)
    except OSError as exc:
        raise FontDecodeError(f"cannot open font {font_file}: {exc}") from exc

    scratch = Image.new("L", (canvas_px * 3, canvas_px * 3), 0)
    draw = ImageDraw.Draw(scratch)
    draw.text((canvas_px, canvas_px), letter, font=font, fill=255)
    arr = np.asarray(scratch)

    rows = np.any(arr > 0, axis=1)
    cols = np.any(arr > 0, axis=0)
    if not rows.any():
        raise MissingGlyphError(f"font {font_file} renders empty ink for {letter!r}")
    r0, r1 = np.flatnonzero(rows)[[0, -1]]
    c0, c1 = np.flatnonzero(cols)[[0, -1]]
    crop = arr[r0 : r1 + 1, c0 : c1 + 1]

    box = max(1, int(round(box_frac * canvas_px)))
    h, w = crop.shape
    scale = min(box / h, box / w)
    th, tw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
    resized = np.asarray(Image.fromarray(crop).resize((tw, th), Image.LANCZOS), dtype=np.float32)

    canvas = np.zeros((canvas_px, canvas_px), dtype=np.float32)
    top = (canvas_px - th) // 2
    left = (canvas_px - tw) // 2
    canvas[top : top + th, left : left + tw] = resized
    return np.clip(canvas / 255.0, 0.0, 1.0)


def downsample_ink(ink: np.ndarray, side: int) -> np.ndarray:
    """Resize an ink array to side x side with antialiasing, clipped to [0, 1]."""
    im = Image.fromarray(np.clip(ink, 0.0, 1.0).astype(np.float32), mode="F")
    out = np.asarray(im.resize((side, side), Image.LANCZOS), dtype=np.float32)
    return np.clip(out, 0.0, 1.0)


def rasterize_glyph(font_file: Path | str, letter: str, side: int = DEFAULT_SIDE) -> GlyphImage:
    """Render a single letter from a font file onto a side x side canvas."""
    hi = render_ink(font_file, letter, side * RENDER_SUPERSAMPLE)
    return GlyphImage.from_array(downsample_ink(hi, side))


# ---------------------------------------------------------------------------
# manifest construction
# ---------------------------------------------------------------------------

_WEIGHT_SUFFIXES = {"light": "Light", "medium": "Medium", "bold": "Bold"}


def parse_family_weight(name: str) -> tuple[str, str]:
    """Split a font name into (family, weight) on a trailing weight suffix."""
    if "-" in name:
        stem, _, suffix = name.rpartition("-")
        weight = _WEIGHT_SUFFIXES.get(suffix.lower())
        if weight is not None:
            return stem, weight
    return name, "Unspecified"


def infer_category(name: str) -> str:
    low = name.lower()
    if "hand" in low or "script" in low:
        return "Handwriting"
    if "display" in low:
        return "Display"
    if "sans" in low or "mono" in low:
        return "SansSerif"
    if "serif" in low:
        return "Serif"
    return "Unknown"


def _build_from_font_files(
    font_files: Sequence[Path], root: Path, alphabet: str, side: int, images_out: Path
) -> Manifest:
    images_out.mkdir(parents=True, exist_ok=True)
    records = []
    for ff in sorted(font_files):
        font_id = ff.stem
        try:
            glyphs = {}
            for ch in alphabet:
                img = rasterize_glyph(ff, ch, side)
                rel = Path(font_id) / f"{ch}.png"
                (images_out / font_id).mkdir(parents=True, exist_ok=True)
                img.save_png(images_out / rel)
                glyphs[ch] = str(Path(images_out.name) / rel)
        except (MissingGlyphError, FontDecodeError) as exc:
            log.warning("excluding font %s: %s", font_id, exc)
            continue
        family, weight = parse_family_weight(font_id)
        records.append(
            FontRecord(font_id, family, infer_category(font_id), weight, glyphs)
        )
    return Manifest(records, alphabet=alphabet, canvas_side=side, root=images_out.parent)


def _build_from_image_tree(root: Path, alphabet: str, side: int) -> Manifest:
    records = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        glyphs = {}
        missing = []
        for ch in alphabet:
            p = sub / f"{ch}.png"
            if p.exists():
                glyphs[ch] = str(p.relative_to(root))
            else:
                missing.append(ch)
        if missing:
            log.warning("excluding font %s: missing letters %s", sub.name, "".join(missing))
            continue
        family, weight = parse_family_weight(sub.name)
        records.append(FontRecord(sub.name, family, infer_category(sub.name), weight, glyphs))
    return Manifest(records, alphabet=alphabet, canvas_side=side, root=root)


def build_manifest(
    root: Path | str,
    alphabet: str = DEFAULT_ALPHABET,
    side: int = DEFAULT_SIDE,
    images_out: Path | str | None = None,
) -> Manifest:
    """Discover fonts under ``root`` and build a manifest.

    ``root`` may contain font files (``.ttf``/``.otf``), which are rasterized
    into ``images_out`` (required in that mode), or an image tree of one
    directory per font with ``<letter>.png`` files. Fonts lacking a complete
    alphabet are excluded and logged.
    """
    root = Path(root)
    font_files = sorted(list(root.rglob("*.ttf")) + list(root.rglob("*.otf")))
    if font_files:
        if images_out is None:
            raise ValueError("images_out is required when building from font files")
        manifest = _build_from_font_files(font_files, root, alphabet, side, Path(images_out))
    else:
        manifest = _build_from_image_tree(root, alphabet, side)
    if not manifest.records:
        raise EmptyCorpusError(f"no usable fonts found under {root}")
    return manifest


def split_fonts(
    manifest: Manifest, ratios: tuple[float, float, float], seed: int
) -> tuple[Manifest, Manifest, Manifest]:
    """Partition fonts into deterministic, disjoint train/val/test manifests."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got sum {sum(ratios)}")
    n = len(manifest.records)
    exact = [n * r for r in ratios]
    sizes = [math.floor(e) for e in exact]
    remainders = [e - s for e, s in zip(exact, sizes)]
    for _ in range(n - sum(sizes)):
        i = int(np.argmax(remainders))
        sizes[i] += 1
        remainders[i] = -1.0
    if any(s == 0 for s in sizes):
        raise TooFewFontsError(f"{n} fonts cannot fill splits with ratios {ratios}")

    order = np.argsort([r.font_id for r in manifest.records])  # canonical order first
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), len(manifest.records)]))
    perm = rng.permutation(n)
    shuffled = [manifest.records[order[i]] for i in perm]

    out = []
    start = 0
    for split, size in zip(SPLITS, sizes):
        recs = shuffled[start : start + size]
        out.append(
            Manifest(
                sorted(recs, key=lambda r: r.font_id),
                alphabet=manifest.alphabet,
                canvas_side=manifest.canvas_side,
                split=split,
                root=manifest.root,
            )
        )
        start += size
    return out[0], out[1], out[2]


# ---------------------------------------------------------------------------
# augmentation and range mapping
# ---------------------------------------------------------------------------


def augment_shift(
    img: GlyphImage,
    rng: np.random.Generator,
    prob: float = 0.3,
    max_frac: float = 0.2,
) -> GlyphImage:
    """With probability ``prob``, translate the glyph by uniform integer offsets.

    Offsets are drawn independently for x and y from
    ``[-max_frac * side, +max_frac * side]``; vacated pixels are background.
    The no-augment branch returns the input unchanged (same object).
    """
    if rng.random() >= prob:
        return img
    side = img.side
    m = int(max_frac * side)
    dx, dy = (int(v) for v in rng.integers(-m, m + 1, size=2))
    return shift_glyph(img, dx, dy)


def shift_glyph(img: GlyphImage, dx: int, dy: int) -> GlyphImage:
    """Translate by (dx right, dy down) with background fill."""
    side = img.side
    out = np.zeros_like(img.pixels)
    src_y = slice(max(0, -dy), min(side, side - dy))
    src_x = slice(max(0, -dx), min(side, side - dx))
    dst_y = slice(max(0, dy), min(side, side + dy))
    dst_x = slice(max(0, dx), min(side, side + dx))
    out[dst_y, dst_x] = img.pixels[src_y, src_x]
    return GlyphImage(out)


def to_model_range(img: GlyphImage | np.ndarray) -> np.ndarray:
    """Map ink intensities [0, 1] to the model's [-1, 1] range."""
    px = img.pixels if isinstance(img, GlyphImage) else np.asarray(img, dtype=np.float32)
    return (px.astype(np.float32) * 2.0 - 1.0).astype(np.float32)


def from_model_range(arr: np.ndarray) -> GlyphImage:
    """Clamp a [-1, 1] tensor and map back to an ink-intensity glyph."""
    arr = np.clip(np.asarray(arr, dtype=np.float32), -1.0, 1.0)
    return GlyphImage.from_array((arr + 1.0) / 2.0)


# ---------------------------------------------------------------------------
# in-memory corpus and batch streams
# ---------------------------------------------------------------------------


@dataclass
class GlyphArrays:
    """All glyphs of a manifest densely packed for training.

    ``images`` has shape (n_fonts, n_classes, side, side) with ink polarity;
    fonts are ordered by font_id, classes by alphabet position.
    """

    images: np.ndarray
    font_ids: list[str]
    alphabet: str

    @property
    def n_fonts(self) -> int:
        return self.images.shape[0]

    @property
    def n_classes(self) -> int:
        return self.images.shape[1]

    @property
    def side(self) -> int:
        return self.images.shape[2]

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (images (N, side, side), class indices (N,)) in font-major order."""
        n_f, n_c, s, _ = self.images.shape
        labels = np.tile(np.arange(n_c, dtype=np.int64), n_f)
        return self.images.reshape(n_f * n_c, s, s), labels


def load_glyph_arrays(manifest: Manifest) -> GlyphArrays:
    recs = sorted(manifest.records, key=lambda r: r.font_id)
    n_c = len(manifest.alphabet)
    side = manifest.canvas_side
    images = np.zeros((len(recs), n_c, side, side), dtype=np.float32)
    for i, rec in enumerate(recs):
        for j, ch in enumerate(manifest.alphabet):
            images[i, j] = manifest.load_glyph(rec, ch).pixels
    return GlyphArrays(images, [r.font_id for r in recs], manifest.alphabet)


def glyph_batches(
    arrays: GlyphArrays,
    batch_size: int,
    seed: int,
    augment_prob: float = 0.3,
    augment_max_frac: float = 0.2,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Endless stream of (images (B, side, side), class indices (B,)) batches.

    Batch order is fully determined by (seed, epoch): each epoch reshuffles
    all glyphs with a generator derived from those two values, then applies
    shift augmentation from the same stream.
    """
    images, labels = arrays.flat()
    n = images.shape[0]
    epoch = 0
    while True:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), epoch]))
        perm = rng.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            idx = perm[start : start + batch_size]
            batch = images[idx]
            if augment_prob > 0:
                batch = batch.copy()
                for b in range(batch.shape[0]):
                    batch[b] = augment_shift(
                        GlyphImage(np.ascontiguousarray(batch[b])), rng, augment_prob, augment_max_frac
                    ).pixels
            yield batch, labels[idx]
        epoch += 1
