"""Open-font toy corpus construction.

Builds a small glyph corpus from fonts shipped with the OS or matplotlib,
optionally synthesizing light/medium/bold weight triples per base face by
eroding/dilating the high-resolution render before downsampling. The result
is an image tree that :func:`glyphfusion.data.build_manifest` ingests, with
every base face contributing one family whose medium weight is the unmodified
render.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .data import (
    DEFAULT_ALPHABET,
    DEFAULT_SIDE,
    GLYPH_BOX_FRAC,
    RENDER_SUPERSAMPLE,
    GlyphImage,
    downsample_ink,
    render_ink,
)
from .errors import EmptyCorpusError, FontDecodeError, MissingGlyphError

log = logging.getLogger(__name__)

#: curated text faces known to cover A-Z in common installs
PREFERRED_FACES = (
    "DejaVuSans",
    "DejaVuSans-Bold",
    "DejaVuSans-Oblique",
    "DejaVuSansMono",
    "DejaVuSansMono-Bold",
    "DejaVuSerif",
    "DejaVuSerif-Bold",
    "DejaVuSerif-Italic",
    "STIXGeneral",
    "STIXGeneralBol",
    "STIXGeneralItalic",
    "cmr10",
    "cmss10",
    "cmtt10",
    "cmb10",
)

_SEARCH_DIRS = ("/usr/share/fonts", "/usr/local/share/fonts")


def find_font_files(names: Sequence[str] | None = None) -> list[Path]:
    """Locate .ttf files for the given face names (default: the curated list)."""
    names = list(names if names is not None else PREFERRED_FACES)
    candidates: dict[str, Path] = {}
    dirs = [Path(d) for d in _SEARCH_DIRS if Path(d).is_dir()]
    try:
        import matplotlib

        dirs.append(Path(matplotlib.get_data_path()) / "fonts" / "ttf")
    except ImportError:
        pass
    for d in dirs:
        for p in sorted(d.rglob("*.ttf")):
            candidates.setdefault(p.stem, p)
    found = [candidates[n] for n in names if n in candidates]
    if not found:
        raise EmptyCorpusError(f"none of the requested faces found under {dirs}")
    return found


def weight_variants(hi_res_ink: np.ndarray, grow_px: int) -> dict[str, np.ndarray]:
    """Derive light/medium/bold ink arrays from one high-resolution render."""
    return {
        "Light": ndimage.grey_erosion(hi_res_ink, size=(grow_px, grow_px)),
        "Medium": hi_res_ink,
        "Bold": ndimage.grey_dilation(hi_res_ink, size=(grow_px, grow_px)),
    }


def build_toy_corpus(
    out_dir: Path | str,
    side: int = DEFAULT_SIDE,
    alphabet: str = DEFAULT_ALPHABET,
    faces: Sequence[Path] | None = None,
    synth_weights: bool = True,
    grow_px: int | None = None,
) -> Path:
    """Render a toy glyph image tree under ``out_dir`` and return its path.

    With ``synth_weights`` each face becomes three fonts named
    ``<face>-Light/-Medium/-Bold`` (one family); otherwise each face becomes
    one font directory. Faces that fail to render a full alphabet are skipped.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    face_files = list(faces) if faces is not None else find_font_files()
    hi_px = side * RENDER_SUPERSAMPLE
    if grow_px is None:
        grow_px = max(3, hi_px // 24)

    n_written = 0
    for ff in face_files:
        base = Path(ff).stem
        try:
            renders = {ch: render_ink(ff, ch, hi_px, GLYPH_BOX_FRAC) for ch in alphabet}
        except (MissingGlyphError, FontDecodeError) as exc:
            log.warning("skipping face %s: %s", base, exc)
            continue
        if synth_weights:
            for w in ("Light", "Medium", "Bold"):
                (out_dir / f"{base}-{w}").mkdir(exist_ok=True)
            for ch, hi in renders.items():
                for w, variant in weight_variants(hi, grow_px).items():
                    img = GlyphImage.from_array(downsample_ink(variant, side))
                    img.save_png(out_dir / f"{base}-{w}" / f"{ch}.png")
            n_written += 3
        else:
            font_dir = out_dir / base
            font_dir.mkdir(exist_ok=True)
            for ch, hi in renders.items():
                GlyphImage.from_array(downsample_ink(hi, side)).save_png(font_dir / f"{ch}.png")
            n_written += 1
    if n_written == 0:
        raise EmptyCorpusError("no face produced a usable glyph set")
    log.info("toy corpus: wrote %d fonts to %s", n_written, out_dir)
    return out_dir
