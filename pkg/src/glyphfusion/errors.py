"""Exception types raised across the toolkit.

All library-specific failures derive from :class:`GlyphFusionError` so callers
(and the CLI) can catch one base class. Plain argument misuse raises the
usual built-ins (``ValueError``/``TypeError``).
"""


class GlyphFusionError(Exception):
    """Base class for all glyphfusion failures."""


class MissingGlyphError(GlyphFusionError):
    """A requested letter has no outline in the font."""


class FontDecodeError(GlyphFusionError):
    """A font file could not be parsed or rendered."""


class EmptyCorpusError(GlyphFusionError):
    """No usable fonts were found while building a manifest."""


class TooFewFontsError(GlyphFusionError):
    """A requested split would leave at least one partition empty."""


class ShapeMismatchError(GlyphFusionError):
    """Image or tensor shapes disagree with what a checkpoint expects."""


class DimensionMismatchError(GlyphFusionError):
    """A style vector's dimension disagrees with the checkpoint."""


class StepOutOfRangeError(GlyphFusionError):
    """A diffusion step index lies outside 1..T."""


class DivergenceError(GlyphFusionError):
    """Training produced a non-finite loss."""


class TooFewPointsError(GlyphFusionError):
    """A feature set is too small for the chosen k-NN radius."""


class IncompleteTripleError(GlyphFusionError):
    """A light/medium/bold triple is inconsistent or incomplete."""


class MissingPrerequisiteError(GlyphFusionError):
    """A required checkpoint or artifact does not exist."""


class EncoderMismatchError(GlyphFusionError):
    """The style encoder does not match the one a diffusion model was trained with."""
