"""Glyph diffusion with font style interpolation and an evaluation harness."""

from .data import (
    DEFAULT_ALPHABET,
    DEFAULT_SIDE,
    CharClass,
    FontRecord,
    GlyphImage,
    Manifest,
    augment_shift,
    build_manifest,
    from_model_range,
    rasterize_glyph,
    split_fonts,
    to_model_range,
)
from .diffusion import (
    DiffusionCheckpoint,
    DiffusionConfig,
    denoise_step,
    forward_noise,
    guided_noise,
    predict_noise,
    sample,
    sample_batch,
    train_diffusion,
    train_step,
)
from .evaluate import (
    ClassifierCheckpoint,
    ClassifierConfig,
    MetricReport,
    embed_features,
    improved_precision_recall,
    mse,
    recognition_accuracy,
    train_classifier,
    weight_triple_mse,
)
from .fannet import (
    FannetCheckpoint,
    FannetConfig,
    decode_glyph,
    encode_style,
    fannet_interpolate,
    train_fannet,
)
from .interpolate import (
    InterpolationRequest,
    condition_interpolate,
    lambda_sweep,
    noise_interpolate,
    or_blend,
    sdedit_interpolate,
)
from .schedule import NoiseSchedule, cosine_schedule

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ALPHABET",
    "DEFAULT_SIDE",
    "CharClass",
    "ClassifierCheckpoint",
    "ClassifierConfig",
    "DiffusionCheckpoint",
    "DiffusionConfig",
    "FannetCheckpoint",
    "FannetConfig",
    "FontRecord",
    "GlyphImage",
    "InterpolationRequest",
    "Manifest",
    "MetricReport",
    "NoiseSchedule",
    "augment_shift",
    "build_manifest",
    "condition_interpolate",
    "cosine_schedule",
    "decode_glyph",
    "denoise_step",
    "embed_features",
    "encode_style",
    "fannet_interpolate",
    "forward_noise",
    "from_model_range",
    "guided_noise",
    "improved_precision_recall",
    "lambda_sweep",
    "mse",
    "noise_interpolate",
    "or_blend",
    "predict_noise",
    "rasterize_glyph",
    "recognition_accuracy",
    "sample",
    "sample_batch",
    "sdedit_interpolate",
    "split_fonts",
    "to_model_range",
    "train_classifier",
    "train_diffusion",
    "train_fannet",
    "train_step",
    "weight_triple_mse",
]
