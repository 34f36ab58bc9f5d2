"""Experiment configuration: defaults < config file < environment < CLI flags.

Config files are plain ``key = value`` lines (``#`` comments allowed); values
are parsed as JSON where possible, with bare words kept as strings and
comma-separated numbers accepted for tuples. Unknown keys are rejected.
The ``GLYPHFUSION_SEED`` environment variable overrides the configured seed.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .data import DEFAULT_ALPHABET

SEED_ENV_VAR = "GLYPHFUSION_SEED"


@dataclass
class ExperimentConfig:
    # paths
    data_root: str | None = None
    out_dir: str | None = None
    # global
    seed: int = 0
    # dataset
    canvas_side: int = 32
    alphabet: str = DEFAULT_ALPHABET
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0
    augment_prob: float = 0.3
    augment_max_frac: float = 0.2
    synth_weights: bool = True
    # style encoder
    fannet_d: int = 512
    fannet_channels: tuple[int, ...] = (32, 64, 128)
    fannet_batch_size: int = 64
    fannet_lr: float = 1e-3
    fannet_iters: int = 4000
    fannet_val_every: int = 200
    fannet_patience: int = 5
    # diffusion (key names follow the training-config convention)
    T: int = 200
    batch_size: int = 64
    lr: float = 1e-4
    iters: int = 30000
    p_drop: float = 0.1
    w: float = 3.0
    base_channels: int = 64
    channel_mult: tuple[int, ...] = (1, 2, 2)
    num_res_blocks: int = 2
    attn_middle: bool = True
    # classifier
    clf_base_channels: int = 32
    clf_stages: int = 3
    clf_batch_size: int = 64
    clf_lr: float = 1e-3
    clf_iters: int = 2000

    def replace(self, **updates: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: _coerce(self, k, v) for k, v in updates.items()})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key, val in d.items():
            if isinstance(val, tuple):
                d[key] = list(val)
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(cfg: ExperimentConfig, key: str, value: Any) -> Any:
    if key not in _FIELDS:
        valid = ", ".join(sorted(_FIELDS))
        raise ValueError(f"unknown config key {key!r}; valid keys: {valid}")
    current = getattr(cfg, key)
    if value is None:
        return None
    if current is None:  # optional path fields
        return str(value)
    if isinstance(current, bool):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, tuple):
        out = tuple(value) if isinstance(value, (list, tuple)) else tuple(json.loads(f"[{value}]"))
        if key == "split_ratios" and len(out) != 3:
            raise ValueError(f"split_ratios needs exactly 3 values, got {out!r}")
        return out
    return str(value)


def parse_config_file(path: Path | str) -> dict[str, Any]:
    """Read a plain key = value file into a raw dict (values JSON-parsed)."""
    out: dict[str, Any] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            try:
                out[key] = json.loads(val)
            except json.JSONDecodeError:
                if "," in val:
                    try:
                        out[key] = json.loads(f"[{val}]")
                        continue
                    except json.JSONDecodeError:
                        pass
                out[key] = val
    return out


def load_config(
    config_file: Path | str | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> ExperimentConfig:
    """Layer defaults, the config file, the environment, and explicit overrides."""
    cfg = ExperimentConfig()
    if config_file is not None:
        cfg = cfg.replace(**parse_config_file(config_file))
    env = os.environ if env is None else env
    if SEED_ENV_VAR in env:
        cfg = cfg.replace(seed=int(env[SEED_ENV_VAR]))
    if overrides:
        cfg = cfg.replace(**{k: v for k, v in overrides.items() if v is not None})
    return cfg
