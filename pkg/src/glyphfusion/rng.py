"""Deterministic random-stream derivation.

A single experiment seed fans out into named sub-streams (``"data"``,
``"init"``, ``"sampling"``, ...) so that components can be re-run
independently while staying reproducible. Derivation is hash-based and
stable across processes and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch


def _name_entropy(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def derive_seed(seed: int, name: str) -> int:
    """Derive a 63-bit integer seed for the named sub-stream."""
    ss = np.random.SeedSequence([int(seed), _name_entropy(name)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] & 0x7FFF_FFFF_FFFF_FFFF)


def np_stream(seed: int, name: str) -> np.random.Generator:
    """NumPy generator for the named sub-stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _name_entropy(name)]))


def torch_stream(seed: int, name: str) -> torch.Generator:
    """Torch generator for the named sub-stream of ``seed``."""
    gen = torch.Generator()
    gen.manual_seed(derive_seed(seed, name))
    return gen
