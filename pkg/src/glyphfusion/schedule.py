"""Precomputed per-step diffusion constants.

The cosine schedule defines the signal-retention curve
``alpha_bar(t) = f(t) / f(0)`` with ``f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2)``
and derives per-step betas from consecutive ratios, clipped at 0.999. The
stored ``alpha_bar`` is the running product of the clipped alphas, so the
product identity holds exactly; clipping only alters the final step, where
the closed form reaches zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StepOutOfRangeError

BETA_MAX = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step constants beta_t, alpha_t, alpha_bar_t for t = 1..T.

    Arrays are float64 of length T, indexed by ``t - 1``.
    """

    kind: str
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self) -> None:
        for name in ("beta", "alpha", "alpha_bar"):
            arr = getattr(self, name)
            if arr.shape != (self.T,):
                raise ValueError(f"{name} must have shape ({self.T},), got {arr.shape}")
        if not ((self.beta > 0).all() and (self.beta <= BETA_MAX).all()):
            raise ValueError("beta values must lie in (0, 0.999]")
        if not (np.diff(self.alpha_bar) < 0).all():
            raise ValueError("alpha_bar must be strictly decreasing")
        if not ((self.alpha_bar > 0).all() and (self.alpha_bar < 1).all()):
            raise ValueError("alpha_bar values must lie in (0, 1)")

    def check_step(self, t: int) -> None:
        if not (1 <= t <= self.T):
            raise StepOutOfRangeError(f"step {t} outside 1..{self.T}")

    def beta_t(self, t: int) -> float:
        self.check_step(t)
        return float(self.beta[t - 1])

    def alpha_t(self, t: int) -> float:
        self.check_step(t)
        return float(self.alpha[t - 1])

    def alpha_bar_t(self, t: int) -> float:
        self.check_step(t)
        return float(self.alpha_bar[t - 1])


def cosine_alpha_bar(t: np.ndarray | float, T: int, s_offset: float = 0.008) -> np.ndarray:
    """Closed-form signal retention f(t)/f(0) of the cosine schedule."""
    t = np.asarray(t, dtype=np.float64)

    def f(u):
        return np.cos(((u / T + s_offset) / (1.0 + s_offset)) * (np.pi / 2.0)) ** 2

    return f(t) / f(np.float64(0.0))


def cosine_schedule(T: int, s_offset: float = 0.008) -> NoiseSchedule:
    """Build the squared-cosine noise schedule for T steps."""
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ValueError(f"T must be an integer >= 2, got {T!r}")
    bar = cosine_alpha_bar(np.arange(0, T + 1), T, s_offset)
    beta = np.clip(1.0 - bar[1:] / bar[:-1], 0.0, BETA_MAX)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule("cosine", int(T), beta, alpha, alpha_bar)


def make_schedule(kind: str, T: int) -> NoiseSchedule:
    if kind != "cosine":
        raise ValueError(f"unknown schedule kind {kind!r}")
    return cosine_schedule(T)
