"""Noise schedule construction against the closed form."""

import math

import numpy as np
import pytest

from glyphfusion.errors import StepOutOfRangeError
from glyphfusion.schedule import BETA_MAX, cosine_alpha_bar, cosine_schedule, make_schedule


def closed_form_alpha_bar(t: int, T: int, s: float = 0.008) -> float:
    """Independent scalar evaluation of f(t)/f(0)."""
    def f(u: float) -> float:
        return math.cos(((u / T + s) / (1.0 + s)) * math.pi / 2.0) ** 2

    return f(t) / f(0)


@pytest.mark.parametrize("T", [4, 200, 1000])
def test_matches_closed_form_at_unclipped_steps(T):
    sched = cosine_schedule(T)
    # the closed form hits zero at t = T, so the final beta is clipped at
    # BETA_MAX; every earlier step must match the analytic curve tightly
    for t in range(1, T):
        assert sched.alpha_bar_t(t) == pytest.approx(closed_form_alpha_bar(t, T), abs=1e-10)
    assert sched.beta_t(T) == BETA_MAX


@pytest.mark.parametrize("T", [4, 200, 1000])
def test_schedule_invariants(T):
    sched = cosine_schedule(T)
    assert (np.diff(sched.alpha_bar) < 0).all()
    assert (sched.beta > 0).all() and (sched.beta <= BETA_MAX).all()
    assert ((sched.alpha_bar > 0) & (sched.alpha_bar < 1)).all()
    np.testing.assert_allclose(sched.alpha, 1.0 - sched.beta, rtol=0, atol=0)
    # running product identity to 1e-12
    recon = np.cumprod(sched.alpha)
    np.testing.assert_allclose(sched.alpha_bar, recon, rtol=0, atol=1e-12)
    consec = sched.alpha_bar[1:] / (sched.alpha_bar[:-1] * sched.alpha[1:])
    np.testing.assert_allclose(consec, 1.0, rtol=0, atol=1e-12)


def test_t4_hand_computed_table():
    sched = cosine_schedule(4)
    expected = [closed_form_alpha_bar(t, 4) for t in (1, 2, 3)]
    np.testing.assert_allclose(sched.alpha_bar[:3], expected, atol=1e-12)
    # t=4: clipped beta, so alpha_bar follows the product, not the closed form
    assert sched.alpha_bar_t(4) == pytest.approx(sched.alpha_bar_t(3) * (1 - BETA_MAX), rel=1e-12)


def test_endpoint_behaviour_T1000():
    sched = cosine_schedule(1000)
    assert sched.alpha_bar_t(1000) < 0.01
    assert sched.alpha_bar_t(1) > 0.99


def test_vectorized_closed_form_agrees_with_scalar():
    T = 200
    bar = cosine_alpha_bar(np.arange(0, T + 1), T)
    for t in (0, 1, 57, 199, 200):
        assert bar[t] == pytest.approx(closed_form_alpha_bar(t, T), abs=1e-12)


def test_invalid_T_rejected():
    for bad in (1, 0, -3, 2.5, "ten"):
        with pytest.raises(ValueError):
            cosine_schedule(bad)


def test_step_bounds_checked():
    sched = cosine_schedule(10)
    with pytest.raises(StepOutOfRangeError):
        sched.beta_t(0)
    with pytest.raises(StepOutOfRangeError):
        sched.alpha_bar_t(11)


def test_make_schedule_dispatch():
    assert make_schedule("cosine", 16).T == 16
    with pytest.raises(ValueError):
        make_schedule("linear", 16)
