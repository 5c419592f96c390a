import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noiseguide.schedules import DiffusionSchedule, guidance_scale, make_linear_beta


def test_single_step_schedule():
    s = DiffusionSchedule.from_betas([0.3])
    assert s.alpha_bar[1] == pytest.approx(0.7, abs=1e-15)
    assert s.tilde_beta[1] == 0.3
    assert s.g[1] == pytest.approx(np.sqrt(0.3 / 0.7), rel=1e-15)


def test_two_half_steps():
    s = DiffusionSchedule.from_betas([0.5, 0.5])
    assert s.alpha_bar[2] == 0.25
    # (1 - 0.5) / (1 - 0.25) * 0.5
    assert s.tilde_beta[2] == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_default_schedule_ends_near_pure_noise():
    s = make_linear_beta()
    assert s.T == 200 and s.beta_start == 1e-4 and s.beta_end == 0.05
    assert s.alpha_bar[-1] < 0.01
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert np.all(np.diff(s.g) > 0)


def test_tables_are_read_only():
    s = make_linear_beta(10)
    with pytest.raises(ValueError):
        s.beta[1] = 0.5


@pytest.mark.parametrize("betas", [[0.0, 0.1], [0.1, 1.0], [0.1, np.nan], []])
def test_invalid_betas(betas):
    with pytest.raises(ValueError):
        DiffusionSchedule.from_betas(betas)


def test_linear_rejects_bad_arguments():
    with pytest.raises(ValueError):
        make_linear_beta(0)
    with pytest.raises(ValueError):
        make_linear_beta(10, 0.1, 0.01)


def test_guidance_scale_first_step_is_lambda():
    s = make_linear_beta(50, 1e-4, 0.05)
    gs = guidance_scale(s, 0.72, 0.7)
    assert gs.s[1] == pytest.approx(0.72, abs=1e-12)
    assert gs.s[0] == 0.0
    assert np.all(np.diff(gs.s[1:]) > 0)


def test_guidance_scale_second_step_high_precision():
    mpmath.mp.dps = 50
    b1, b2 = mpmath.mpf("1e-4"), mpmath.mpf("0.05")
    ab1 = 1 - b1
    ab2 = ab1 * (1 - b2)
    expected = mpmath.mpf("0.72") * (mpmath.sqrt(1 - ab2) / mpmath.sqrt(1 - ab1)) ** mpmath.mpf("0.7")
    gs = guidance_scale(make_linear_beta(2, 1e-4, 0.05), 0.72, 0.7)
    assert gs.s[2] == pytest.approx(float(expected), rel=1e-12)


def test_inverted_ratio_decreases():
    gs = guidance_scale(make_linear_beta(20), 1.0, 0.7, inverted=True)
    assert gs.s[1] == pytest.approx(1.0)
    assert np.all(np.diff(gs.s[1:]) < 0)


def test_guidance_scale_arguments():
    s = make_linear_beta(10)
    assert np.all(guidance_scale(s, 0.0, 0.7).s == 0.0)
    with pytest.raises(ValueError):
        guidance_scale(s, -0.1, 0.7)
    with pytest.raises(ValueError):
        guidance_scale(s, 0.5, 0.0)


def test_fingerprint_distinguishes_schedules():
    a = make_linear_beta(50, 1e-4, 0.05).fingerprint()
    assert a == make_linear_beta(50, 1e-4, 0.05).fingerprint()
    assert a != make_linear_beta(50, 1e-4, 0.02).fingerprint()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(1e-6, 0.5), min_size=1, max_size=60))
def test_recompute_is_bit_exact(betas):
    a, b = DiffusionSchedule.from_betas(betas), DiffusionSchedule.from_betas(list(betas))
    for name in ("alpha_bar", "tilde_beta", "g"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
