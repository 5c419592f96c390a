import numpy as np
import pytest

from noiseguide.diffusion import (
    EpsilonNet, backbone_loss, forward_step, posterior_mean, q_sample, reverse_variance,
    sample_unguided, train_backbone, unguided_step,
)
from noiseguide.numerics import make_rng
from noiseguide.schedules import make_linear_beta

SCHED = make_linear_beta(20, 1e-4, 0.1)


def test_q_sample_returns_its_noise():
    x0 = np.linspace(-1, 1, 16)
    d = q_sample(x0, 7, SCHED, make_rng(0))
    ab = SCHED.alpha_bar[7]
    np.testing.assert_allclose(d.x_t, np.sqrt(ab) * x0 + np.sqrt(1 - ab) * d.eps, atol=1e-15)


def test_q_sample_at_zero_is_identity():
    x0 = np.arange(5.0)
    np.testing.assert_array_equal(q_sample(x0, 0, SCHED, make_rng(0)).x_t, x0)
    with pytest.raises(ValueError):
        q_sample(x0, SCHED.T + 1, SCHED, make_rng(0))


def test_q_sample_moments():
    x0 = np.full(200_000, 0.7)
    t = 12
    x = q_sample(x0, t, SCHED, make_rng(1)).x_t
    ab = SCHED.alpha_bar[t]
    assert x.mean() == pytest.approx(np.sqrt(ab) * 0.7, abs=0.01)
    assert x.var() == pytest.approx(1 - ab, rel=0.02)


def test_forward_step_rejects_step_zero():
    with pytest.raises(ValueError):
        forward_step(np.zeros(3), 0, SCHED, make_rng(0))


def test_posterior_mean_identities():
    rng = np.random.default_rng(2)
    x, e = rng.standard_normal(8), rng.standard_normal(8)
    t = 5
    a = SCHED.alpha[t]
    np.testing.assert_allclose(posterior_mean(x, t, np.zeros(8), SCHED), x / np.sqrt(a), atol=1e-15)
    # linear in (x, eps): superposition holds to rounding
    lhs = posterior_mean(x, t, e, SCHED)
    rhs = posterior_mean(x, t, np.zeros(8), SCHED) + posterior_mean(np.zeros(8), t, e, SCHED)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    with pytest.raises(ValueError):
        posterior_mean(x, t, e[:4], SCHED)


def test_posterior_mean_recovers_forward_noise_direction():
    # with the true eps, the mean moves x_t back toward the clean-scaled signal
    x0 = np.ones(4)
    d = q_sample(x0, 1, SCHED, make_rng(3))
    mu = posterior_mean(d.x_t, 1, d.eps, SCHED)
    np.testing.assert_allclose(mu, x0, atol=1e-12)


def test_reverse_variance_final_step():
    assert reverse_variance(1, SCHED) == SCHED.beta[1]
    assert reverse_variance(1, SCHED, final_noise=False) == 0.0
    assert reverse_variance(3, SCHED) == SCHED.tilde_beta[3]


def test_backbone_output_shapes():
    net = EpsilonNet(layers=2, channels=4, seed=0)
    x = np.random.default_rng(0).standard_normal((3, 40))
    assert net.predict(x, np.array([1, 5, 9])).shape == (3, 40)
    assert net.predict(x[0], 4).shape == (40,)
    # zero-initialized head: fresh net predicts zero noise
    assert np.all(net.predict(x[0], 4) == 0.0)


def test_unguided_sampling_is_deterministic():
    net = EpsilonNet(layers=2, channels=4, seed=1)
    a = sample_unguided(net, SCHED, 64, make_rng(5))
    b = sample_unguided(net, SCHED, 64, make_rng(5))
    assert a.tobytes() == b.tobytes()
    c = unguided_step(a, 1, net, SCHED, make_rng(6), final_noise=False)
    np.testing.assert_allclose(c, posterior_mean(a, 1, net.predict(a, 1), SCHED), atol=0)


def test_training_rejects_bad_corpora():
    with pytest.raises(ValueError):
        train_backbone([], SCHED, 1, 1e-3, make_rng(0))
    with pytest.raises(ValueError):
        train_backbone([np.zeros(10)], SCHED, 1, 1e-3, make_rng(0), segment=64)


def test_initial_loss_is_unit_and_training_reduces_it():
    corpus = [np.sin(2 * np.pi * 0.02 * np.arange(256) + p) * 0.5 for p in np.linspace(0, 3, 8)]
    rng = make_rng(4)
    net0 = EpsilonNet(layers=2, channels=8, seed=0)
    x0 = np.stack(corpus)
    t = np.full(8, 3)
    eps = rng.standard_normal(x0.shape)
    assert float(backbone_loss(net0, x0, t, eps, SCHED)) == pytest.approx(np.mean(eps ** 2))
    _, losses = train_backbone(corpus, SCHED, 60, 3e-3, make_rng(4), batch=8, segment=128,
                               layers=2, channels=8)
    assert np.mean(losses[-10:]) < 0.8 * np.mean(losses[:5])
