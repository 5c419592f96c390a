"""Forward diffusion, noise-prediction reverse steps and the toy backbone."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .numerics import Adam, Module, Tape, clip_grad_norm
from .numerics import tensor as T
from .schedules import DiffusionSchedule

log = logging.getLogger(__name__)


@dataclass
class ForwardDraw:
    x_t: np.ndarray
    eps: np.ndarray
    t: int


def q_sample(x0, t: int, sched: DiffusionSchedule, rng: np.random.Generator) -> ForwardDraw:
    """Draw ``x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`` and return ``eps`` too.

    ``t = 0`` is accepted and returns ``x0`` unchanged (plus the unused draw).
    """
    if not 0 <= t <= sched.T:
        raise ValueError(f"step {t} outside 0..{sched.T}")
    x0 = np.asarray(x0, dtype=np.float64)
    eps = rng.standard_normal(x0.shape)
    ab = sched.alpha_bar[t]
    return ForwardDraw(np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps, eps, t)


def forward_step(x_prev, t: int, sched: DiffusionSchedule, rng: np.random.Generator) -> np.ndarray:
    """One Markov step ``x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) e_t``.

    The noise amplitude is ``sqrt(beta_t)`` (not ``beta_t``) so that chaining
    steps reproduces the closed-form marginal of :func:`q_sample`.
    """
    t = sched.check_step(t)
    x_prev = np.asarray(x_prev, dtype=np.float64)
    e = rng.standard_normal(x_prev.shape)
    return np.sqrt(1.0 - sched.beta[t]) * x_prev + np.sqrt(sched.beta[t]) * e


def posterior_mean(x_t, t: int, eps_hat, sched: DiffusionSchedule) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x_t.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch {x_t.shape} vs {eps_hat.shape}")
    a, ab = sched.alpha[t], sched.alpha_bar[t]
    return (x_t - ((1.0 - a) / np.sqrt(1.0 - ab)) * eps_hat) / np.sqrt(a)


def reverse_variance(t: int, sched: DiffusionSchedule, final_noise: bool = True) -> float:
    """sigma_t^2 = tilde_beta_t; zero at t = 1 when ``final_noise`` is off."""
    if t == 1 and not final_noise:
        return 0.0
    return float(sched.tilde_beta[t])


def step_embedding(t, dim: int = 32) -> np.ndarray:
    """Sinusoidal features of the step index, shape (len(t), dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = 10.0 ** (np.arange(half) * 4.0 / max(half - 1, 1))
    ang = t[:, None] / freqs[None, :] * 10.0
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class EpsilonNet(Module):
    """Non-causal dilated gated conv stack predicting the injected noise.

    Every residual layer receives a projection of the step embedding,
    a dilated conv produces filter and gate halves, and a 1x1 conv splits
    the gated output into residual and skip paths.
    """

    def __init__(self, layers: int = 6, channels: int = 16, kernel_size: int = 3,
                 dilations=None, emb_dim: int = 32, seed: int = 0):
        super().__init__()
        if dilations is None:
            dilations = [2 ** (i % 6) for i in range(layers)]
        if len(dilations) != layers:
            raise ValueError("need one dilation per layer")
        self.layers = int(layers)
        self.channels = int(channels)
        self.kernel_size = int(kernel_size)
        self.dilations = [int(d) for d in dilations]
        self.emb_dim = int(emb_dim)
        rng = np.random.default_rng(seed)
        C, K, E = self.channels, self.kernel_size, self.emb_dim

        def he(shape, fan_in):
            return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

        self.add_param("in.w", he((C, 1, 1), 1))
        self.add_param("in.b", np.zeros((C, 1)))
        self.add_param("emb.w", he((E, E), E) * 0.5)
        self.add_param("emb.b", np.zeros(E))
        for i in range(layers):
            self.add_param(f"l{i}.emb", rng.standard_normal((E, C)) / np.sqrt(E))
            self.add_param(f"l{i}.conv.w", he((2 * C, C, K), C * K) * 0.5)
            self.add_param(f"l{i}.conv.b", np.zeros((2 * C, 1)))
            self.add_param(f"l{i}.out.w", he((2 * C, C, 1), C) * 0.5)
            self.add_param(f"l{i}.out.b", np.zeros((2 * C, 1)))
        self.add_param("skip.w", he((C, C, 1), C))
        self.add_param("skip.b", np.zeros((C, 1)))
        self.add_param("final.w", np.zeros((1, C, 1)))
        self.add_param("final.b", np.zeros((1, 1)))

    def config(self) -> dict:
        return {
            "layers": self.layers,
            "channels": self.channels,
            "kernel_size": self.kernel_size,
            "dilations": list(self.dilations),
            "emb_dim": self.emb_dim,
        }

    def forward(self, x_t, t, tape: Tape | None = None):
        """eps_hat for a batch ``x_t`` (B, N) at steps ``t`` (B,) or scalar."""
        p = self.bind(tape)
        x = T.value_of(x_t) if tape is None else x_t
        vx = np.asarray(T.value_of(x))
        squeeze = vx.ndim == 1
        if squeeze:
            x = T.reshape(x, (1, 1, vx.shape[0]))
        else:
            x = T.reshape(x, (vx.shape[0], 1, vx.shape[-1]))
        B = T.value_of(x).shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))
        C = self.channels

        emb = step_embedding(t, self.emb_dim)
        emb = T.tanh(T.add(T.matmul(emb, p("emb.w")), p("emb.b")))

        z = T.relu(T.add(T.conv1d(x, p("in.w")), p("in.b")))
        skip = None
        for i, d in enumerate(self.dilations):
            cond = T.reshape(T.matmul(emb, p(f"l{i}.emb")), (B, C, 1))
            h = T.add(z, cond)
            h = T.add(T.conv1d(h, p(f"l{i}.conv.w"), dilation=d, padding="same"), p(f"l{i}.conv.b"))
            a = T.mul(T.tanh(h[:, :C]), T.sigmoid(h[:, C:]))
            o = T.add(T.conv1d(a, p(f"l{i}.out.w")), p(f"l{i}.out.b"))
            z = T.mul(T.add(z, o[:, :C]), np.sqrt(0.5))
            skip = o[:, C:] if skip is None else T.add(skip, o[:, C:])
        skip = T.mul(skip, 1.0 / np.sqrt(len(self.dilations)))
        hdn = T.relu(T.add(T.conv1d(skip, p("skip.w")), p("skip.b")))
        out = T.add(T.conv1d(hdn, p("final.w")), p("final.b"))
        n = T.value_of(out).shape[-1]
        return T.reshape(out, (n,) if squeeze else (B, n))

    def predict(self, x_t, t) -> np.ndarray:
        return np.asarray(self.forward(np.asarray(x_t, dtype=np.float64), t))


def unguided_step(x_t, t: int, net: EpsilonNet, sched: DiffusionSchedule,
                  rng: np.random.Generator, final_noise: bool = True) -> np.ndarray:
    """Ancestral draw ``x_{t-1} = mu(x_t, t) + sigma_t z``."""
    t = sched.check_step(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    mu = posterior_mean(x_t, t, net.predict(x_t, t), sched)
    z = rng.standard_normal(x_t.shape)
    return mu + np.sqrt(reverse_variance(t, sched, final_noise)) * z


def sample_unguided(net: EpsilonNet, sched: DiffusionSchedule, n: int,
                    rng: np.random.Generator, final_noise: bool = True) -> np.ndarray:
    """Full T-step generation starting from ``x_T ~ N(0, I)``."""
    x = rng.standard_normal(n)
    for t in range(sched.T, 0, -1):
        x = unguided_step(x, t, net, sched, rng, final_noise)
    return x


def backbone_loss(net: EpsilonNet, x0_batch, t, eps, sched: DiffusionSchedule, tape: Tape | None = None):
    """Mean squared noise-prediction error for given draws (``t`` per row)."""
    x0_batch = np.asarray(x0_batch, dtype=np.float64)
    ab = sched.alpha_bar[np.asarray(t)][:, None]
    x_t = np.sqrt(ab) * x0_batch + np.sqrt(1.0 - ab) * eps
    pred = net.forward(x_t, t, tape=tape)
    return T.mean(T.square(T.sub(pred, eps)))


def _crop_batch(corpus, idx, segment, rng):
    out = np.empty((len(idx), segment))
    for row, j in enumerate(idx):
        sig = corpus[j]
        start = int(rng.integers(0, len(sig) - segment + 1))
        out[row] = sig[start:start + segment]
    return out


def train_backbone(corpus, sched: DiffusionSchedule, epochs: int, lr: float,
                   rng: np.random.Generator, batch: int = 16, segment: int | None = 2048,
                   net: EpsilonNet | None = None, clip: float = 1.0, **net_kwargs):
    """Fit an :class:`EpsilonNet` on clean signals with the noise-prediction loss.

    One epoch is ``ceil(len(corpus) / batch)`` Adam steps, each on ``batch``
    random crops with uniform ``t`` and fresh noise.  Returns ``(net, losses)``
    where ``losses`` holds the mean loss of every epoch.
    """
    corpus = [np.asarray(c, dtype=np.float64).ravel() for c in corpus]
    if not corpus:
        raise ValueError("empty training corpus")
    shortest = min(len(c) for c in corpus)
    if segment is None:
        segment = shortest
    if shortest < segment:
        raise ValueError(f"corpus item of {shortest} samples is shorter than segment {segment}")
    if net is None:
        net = EpsilonNet(seed=int(rng.integers(2**31)), **net_kwargs)
    opt = Adam(net.parameters(), lr=lr)
    steps = max(1, -(-len(corpus) // batch))
    losses = []
    for epoch in range(epochs):
        total = 0.0
        for _ in range(steps):
            idx = rng.integers(0, len(corpus), size=batch)
            x0 = _crop_batch(corpus, idx, segment, rng)
            t = rng.integers(1, sched.T + 1, size=batch)
            eps = rng.standard_normal(x0.shape)
            tape = Tape()
            loss = backbone_loss(net, x0, t, eps, sched, tape=tape)
            opt.zero_grad()
            tape.backward(loss)
            if clip:
                clip_grad_norm(net.parameters(), clip)
            opt.step()
            total += float(loss.value)
        losses.append(total / steps)
        if epoch % 100 == 0:
            log.debug("backbone epoch %d loss %.5f", epoch, losses[-1])
    return net, np.asarray(losses)
