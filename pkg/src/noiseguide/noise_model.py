"""Per-step autoregressive Gaussian model of the combined noise.

For every diffusion step ``t`` a small causal network reads the past of
``v_t = w - g(t) e`` and emits a conditional mean and standard deviation for
each sample.  Training maximizes the Gaussian likelihood of a noise-only
clip; at inference the same likelihood supplies the guidance gradient.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .numerics import Adam, Module, Tape, make_rng, receptive_field, weight_norm
from .numerics import tensor as T
from .schedules import DiffusionSchedule

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-4
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_SOFTPLUS_INV_1 = float(np.log(np.expm1(1.0)))


@dataclass
class CombinedNoise:
    v: np.ndarray
    t: int


def build_vt(noise_clip, t: int, sched: DiffusionSchedule, rng: np.random.Generator,
             draw_mode: str = "vector", min_length: int = 1) -> CombinedNoise:
    """``v_i = w_i - g(t) e`` with ``e`` i.i.d. per sample ("vector") or one shared draw ("scalar")."""
    t = sched.check_step(t)
    w = np.asarray(noise_clip, dtype=np.float64).ravel()
    if w.size < min_length:
        raise ValueError(f"noise clip has {w.size} samples, need at least {min_length}")
    if draw_mode == "vector":
        e = rng.standard_normal(w.size)
    elif draw_mode == "scalar":
        e = rng.standard_normal()
    else:
        raise ValueError(f"unknown draw_mode {draw_mode!r}")
    return CombinedNoise(w - sched.g[t] * e, t)


def nll_loss(v, mu, sigma):
    """Gaussian negative log-likelihood ``sum log(sqrt(2 pi) sigma) + (v - mu)^2 / (2 sigma^2)``."""
    sv = np.asarray(T.value_of(sigma))
    if np.shape(T.value_of(v)) != np.shape(T.value_of(mu)) or np.shape(T.value_of(mu)) != sv.shape:
        raise ValueError("v, mu and sigma must have equal shapes")
    if np.any(sv <= 0):
        raise ValueError("sigma must be strictly positive")
    r = T.sub(v, mu)
    quad = T.div(T.square(r), T.mul(T.square(sigma), 2.0))
    return T.tsum(T.add(T.add(T.log(sigma), HALF_LOG_2PI), quad))


def gaussian_entropy(var: float) -> float:
    """Differential entropy (nats) of N(0, var)."""
    return 0.5 * np.log(2.0 * np.pi * np.e * var)


class NoiseStepNet(Module):
    """Causal gated CNN emitting (mu_i, sigma_i) from v_0..v_{i-1}.

    Input is delayed one sample, lifted to ``channels`` by a 1x1 conv, then
    passed through weight-normalized causal dilated convs, each followed by
    a 1x1 gate conv and a tanh-sigmoid gate added back residually.  Two
    linear heads read the residual stream.
    """

    def __init__(self, channels: int = 2, kernel_size: int = 9, dilations=(1, 2, 4, 8),
                 conditioned: bool = False, seed: int = 0):
        super().__init__()
        self.channels = int(channels)
        self.kernel_size = int(kernel_size)
        self.dilations = [int(d) for d in dilations]
        self.conditioned = bool(conditioned)
        rng = np.random.default_rng(seed)
        C, K = self.channels, self.kernel_size
        self.add_param("in.w", rng.standard_normal((C, 1, 1)))
        self.add_param("in.b", np.zeros((C, 1)))
        for i, _ in enumerate(self.dilations):
            self.add_param(f"l{i}.v", rng.standard_normal((C, C, K)))
            self.add_param(f"l{i}.g", np.full(C, 0.5))
            self.add_param(f"l{i}.b", np.zeros((C, 1)))
            self.add_param(f"l{i}.gate.w", rng.standard_normal((C, C, 1)) / np.sqrt(C))
            self.add_param(f"l{i}.gate.b", np.zeros((C, 1)))
            if self.conditioned:
                self.add_param(f"l{i}.cond", np.zeros((C, 1)))
        self.add_param("mu.w", np.zeros((1, C, 1)))
        self.add_param("mu.b", np.zeros((1, 1)))
        self.add_param("sigma.w", np.zeros((1, C, 1)))
        self.add_param("sigma.b", np.full((1, 1), _SOFTPLUS_INV_1))

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.kernel_size, self.dilations)

    def config(self) -> dict:
        return {
            "channels": self.channels,
            "kernel_size": self.kernel_size,
            "dilations": list(self.dilations),
            "conditioned": self.conditioned,
        }

    def forward(self, v, scale: float = 1.0, cond: float = 0.0, tape: Tape | None = None):
        """Return (mu, sigma), each the length of ``v``."""
        p = self.bind(tape)
        n = np.shape(T.value_of(v))[-1]
        u = T.reshape(T.mul(v, 1.0 / scale), (1, 1, n))
        x = T.shift_right(u, 1)
        z = T.add(T.conv1d(x, p("in.w")), p("in.b"))
        for i, d in enumerate(self.dilations):
            kern = weight_norm(p(f"l{i}.v"), p(f"l{i}.g"))
            h = T.add(T.conv1d(z, kern, dilation=d, padding="causal"), p(f"l{i}.b"))
            if self.conditioned:
                h = T.add(h, T.mul(p(f"l{i}.cond"), cond))
            gate = T.add(T.conv1d(h, p(f"l{i}.gate.w")), p(f"l{i}.gate.b"))
            z = T.add(z, T.mul(T.tanh(h), T.sigmoid(gate)))
        mu = T.mul(T.add(T.conv1d(z, p("mu.w")), p("mu.b")), scale)
        raw = T.add(T.conv1d(z, p("sigma.w")), p("sigma.b"))
        sigma = T.add(T.mul(T.softplus(raw), scale), SIGMA_FLOOR)
        return T.reshape(mu, (n,)), T.reshape(sigma, (n,))


@dataclass
class NoiseModel:
    """Bank of per-step noise models sharing one schedule."""

    T: int
    fingerprint: tuple
    arch: dict
    nets: dict = field(default_factory=dict)
    scales: dict = field(default_factory=dict)
    shared: bool = False
    train_loss: dict = field(default_factory=dict)
    val_nll: dict = field(default_factory=dict)
    cond: dict = field(default_factory=dict)

    def net(self, t: int) -> NoiseStepNet:
        return self.nets[0] if self.shared else self.nets[t]

    def mu_sigma(self, t: int, v, tape: Tape | None = None):
        return self.net(t).forward(v, scale=self.scales[t], cond=self.cond.get(t, 0.0), tape=tape)

    def loss(self, t: int, v) -> float:
        v = np.asarray(v, dtype=np.float64)
        mu, sigma = self.mu_sigma(t, v)
        return float(nll_loss(v, mu, sigma))

    def loss_and_grad(self, t: int, v) -> tuple[float, np.ndarray]:
        """NLL of ``v`` under phi_t and its gradient w.r.t. ``v`` (through the net too)."""
        tape = Tape()
        vt = tape.watch(np.asarray(v, dtype=np.float64))
        mu, sigma = self.mu_sigma(t, vt, tape=tape)
        loss = nll_loss(vt, mu, sigma)
        tape.backward(loss)
        return float(loss.value), vt.grad


def loss_input_gradient(model: NoiseModel, t: int, v) -> np.ndarray:
    return model.loss_and_grad(t, v)[1]


def _step_features(sched: DiffusionSchedule, t: int) -> float:
    return float(np.log(sched.g[t]) / max(abs(np.log(sched.g[sched.T])), 1.0))


def _fit_step(t, w, n_train, sched, epochs, lr, seed, draw_mode, rebuild, arch, eval_every):
    """Train the model for one step; returns (state, scale, losses, (init_val, best_val))."""
    rng = make_rng(seed)
    v = build_vt(w, t, sched, rng, draw_mode).v
    scale = float(np.std(v[:n_train])) or 1.0
    net = NoiseStepNet(seed=int(rng.integers(2**31)), **arch)
    opt = Adam(net.parameters(), lr=lr)
    held = v[n_train:]

    def val_nll(vv):
        mu, sigma = net.forward(vv, scale=scale)
        return float(nll_loss(vv, mu, sigma)) / vv.size

    best = init = val_nll(held)
    best_state = net.state_dict()
    losses = []
    for epoch in range(epochs):
        if rebuild and epoch > 0:
            v = build_vt(w, t, sched, rng, draw_mode).v
            held = v[n_train:]
        train = v[:n_train]
        tape = Tape()
        mu, sigma = net.forward(train, scale=scale, tape=tape)
        loss = nll_loss(train, mu, sigma)
        if not np.isfinite(loss.value):
            log.error("step %d: non-finite training loss at epoch %d; keeping best weights", t, epoch)
            break
        opt.zero_grad()
        tape.backward(loss)
        opt.step()
        losses.append(float(loss.value) / n_train)
        if (epoch + 1) % eval_every == 0 or epoch == epochs - 1:
            cur = val_nll(held)
            if np.isfinite(cur) and cur <= best:
                best, best_state = cur, net.state_dict()
    net.load_state_dict(best_state)
    return best_state, scale, losses, (init, best)


def train_noise_model(noise_clip, sched: DiffusionSchedule, epochs: int, lr: float,
                      rng: np.random.Generator, draw_mode: str = "vector", rebuild_each_epoch: bool = False,
                      val_fraction: float = 0.2, shared: bool = False, workers: int = 1,
                      eval_every: int = 10, channels: int = 2, kernel_size: int = 9,
                      dilations=(1, 2, 4, 8)) -> NoiseModel:
    """Train phi_t for t = T..1 by maximum likelihood on a noise-only clip.

    The clip is split in time: the first ``1 - val_fraction`` trains, the rest
    validates.  Each step returns the weights with the lowest held-out NLL
    seen (the initial weights included), so validation never degrades.
    Per-step seeds are drawn up front, so results do not depend on ``workers``.
    """
    w = np.asarray(noise_clip, dtype=np.float64).ravel()
    arch = {"channels": channels, "kernel_size": kernel_size, "dilations": list(dilations)}
    rf = receptive_field(kernel_size, dilations)
    n_train = int(round(w.size * (1.0 - val_fraction)))
    if n_train < rf or w.size - n_train < 1:
        raise ValueError(
            f"noise clip of {w.size} samples too short: training part needs >= {rf} samples "
            "and the validation part must be non-empty"
        )
    steps = list(range(sched.T, 0, -1))
    seeds = {t: int(s) for t, s in zip(steps, rng.integers(0, 2**63 - 1, size=len(steps)))}
    model = NoiseModel(sched.T, sched.fingerprint(), dict(arch, conditioned=shared), shared=shared)
    if shared:
        return _train_shared(model, w, n_train, sched, epochs, lr, seeds, draw_mode, arch)

    jobs = [(t, w, n_train, sched, epochs, lr, seeds[t], draw_mode, rebuild_each_epoch, arch, eval_every)
            for t in steps]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_step_star, jobs))
    else:
        results = [_fit_step(*job) for job in jobs]
    for t, (state, scale, losses, vals) in zip(steps, results):
        net = NoiseStepNet(**arch)
        net.load_state_dict(state)
        model.nets[t] = net
        model.scales[t] = scale
        model.train_loss[t] = losses
        model.val_nll[t] = vals
    return model


def _fit_step_star(job):
    return _fit_step(*job)


def _train_shared(model, w, n_train, sched, epochs, lr, seeds, draw_mode, arch):
    """One conditioned net for all steps; each epoch visits every t."""
    steps = sorted(seeds, reverse=True)
    vs, held = {}, {}
    for t in steps:
        v = build_vt(w, t, sched, make_rng(seeds[t]), draw_mode).v
        vs[t], held[t] = v[:n_train], v[n_train:]
        model.scales[t] = float(np.std(vs[t])) or 1.0
        model.cond[t] = _step_features(sched, t)
        model.train_loss[t] = []
    net = NoiseStepNet(conditioned=True, seed=seeds[steps[0]] % 2**31, **arch)
    model.nets[0] = net
    opt = Adam(net.parameters(), lr=lr)

    def val(t):
        return model.loss(t, held[t]) / held[t].size

    init = {t: val(t) for t in steps}
    for _ in range(epochs):
        for t in steps:
            tape = Tape()
            mu, sigma = model.mu_sigma(t, vs[t], tape=tape)
            loss = nll_loss(vs[t], mu, sigma)
            opt.zero_grad()
            tape.backward(loss)
            opt.step()
            model.train_loss[t].append(float(loss.value) / n_train)
    for t in steps:
        model.val_nll[t] = (init[t], val(t))
    return model


def white_noise_model(sched: DiffusionSchedule, noise_var: float, arch: dict | None = None) -> NoiseModel:
    """Untrained bank that models ``v_t`` as i.i.d. N(0, noise_var + g(t)^2).

    This is the exact likelihood for white Gaussian noise of variance
    ``noise_var``; it serves as a reference model and as a baseline.
    """
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    arch = dict(arch or {"channels": 2, "kernel_size": 9, "dilations": [1, 2, 4, 8]})
    nm = NoiseModel(sched.T, sched.fingerprint(), dict(arch, conditioned=False))
    for t in range(1, sched.T + 1):
        sd = float(np.sqrt(noise_var + sched.g[t] ** 2))
        # sigma = scale * softplus(softplus^-1(1)) + floor
        nm.nets[t] = NoiseStepNet(seed=t, **arch)
        nm.scales[t] = sd - SIGMA_FLOOR
    return nm
