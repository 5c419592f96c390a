"""Diffusion schedule tables and the guidance-scale schedule.

All per-step arrays have length ``T + 1`` and are indexed by the step ``t``
directly; index 0 is the clean signal (beta 0, alpha_bar 1, g 0).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiffusionSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    tilde_beta: np.ndarray
    g: np.ndarray

    @classmethod
    def from_betas(cls, betas) -> "DiffusionSchedule":
        b = np.asarray(betas, dtype=np.float64).ravel()
        if b.size < 1:
            raise ValueError("schedule needs at least one step")
        if not np.all(np.isfinite(b)) or np.any(b <= 0.0) or np.any(b >= 1.0):
            raise ValueError("every beta must lie strictly inside (0, 1)")
        T = b.size
        beta = np.concatenate([[0.0], b])
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        tilde_beta = np.zeros(T + 1)
        tilde_beta[1] = beta[1]
        tilde_beta[2:] = (1.0 - alpha_bar[1:-1]) / (1.0 - alpha_bar[2:]) * beta[2:]
        g = np.sqrt((1.0 - alpha_bar) / alpha_bar)
        for arr in (beta, alpha, alpha_bar, tilde_beta, g):
            arr.setflags(write=False)
        return cls(T, beta, alpha, alpha_bar, tilde_beta, g)

    @property
    def beta_start(self) -> float:
        return float(self.beta[1])

    @property
    def beta_end(self) -> float:
        return float(self.beta[self.T])

    def check_step(self, t: int) -> int:
        if not 1 <= int(t) <= self.T:
            raise ValueError(f"step {t} outside 1..{self.T}")
        return int(t)

    def fingerprint(self) -> tuple[int, float, float, str]:
        """(T, beta_start, beta_end, sha256 of the alpha_bar table)."""
        digest = hashlib.sha256(np.ascontiguousarray(self.alpha_bar, dtype="<f8").tobytes()).hexdigest()
        return (self.T, self.beta_start, self.beta_end, digest)


def make_linear_beta(T: int = 200, beta_start: float = 1e-4, beta_end: float = 0.05) -> DiffusionSchedule:
    """Linearly spaced betas from ``beta_start`` to ``beta_end`` inclusive."""
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return DiffusionSchedule.from_betas(np.linspace(beta_start, beta_end, int(T)))


@dataclass(frozen=True)
class GuidanceSchedule:
    lambda_max: float
    gamma: float
    s: np.ndarray
    inverted: bool = False
    literal_sign: bool = False


def guidance_scale(sched: DiffusionSchedule, lambda_max: float, gamma: float,
                   inverted: bool = False, literal_sign: bool = False) -> GuidanceSchedule:
    """Per-step guidance scale ``lambda_max * (sqrt(1-abar_t)/sqrt(1-abar_1))**gamma``.

    This grows with ``t``.  ``inverted=True`` uses the reciprocal ratio so the
    scale instead shrinks toward the noisy end.  ``lambda_max = 0`` turns
    guidance off entirely.  ``literal_sign`` is carried along for
    :func:`noiseguide.guided.guided_mean`.
    """
    if lambda_max < 0:
        raise ValueError(f"lambda_max must be >= 0, got {lambda_max}")
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    denom = 1.0 - sched.alpha_bar[1]
    if denom <= 0.0:
        raise ValueError("alpha_bar_1 == 1 (beta_1 = 0): guidance scale is undefined")
    ratio = np.sqrt(1.0 - sched.alpha_bar) / np.sqrt(denom)
    if inverted:
        ratio[1:] = 1.0 / ratio[1:]
    s = lambda_max * ratio ** gamma
    s[0] = 0.0
    s.setflags(write=False)
    return GuidanceSchedule(float(lambda_max), float(gamma), s, bool(inverted), bool(literal_sign))
