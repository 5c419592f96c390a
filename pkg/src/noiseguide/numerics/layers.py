"""Convolution building blocks shared by the backbone and the noise model."""

from __future__ import annotations

import numpy as np

from . import tensor as T


def as_channels(x) -> np.ndarray:
    """View a signal as (batch, channels, time); a 1-D signal becomes (1, 1, N)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, None, :]
    if arr.ndim == 2:
        return arr[None, :, :]
    if arr.ndim == 3:
        return arr
    raise ValueError(f"expected 1-D, 2-D or 3-D signal, got shape {arr.shape}")


def causal_dilated_conv(x, kernel, dilation: int = 1, shift: bool = True):
    """Causal dilated convolution on a 1-D or channelized signal.

    ``kernel`` is (K,) for a single channel or (Cout, Cin, K).  With
    ``shift=True`` the input is delayed by one sample first, so output ``i``
    depends on ``x[0..i-1]`` only and output 0 sees no context at all.
    Returns one row per output channel, shape (Cout, N).
    """
    vx = np.asarray(T.value_of(x))
    if vx.ndim == 0 or vx.shape[-1] < 1:
        raise ValueError("input must hold at least one sample")
    k = np.asarray(T.value_of(kernel))
    if k.ndim == 1:
        k = k[None, None, :]
    if k.ndim != 3:
        raise ValueError(f"kernel must be (K,) or (Cout, Cin, K), got {k.shape}")
    if k.shape[-1] < 1:
        raise ValueError("empty kernel")
    xs = as_channels(vx)
    if shift:
        xs = T.shift_right(xs, 1)
    out = T.conv1d(xs, k, dilation=dilation, padding="causal")
    return out[0]


def gated_activation(h, g):
    """WaveNet gate ``tanh(h) * sigmoid(g)``."""
    if np.shape(T.value_of(h)) != np.shape(T.value_of(g)):
        raise ValueError(
            f"gate inputs differ in shape: {np.shape(T.value_of(h))} vs {np.shape(T.value_of(g))}"
        )
    return T.mul(T.tanh(h), T.sigmoid(g))


def weight_norm(direction, magnitude):
    """Kernel ``magnitude * direction / ||direction||``, norm taken per output channel.

    ``direction`` is (Cout, Cin, K); ``magnitude`` is (Cout,).
    """
    norm = T.sqrt(T.tsum(T.square(direction), axis=(1, 2), keepdims=True))
    n = np.shape(T.value_of(magnitude))[0]
    return T.mul(T.div(direction, norm), T.reshape(magnitude, (n, 1, 1)))


def receptive_field(kernel_size: int, dilations) -> int:
    """Number of input samples seen by one output of a stacked dilated conv."""
    return 1 + (kernel_size - 1) * int(sum(dilations))
