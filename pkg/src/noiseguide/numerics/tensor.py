"""Reverse-mode differentiation over numpy arrays.

A :class:`Tape` records every primitive op applied to a tensor that was
created through it (``tape.watch``).  Ops whose inputs carry no tape run as
plain numpy and return ``ndarray``; the same model code therefore serves
training (taped) and inference (untaped) without a separate code path.

Arrays are channelized signals, usually shaped ``(batch, channels, time)``.
Elementwise ops broadcast numpy-style and reduce gradients back to the
operand shape.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit


class Param:
    """A named trainable array with an accumulated gradient."""

    def __init__(self, name: str, values):
        self.name = name
        self.values = np.array(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.values.shape})"


class Tensor:
    """A value recorded on a tape."""

    __slots__ = ("value", "tape", "grad", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, value: np.ndarray, tape: "Tape"):
        self.value = value
        self.tape = tape
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)


class Tape:
    """Ordered record of primitive ops, replayed backwards by :meth:`backward`."""

    def __init__(self):
        self._records: list[tuple[Tensor, tuple, tuple]] = []
        self._params: list[tuple[Tensor, Param]] = []
        self._inputs: list[Tensor] = []

    def __len__(self):
        return len(self._records)

    def watch(self, x) -> Tensor:
        """Start tracking ``x`` (an array or a :class:`Param`)."""
        if isinstance(x, Param):
            node = Tensor(x.values, self)
            self._params.append((node, x))
            return node
        if isinstance(x, Tensor):
            raise ValueError("tensor is already recorded on a tape")
        node = Tensor(np.asarray(x, dtype=np.float64), self)
        self._inputs.append(node)
        return node

    def record(self, value: np.ndarray, inputs: Sequence, vjps: Sequence[Callable]) -> Tensor:
        out = Tensor(value, self)
        self._records.append((out, tuple(inputs), tuple(vjps)))
        return out

    def backward(self, output: Tensor) -> None:
        """Propagate d(output)/d(.) to watched inputs and Params.

        Watched inputs get ``.grad`` overwritten; Param grads accumulate, so
        call ``zero_grad`` between optimizer steps.  The tape itself is not
        consumed and may be replayed.
        """
        if not isinstance(output, Tensor) or output.tape is not self:
            raise ValueError("output was not recorded on this tape")
        if output.value.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {output.value.shape}")
        leaves = {id(n) for n in self._inputs} | {id(n) for n, _ in self._params}
        grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.value)}
        for out, inputs, vjps in reversed(self._records):
            key_out = id(out)
            g = grads.get(key_out) if key_out in leaves else grads.pop(key_out, None)
            if g is None:
                continue
            for node, vjp in zip(inputs, vjps):
                if not isinstance(node, Tensor) or vjp is None:
                    continue
                contrib = vjp(g)
                key = id(node)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = contrib
        output.grad = np.ones_like(output.value)
        for node in self._inputs:
            g = grads.get(id(node))
            node.grad = np.zeros_like(node.value) if g is None else g
        for node, param in self._params:
            g = grads.get(id(node))
            if g is not None:
                param.grad = param.grad + g


def value_of(x):
    return x.value if isinstance(x, Tensor) else x


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    return None


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    va, vb = value_of(a), value_of(b)
    out = va + vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(out, (a, b), (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb)))


def sub(a, b):
    va, vb = value_of(a), value_of(b)
    out = va - vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(out, (a, b), (lambda g: _unbroadcast(g, sa), lambda g: -_unbroadcast(g, sb)))


def mul(a, b):
    va, vb = value_of(a), value_of(b)
    out = va * vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(
        out, (a, b),
        (lambda g: _unbroadcast(g * vb, sa), lambda g: _unbroadcast(g * va, sb)),
    )


def div(a, b):
    va, vb = value_of(a), value_of(b)
    out = va / vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(
        out, (a, b),
        (lambda g: _unbroadcast(g / vb, sa), lambda g: _unbroadcast(-g * out / vb, sb)),
    )


def neg(a):
    va = value_of(a)
    tape = _tape_of(a)
    if tape is None:
        return -va
    return tape.record(-va, (a,), (lambda g: -g,))


def power(a, exponent: float):
    va = value_of(a)
    out = va ** exponent
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), (lambda g: g * exponent * va ** (exponent - 1),))


def square(a):
    va = value_of(a)
    tape = _tape_of(a)
    if tape is None:
        return va * va
    return tape.record(va * va, (a,), (lambda g: 2.0 * g * va,))


def sqrt(a):
    va = value_of(a)
    out = np.sqrt(va)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), (lambda g: 0.5 * g / out,))


def exp(a):
    out = np.exp(value_of(a))
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), (lambda g: g * out,))


def log(a):
    va = value_of(a)
    tape = _tape_of(a)
    if tape is None:
        return np.log(va)
    return tape.record(np.log(va), (a,), (lambda g: g / va,))


def sin(a):
    va = value_of(a)
    tape = _tape_of(a)
    if tape is None:
        return np.sin(va)
    return tape.record(np.sin(va), (a,), (lambda g: g * np.cos(va),))


def tanh(a):
    out = np.tanh(value_of(a))
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), (lambda g: g * (1.0 - out * out),))


def sigmoid(a):
    out = expit(value_of(a))
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), (lambda g: g * out * (1.0 - out),))


def softplus(a):
    va = value_of(a)
    out = np.logaddexp(0.0, va)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), (lambda g: g * expit(va),))


def relu(a):
    va = value_of(a)
    out = np.maximum(va, 0.0)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), (lambda g: g * (va > 0),))


def tsum(a, axis=None, keepdims=False):
    va = value_of(a)
    out = np.sum(va, axis=axis, keepdims=keepdims)
    tape = _tape_of(a)
    if tape is None:
        return out
    shape = va.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return tape.record(np.asarray(out), (a,), (vjp,))


def mean(a, axis=None, keepdims=False):
    va = value_of(a)
    n = va.size if axis is None else np.prod([va.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    va = value_of(a)
    out = va.reshape(shape)
    tape = _tape_of(a)
    if tape is None:
        return out
    old = va.shape
    return tape.record(out, (a,), (lambda g: g.reshape(old),))


def getitem(a, index):
    va = value_of(a)
    out = va[index]
    tape = _tape_of(a)
    if tape is None:
        return out

    basic = all(isinstance(i, (slice, int, type(Ellipsis), type(None)))
                for i in (index if isinstance(index, tuple) else (index,)))

    def vjp(g):
        full = np.zeros_like(va)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return full

    return tape.record(out, (a,), (vjp,))


def concat(xs, axis=0):
    vals = [value_of(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    vjps = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        vjps.append(lambda g, lo=lo, hi=hi: np.take(g, np.arange(lo, hi), axis=axis))
    return tape.record(out, tuple(xs), tuple(vjps))


def shift_right(a, n: int = 1):
    """Delay along the last axis by ``n`` samples, filling with zeros."""
    va = value_of(a)
    out = np.zeros_like(va)
    if n < va.shape[-1]:
        out[..., n:] = va[..., : va.shape[-1] - n]
    tape = _tape_of(a)
    if tape is None:
        return out

    def vjp(g):
        back = np.zeros_like(g)
        if n < g.shape[-1]:
            back[..., : g.shape[-1] - n] = g[..., n:]
        return back

    return tape.record(out, (a,), (vjp,))


def conv1d(x, w, dilation: int = 1, padding: str = "causal"):
    """Dilated 1-D convolution of ``x`` (B, Cin, N) with ``w`` (Cout, Cin, K).

    ``padding="causal"`` left-pads by ``(K-1)*dilation`` so output ``i`` reads
    inputs ``<= i``; ``"same"`` pads symmetrically (odd ``K`` only).
    """
    vx, vw = value_of(x), value_of(w)
    if vx.ndim != 3 or vw.ndim != 3:
        raise ValueError("conv1d expects x (B, Cin, N) and w (Cout, Cin, K)")
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    B, cin, n = vx.shape
    cout, cin_w, k = vw.shape
    if cin != cin_w:
        raise ValueError(f"channel mismatch: input has {cin}, kernel expects {cin_w}")
    span = (k - 1) * dilation
    if padding == "causal":
        left = span
    elif padding == "same":
        if k % 2 == 0:
            raise ValueError("'same' padding needs an odd kernel length")
        left = span // 2
    else:
        raise ValueError(f"unknown padding {padding!r}")
    right = span - left
    if n < 1:
        raise ValueError("empty input")
    xp = np.pad(vx, ((0, 0), (0, 0), (left, right)))
    if span + 1 > xp.shape[-1]:
        raise ValueError("kernel span longer than padded input")
    cols = np.stack([xp[:, :, j * dilation : j * dilation + n] for j in range(k)], axis=2)
    cols = cols.reshape(B, cin * k, n)
    w2 = vw.reshape(cout, cin * k)
    out = np.matmul(w2, cols)
    tape = _tape_of(x, w)
    if tape is None:
        return out

    def vjp_x(g):
        dcols = np.matmul(w2.T, g).reshape(B, cin, k, n)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dxp[:, :, j * dilation : j * dilation + n] += dcols[:, :, j]
        return dxp[:, :, left : left + n]

    def vjp_w(g):
        return np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(vw.shape)

    return tape.record(out, (x, w), (vjp_x, vjp_w))


def matmul(a, b):
    """2-D matrix product."""
    va, vb = value_of(a), value_of(b)
    out = va @ vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return tape.record(out, (a, b), (lambda g: g @ vb.T, lambda g: va.T @ g))
