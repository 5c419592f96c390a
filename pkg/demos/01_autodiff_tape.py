# coding: utf-8

# # A tape, a loss, a gradient
#
# Everything that trains in this package runs on a small reverse-mode tape
# built on numpy.  Ops record themselves when one of their inputs is on a tape;
# otherwise they just return arrays.

import numpy as np

from noiseguide.numerics import Param, Tape, max_relative_error, numerical_gradient
from noiseguide.numerics import tensor as T

# Watch an array, build a scalar, walk the tape backwards.

tape = Tape()
x = tape.watch(np.array([3.0]))
y = T.tsum(T.square(x))
tape.backward(y)
print("d(x^2)/dx at 3:", x.grad)

# Parameters keep their gradient between passes, the way an optimizer expects.

w = Param("w", np.array([0.5, -1.0, 2.0]))
tape = Tape()
loss = T.tsum(T.tanh(T.mul(tape.watch(w), 2.0)))
tape.backward(loss)
print("tape gradient:", w.grad)

# Central differences agree to many digits.

num = numerical_gradient(lambda v: float(np.sum(np.tanh(2.0 * v))), w.values)
print("finite differences:", num)
print("max relative error:", max_relative_error(w.grad, num))

# The causal conv is the workhorse of the noise model.  A one-tap identity
# kernel turns it into a pure one-sample delay:

print(T.conv1d(np.array([[[0.3, -1.2, 2.5]]]), np.ones((1, 1, 1)), padding="causal"))
print(T.shift_right(np.array([[[0.3, -1.2, 2.5]]]), 1))
