# coding: utf-8

# # Learning what the noise looks like
#
# The noise model sees only a noise-only clip.  At each step t it models
# v_t = w - g(t) e as an autoregressive Gaussian: every sample's mean and
# spread come from the samples before it.  Colored noise is predictable from
# its past; white noise is not.

import numpy as np

from noiseguide.noise_model import build_vt, gaussian_entropy, nll_loss, train_noise_model
from noiseguide.numerics import make_rng
from noiseguide.schedules import make_linear_beta

rng = make_rng(3)
e = rng.standard_normal(6000)
ar = np.empty_like(e)
ar[0] = e[0]
for i in range(1, e.size):
    ar[i] = 0.9 * ar[i - 1] + e[i]

sched = make_linear_beta(4, 1e-4, 0.05)
nm = train_noise_model(ar[:4000], sched, 150, 1e-2, make_rng(4))

# Score fresh noise from the same process, per sample, in nats.

for t in range(1, sched.T + 1):
    v = build_vt(ar[4000:], t, sched, make_rng(10 + t)).v
    iid = float(nll_loss(v, np.full(v.size, v.mean()), np.full(v.size, v.std()))) / v.size
    print(f"t={t}  g={sched.g[t]:.3f}  model {nm.loss(t, v) / v.size:.3f}  best iid Gaussian {iid:.3f}")

# As g(t) grows, the white part swamps the structure and the two numbers meet.
# For reference, a unit white Gaussian has entropy:

print("entropy N(0,1):", gaussian_entropy(1.0))

# The gradient of the loss with respect to v is what steers the sampler.

v = build_vt(ar[4000:4512], 1, sched, make_rng(0)).v
loss, grad = nm.loss_and_grad(1, v)
print("loss", loss, "grad norm", np.linalg.norm(grad))
