# coding: utf-8

# # Schedules: what the sampler and the guidance see
#
# A linear beta schedule fixes everything else: alpha_bar, the posterior
# variance, and g(t), the extra noise level a clean signal picks up at step t
# once it is rescaled back to the observation's scale.

import numpy as np

from noiseguide.diffusion import forward_step, q_sample
from noiseguide.guided import guidance_gain
from noiseguide.numerics import make_rng
from noiseguide.schedules import guidance_scale, make_linear_beta

sched = make_linear_beta(200, 1e-4, 0.05)
print("alpha_bar at T:", sched.alpha_bar[-1])
for t in (1, 50, 100, 200):
    print(f"t={t:3d}  beta={sched.beta[t]:.5f}  tilde_beta={sched.tilde_beta[t]:.5f}  g={sched.g[t]:.3f}")

# Chaining single forward steps lands on the same distribution as one jump.

x0 = np.full(20_000, 2.0)
rng = make_rng(0)
x = x0
for t in range(1, 101):
    x = forward_step(x, t, sched, rng)
jump = q_sample(x0, 100, sched, make_rng(1)).x_t
print("chain  mean/var:", x.mean(), x.var())
print("jump   mean/var:", jump.mean(), jump.var())

# Guidance starts at lambda_max at t=1 and grows with the noise level.

gs = guidance_scale(sched, 0.72, 0.7)
print("s_t at 1, 100, 200:", gs.s[1], gs.s[100], gs.s[200])

# The feedback gain of one guided step.  Past 2 the chain overshoots the
# observation by more than it corrects, and errors grow step after step.

for T, be in ((200, 0.05), (50, 0.05), (25, 0.05), (25, 0.02)):
    s = make_linear_beta(T, 1e-4, be)
    k = guidance_gain(s, guidance_scale(s, 0.72, 0.7))
    print(f"T={T:3d} beta_end={be}: max gain {k.max():.2f}")
