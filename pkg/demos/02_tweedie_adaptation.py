#!/usr/bin/env python3
"""The score-to-denoiser template, checked at machine precision.

A Gaussian mixture has a closed-form noise-perturbed score AND a
closed-form MMSE denoiser.  Wrapping the score as an emulated VE or VP
"network" and adapting it back into a denoiser must therefore reproduce
the closed form exactly -- this is the core identity of the library.
"""

import numpy as np

from scorepnp import (GmmPrior, VESchedule, adapt_ve, adapt_vp,
                      emulate_ve_network, emulate_vp_network,
                      vp_schedule_for_sigmas)

rng = np.random.default_rng(1)

gmm = GmmPrior(
    weights=[0.5, 0.5],
    means=[[1.0, 0.6], [-1.0, -0.6]],
    covariances=[np.diag([0.09, 0.04]), [[0.06, 0.02], [0.02, 0.05]]],
)

sigmas = np.geomspace(0.05, 2.0, 10)
ve_net = emulate_ve_network(gmm, VESchedule(sigmas))          # s(x, t), c = 1
vp_net = emulate_vp_network(gmm, vp_schedule_for_sigmas(sigmas))  # scaled input

print(f"{'sigma':>8} {'|VE - MMSE|':>12} {'|VP - MMSE|':>12} {'|VE - VP|':>12}")
x = rng.standard_normal((200, 2))
for t in (1, 3, 5, 8, 10):
    sig = float(sigmas[t - 1])
    d_ve = adapt_ve(ve_net, sig)    # x + sigma_t^2 * s(x, t)
    d_vp = adapt_vp(vp_net, sig)    # x + ((1-ab)/sqrt(ab)) * s(sqrt(ab) x, t)
    want = gmm.mmse_denoise(x, sig)
    e_ve = np.abs(d_ve(x) - want).max()
    e_vp = np.abs(d_vp(x) - want).max()
    e_cc = np.abs(d_ve(x) - d_vp(x)).max()
    print(f"{sig:8.4f} {e_ve:12.3e} {e_vp:12.3e} {e_cc:12.3e}")

print("\nboth conventions reproduce the closed-form posterior mean; the")
print("c-scaling of the template cancels exactly at matched noise levels")
