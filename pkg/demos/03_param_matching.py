#!/usr/bin/env python3
"""Mapping requested noise levels to network conditioning inputs.

A VP network is conditioned on a time index t, not on sigma.  Given a
target sigma, `param_matching` searches a refined grid of conditional
times, returns the scale c = sqrt(alpha_bar) and the real-valued
conditional time T*(t'/T'), and reports the sigma actually achieved.
"""

import numpy as np

from scorepnp import linear_beta_schedule, param_matching

# the standard linear-beta schedule: beta from 1e-4 to 0.02 over T = 1000
sched = linear_beta_schedule(1e-4, 0.02, 1000)
print(f"T = {sched.T}, sigma range [{sched.sigma_min:.4f}, {sched.sigma_max:.1f}]")

targets = [5 / 255, 49 / 255, 120 / 255, 130 / 255, 1.0, 10.0]
print(f"\n{'sigma_req':>10} {'c':>10} {'t_cond':>10} {'sigma_ach':>10} {'rel err':>9}")
for sig in targets:
    m = param_matching(sched, sig)
    rel = abs(m.sigma_achieved - sig) / sig
    print(f"{sig:10.4f} {m.c:10.6f} {m.t_cond:10.2f} "
          f"{m.sigma_achieved:10.4f} {rel:9.2e}")

print("\nmonotonicity: larger requests never match smaller times")
reqs = np.sort(np.random.default_rng(0).uniform(0.02, 5.0, 2000))
idx = [param_matching(sched, float(s)).index for s in reqs]
print(f"  checked on 2000 sorted requests: {bool(np.all(np.diff(idx) >= 0))}")
