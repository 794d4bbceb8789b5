#!/usr/bin/env python3
"""Scores over the wire: the loopback equivalence check.

Starts the score server in-process around an analytic GMM prior, talks
to it through the client, and verifies that remote evaluations match the
local closed form to float32 transport precision.  Requires the
companion package from server/ (pip install -e server/).
"""

import json
import pathlib
import threading

import numpy as np

from scorepnp import (RemoteScoreClient, emulate_vp_network, load_gmm,
                      make_remote_denoiser, vp_schedule_for_sigmas)
from scorepnp_server import make_server
from scorepnp_server.models import AnalyticGmmModel

out = pathlib.Path("demo_out")
out.mkdir(exist_ok=True)
gmm_path = out / "pixel_prior.json"
gmm_path.write_text(json.dumps({
    "weights": [0.5, 0.5], "means": [[0.25], [0.75]],
    "covariances": [[[0.0064]], [[0.0064]]]}))

sigmas = np.geomspace(0.008, 1.5, 25)
alpha_bars = 1.0 / (1.0 + sigmas**2)
betas = 1.0 - alpha_bars / np.concatenate([[1.0], alpha_bars[:-1]])
schedule = {"kind": "vp", "betas": betas.tolist()}

server = make_server(AnalyticGmmModel(gmm_path, schedule), port=0)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_address[1]}"
print(f"server up at {url}")

client = RemoteScoreClient(url)
info = client.info()
print(f"/info: convention={info['convention']} T={info['T']} "
      f"value_domain={info['value_domain']} output={info['output_kind']}")

gmm = load_gmm(gmm_path)
local = emulate_vp_network(gmm, vp_schedule_for_sigmas(sigmas))
rng = np.random.default_rng(0)
worst = 0.0
for t in (1.0, 7.3, 25.0):
    x = rng.random((1, 1, 16, 16)).astype("<f4")
    got = client.score(x, t).astype(np.float64)[0, 0]
    want = local(x[0, 0].astype(np.float64).reshape(-1, 1), t).reshape(16, 16)
    scale = max(1.0, float(np.abs(want).max()))
    worst = max(worst, float(np.abs(got - want).max()) / scale)
print(f"remote vs local score, worst scale-relative error: {worst:.2e} "
      f"(float32 transport)")

den = make_remote_denoiser(client)
x = rng.random((8, 8, 1))
m = den.match(0.1)
err = np.abs(den.denoise(x, 0.1)
             - gmm.mmse_denoise(x.reshape(-1, 1), m.sigma_achieved)
             .reshape(x.shape)).max()
print(f"full remote denoiser vs closed-form MMSE: {err:.2e}")

server.shutdown()
print("server stopped")
