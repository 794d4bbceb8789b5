"""Client-side protocol tests against a minimal in-test loopback server.

The handler below implements the wire contract directly on the stdlib
HTTP server (independent of any real serving stack) and wraps an analytic
GMM prior, so remote evaluations can be checked against local ones.
"""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from scorepnp import (
    AdaptedDenoiser, GmmPrior, ProtocolError, RemoteScoreClient,
    TransportError, decode_tensor, emulate_vp_network, encode_tensor,
    make_remote_denoiser, remote_score, schedule_to_dict,
    vp_schedule_for_sigmas,
)
from conftest import random_gmm

PROTO = "1"


def make_loopback_server(gmm, schedule, value_domain=(0.0, 1.0), proto=PROTO):
    score_fn = emulate_vp_network(gmm, schedule)
    info = {
        "proto": proto,
        "convention": "vp",
        "T": schedule.T,
        "schedule": schedule_to_dict(schedule),
        "layout": "NCHW-float32-LE",
        "value_domain": list(value_domain),
        "output_kind": "score",
        "t_rounding": "linear-sigma-interpolation",
    }

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _reply(self, code, body, ctype="application/json"):
            self.send_response(code)
            self.send_header(PROTO_HEADER := "X-SPNP-Proto", proto)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/info":
                self._reply(200, json.dumps(info).encode())
            else:
                self._reply(404, b'{"error": "not found"}')

        def do_POST(self):
            if self.path != "/score":
                self._reply(404, b'{"error": "not found"}')
                return
            n = int(self.headers["Content-Length"])
            header, arr = decode_tensor(self.rfile.read(n))
            if arr.ndim != 4:
                self._reply(400, json.dumps(
                    {"error": "bad shape", "field": "shape"}).encode())
                return
            t = float(header["t"])
            out = np.empty_like(arr, dtype=np.float32)
            for i in range(arr.shape[0]):
                hwc = arr[i].transpose(1, 2, 0).astype(np.float64)
                flat = hwc.reshape(-1, gmm.dim)
                s = score_fn(flat, t)
                out[i] = s.reshape(hwc.shape).transpose(2, 0, 1).astype(np.float32)
            body = encode_tensor({"request_id": header.get("request_id")}, out)
            self._reply(200, body, ctype="application/octet-stream")

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://127.0.0.1:{server.server_address[1]}"


@pytest.fixture
def loopback(rng):
    gmm = random_gmm(rng, d=1, k=2, spread=0.4)
    sched = vp_schedule_for_sigmas(np.geomspace(0.05, 2.0, 10))
    server, url = make_loopback_server(gmm, sched)
    yield gmm, sched, url
    server.shutdown()


class TestCodec:
    def test_round_trip_bit_exact(self, rng):
        arr = rng.standard_normal((2, 3, 4, 5)).astype(np.float32)
        header, back = decode_tensor(encode_tensor({"t": 3.0}, arr))
        assert header["t"] == 3.0
        assert back.dtype == np.float32
        assert np.array_equal(back, arr)
        assert back.tobytes() == arr.tobytes()

    def test_body_length_validated(self):
        raw = json.dumps({"shape": [1, 1, 2, 2]}).encode() + b"\n" + b"\x00" * 7
        with pytest.raises(ProtocolError):
            decode_tensor(raw)


class TestClient:
    def test_info_round_trip(self, loopback):
        _, sched, url = loopback
        client = RemoteScoreClient(url)
        info = client.info()
        assert info["convention"] == "vp"
        assert info["T"] == sched.T
        # identical across repeated calls
        assert client.info(refresh=True) == info

    def test_remote_equals_local_to_float32(self, rng, loopback):
        gmm, sched, url = loopback
        client = RemoteScoreClient(url)
        for t in (1.0, 4.5, 10.0):
            x = rng.standard_normal((1, 1, 8, 8)).astype(np.float32)
            got = remote_score(client, x, t)
            flat = x[0].transpose(1, 2, 0).reshape(-1, 1).astype(np.float64)
            want = emulate_vp_network(gmm, sched)(flat, t)
            want = want.reshape(8, 8, 1).transpose(2, 0, 1)[None]
            scale = max(1.0, float(np.max(np.abs(want))))
            assert np.max(np.abs(got.astype(np.float64) - want)) < 1e-6 * scale

    def test_connection_failure_is_transport_error(self):
        client = RemoteScoreClient("http://127.0.0.1:9", timeout=0.3)
        with pytest.raises(TransportError):
            client.info()

    def test_version_mismatch_is_protocol_error(self, rng):
        gmm = random_gmm(rng, d=1, k=1)
        sched = vp_schedule_for_sigmas(np.geomspace(0.1, 1.0, 4))
        server, url = make_loopback_server(gmm, sched, proto="0-experimental")
        try:
            with pytest.raises(ProtocolError):
                RemoteScoreClient(url).info()
        finally:
            server.shutdown()

    def test_bad_shape_is_protocol_error(self, loopback):
        _, _, url = loopback
        client = RemoteScoreClient(url)
        client.info()
        import requests

        body = encode_tensor({"t": 1.0, "request_id": "x"},
                             np.zeros((2, 2), dtype=np.float32))
        resp = requests.post(url + "/score", data=body)
        assert resp.status_code == 400
        assert "shape" in resp.json().get("field", "")


class TestRemoteDenoiser:
    def test_adapted_remote_denoiser_matches_local(self, rng, loopback):
        from scorepnp import PatchGmmImagePrior

        gmm, sched, url = loopback
        den_remote = make_remote_denoiser(RemoteScoreClient(url))
        image_prior = PatchGmmImagePrior(gmm, patch=1, channels=1)
        den_local = AdaptedDenoiser(emulate_vp_network(image_prior, sched),
                                    strict_range=False)
        x = rng.random((6, 6, 1))
        for sigma in (0.1, 0.7):
            a = den_remote.denoise(x, sigma)
            b = den_local.denoise(x, sigma)
            assert np.max(np.abs(a - b)) < 1e-5  # float32 transport

    def test_domain_rescale_wrapper(self, rng):
        # a [-1, 1] model wraps to [0, 1] exactly via the affine identity
        gmm = GmmPrior([1.0], np.array([[0.0]]), np.array([[[0.5**2]]]))
        sched = vp_schedule_for_sigmas(np.geomspace(0.05, 2.0, 10))
        server, url = make_loopback_server(gmm, sched, value_domain=(-1.0, 1.0))
        try:
            den = make_remote_denoiser(RemoteScoreClient(url))
            lo, hi = den.sigma_range
            assert lo == pytest.approx(0.025) and hi == pytest.approx(1.0)
            x = rng.random((4, 4, 1))
            sigma_v = 0.2
            got = den.denoise(x, sigma_v)
            # oracle: exact posterior mean in the trained domain at the
            # matched noise level (request maps to sigma_u = 2*sigma_v)
            sigma_u = den.inner.match(2 * sigma_v).sigma_achieved
            u = 2 * x - 1
            want_u = gmm.mmse_denoise(u.reshape(-1, 1), sigma_u).reshape(u.shape)
            want = (want_u + 1) / 2
            assert np.max(np.abs(got - want)) < 1e-5
        finally:
            server.shutdown()
