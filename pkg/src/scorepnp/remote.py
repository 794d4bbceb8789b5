"""Client side of the remote score protocol.

Wire format (version 1, shared verbatim with any conforming server):

* ``GET /info`` → JSON object with the fields every client needs:
  ``proto`` ("1"), ``convention`` ("ve"|"vp"), ``T``, ``schedule``
  ({"kind": ..., "betas"/"sigmas": [...]}), ``layout``
  ("NCHW-float32-LE"), ``value_domain`` ([0,1] or [-1,1]),
  ``output_kind`` ("score"; servers convert ε-predictions themselves),
  and ``t_rounding`` (how the server maps real-valued t to its
  embedding).
* ``POST /score`` — request body is one JSON header line
  ``{"shape": [n,c,h,w], "t": <real>, "request_id": "<id>"}`` followed by
  a single ``\\n`` and the raw little-endian float32 tensor in C order.
  The response body has the same layout (header echoes the request_id).
* Every request and response carries the header ``X-SPNP-Proto: 1``;
  a mismatch is a hard protocol error, never a silent fallback.

Transport runs in float32 (matching pretrained-model arithmetic); local
callers convert from/to float64 at the boundary.
"""

from __future__ import annotations

import json
import uuid

import numpy as np

from .adaptation import AdaptedDenoiser
from .errors import DimensionError, ProtocolError, TransportError
from .priors import ScoreFunction
from .schedules import schedule_from_dict

PROTO_VERSION = "1"
PROTO_HEADER = "X-SPNP-Proto"
TENSOR_LAYOUT = "NCHW-float32-LE"


# ---------------------------------------------------------------------------
# Tensor codec
# ---------------------------------------------------------------------------


def encode_tensor(header: dict, arr: np.ndarray) -> bytes:
    """JSON header line + newline + raw float32 LE bytes (C order)."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = dict(header)
    header["shape"] = list(arr.shape)
    return json.dumps(header).encode("ascii") + b"\n" + arr.tobytes()


def decode_tensor(raw: bytes) -> tuple[dict, np.ndarray]:
    nl = raw.find(b"\n")
    if nl < 0:
        raise ProtocolError("tensor message has no header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed tensor header: {exc}") from exc
    shape = tuple(int(v) for v in header.get("shape", ()))
    n_expected = int(np.prod(shape)) if shape else 0
    body = raw[nl + 1 :]
    if len(body) != 4 * n_expected:
        raise ProtocolError(
            f"tensor body has {len(body)} bytes, expected {4 * n_expected} "
            f"for shape {shape}"
        )
    arr = np.frombuffer(body, dtype="<f4").reshape(shape)
    return header, arr


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------


class RemoteScoreClient:
    """HTTP client for a score server; one session per client instance."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        import requests

        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()
        self._info: dict | None = None

    def _check_proto(self, resp) -> None:
        got = resp.headers.get(PROTO_HEADER)
        if got != PROTO_VERSION:
            raise ProtocolError(
                f"server speaks protocol {got!r}, client expects {PROTO_VERSION!r}"
            )

    def info(self, refresh: bool = False) -> dict:
        if self._info is not None and not refresh:
            return self._info
        import requests

        try:
            resp = self._session.get(self.base_url + "/info",
                                     headers={PROTO_HEADER: PROTO_VERSION},
                                     timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"cannot reach score server: {exc}") from exc
        self._check_proto(resp)
        if resp.status_code != 200:
            raise ProtocolError(f"/info returned HTTP {resp.status_code}: {resp.text}")
        info = resp.json()
        if info.get("proto") != PROTO_VERSION:
            raise ProtocolError(f"/info reports protocol {info.get('proto')!r}")
        self._info = info
        return info

    def score(self, x: np.ndarray, t: float, request_id: str | None = None) -> np.ndarray:
        """Evaluate the served score at (x, t); x is (n, c, h, w)."""
        import requests

        x = np.asarray(x)
        if x.ndim != 4:
            raise DimensionError(f"expected NCHW tensor, got shape {x.shape}")
        rid = request_id or uuid.uuid4().hex
        body = encode_tensor({"t": float(t), "request_id": rid}, x)
        try:
            resp = self._session.post(
                self.base_url + "/score",
                data=body,
                headers={PROTO_HEADER: PROTO_VERSION,
                         "Content-Type": "application/octet-stream"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"score request failed: {exc}") from exc
        self._check_proto(resp)
        if resp.status_code != 200:
            try:
                detail = resp.json()
            except Exception:
                detail = resp.text
            raise ProtocolError(f"/score returned HTTP {resp.status_code}: {detail}")
        header, out = decode_tensor(resp.content)
        if header.get("request_id") != rid:
            raise ProtocolError(
                f"response id {header.get('request_id')!r} does not match request {rid!r}"
            )
        if out.shape != x.shape:
            raise ProtocolError(f"response shape {out.shape} != request shape {x.shape}")
        return out


def remote_score(client_config, x: np.ndarray, t: float) -> np.ndarray:
    """One-shot evaluation; `client_config` is a URL or a RemoteScoreClient."""
    client = (client_config if isinstance(client_config, RemoteScoreClient)
              else RemoteScoreClient(str(client_config)))
    return client.score(x, t)


# ---------------------------------------------------------------------------
# ScoreFunction and denoiser wrappers
# ---------------------------------------------------------------------------


def remote_score_function(client: RemoteScoreClient) -> ScoreFunction:
    """Wrap a remote model as a ScoreFunction over (H, W, C) float64 images.

    Convention and schedule come from /info.  Images are transposed to
    NCHW float32 for transport and back on return.
    """
    info = client.info()
    schedule = schedule_from_dict(info["schedule"])
    convention = info["convention"]

    def evaluator(x, t):
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        nchw = arr.transpose(2, 0, 1)[None, :, :, :].astype("<f4")
        out = client.score(nchw, t)
        return out[0].transpose(1, 2, 0).astype(np.float64).reshape(np.shape(x))

    return ScoreFunction(convention, evaluator, schedule,
                         input_domain=tuple(info.get("value_domain", (0.0, 1.0))),
                         description=f"remote model at {client.base_url}")


class DomainRescaledDenoiser:
    """Adapt a denoiser trained on [-1, 1] images to [0, 1] solver state.

    With u = 2v − 1 the posterior mean transforms exactly:
    D_v(v, σ_v) = (D_u(2v − 1, 2σ_v) + 1)/2 — note the factor 2 on the
    effective noise level.  This affine rescale (and its σ effect) is the
    client's duty; servers never rescale.
    """

    def __init__(self, inner: AdaptedDenoiser, domain: tuple[float, float]):
        lo, hi = float(domain[0]), float(domain[1])
        self.inner = inner
        self.scale = hi - lo  # maps [0,1] onto the trained domain
        self.offset = lo

    @property
    def score(self) -> ScoreFunction:
        return self.inner.score

    @property
    def sigma_range(self) -> tuple[float, float]:
        lo, hi = self.inner.sigma_range
        return (lo / self.scale, hi / self.scale)

    def at(self, sigma: float):
        fn = self.inner.at(sigma * self.scale)

        def denoiser(x):
            u = self.scale * np.asarray(x, dtype=np.float64) + self.offset
            return (fn(u) - self.offset) / self.scale

        return denoiser

    def denoise(self, x, sigma):
        return self.at(sigma)(x)

    __call__ = denoise


def make_remote_denoiser(client: RemoteScoreClient, strict_range: bool = False,
                         T_prime: int | None = None):
    """AdaptedDenoiser over the served model, with any value-domain rescale."""
    score = remote_score_function(client)
    denoiser = AdaptedDenoiser(score, strict_range=strict_range, T_prime=T_prime)
    lo, hi = score.input_domain
    if (lo, hi) == (0.0, 1.0):
        return denoiser
    return DomainRescaledDenoiser(denoiser, (lo, hi))
