"""Wire protocol, version 1.

Implemented from the documented byte layout (this package deliberately
does not import the client library):

* Every request and response carries the header ``X-SPNP-Proto: 1``;
  a mismatch is a hard error (HTTP 409 from the server).
* ``GET /info`` returns a JSON object: proto, convention ("ve"|"vp"),
  T, schedule ({"kind", "betas"|"sigmas"}), layout ("NCHW-float32-LE"),
  value_domain, output_kind ("score" on the wire, always), t_rounding.
* ``POST /score`` bodies (both directions) are one JSON header line,
  a single newline byte, then the raw little-endian float32 tensor in C
  order.  The request header carries {"shape", "t", "request_id"}; the
  response header echoes the request_id and the shape.
"""

from __future__ import annotations

import json

import numpy as np

PROTO_VERSION = "1"
PROTO_HEADER = "X-SPNP-Proto"
TENSOR_LAYOUT = "NCHW-float32-LE"


class WireError(ValueError):
    """Malformed tensor message."""


def encode_tensor(header: dict, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = dict(header)
    header["shape"] = list(arr.shape)
    return json.dumps(header).encode("ascii") + b"\n" + arr.tobytes()


def decode_tensor(raw: bytes) -> tuple[dict, np.ndarray]:
    nl = raw.find(b"\n")
    if nl < 0:
        raise WireError("tensor message has no header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"malformed tensor header: {exc}") from exc
    shape = tuple(int(v) for v in header.get("shape", ()))
    body = raw[nl + 1 :]
    expected = 4 * int(np.prod(shape)) if shape else 0
    if len(body) != expected:
        raise WireError(
            f"tensor body has {len(body)} bytes, expected {expected} "
            f"for shape {shape}"
        )
    return header, np.frombuffer(body, dtype="<f4").reshape(shape)
