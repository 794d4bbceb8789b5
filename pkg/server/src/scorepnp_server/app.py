"""HTTP/1.1 score server.

Endpoints (protocol header ``X-SPNP-Proto: 1`` on every exchange):

* ``GET /info`` — the served-model contract (JSON).
* ``POST /score`` — JSON header line + raw float32 LE tensor in, the
  same layout out.  Errors: 400 (shape/range, with a field-level JSON
  message), 409 (protocol version mismatch), 500 (model failure).

The model is loaded once and used read-only; requests are served
concurrently up to a configured worker count (a semaphore over the
threading server).  Handling is stateless per request: identical request
bytes produce identical response bytes for a deterministic model.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


from .wire import PROTO_HEADER, PROTO_VERSION, WireError, decode_tensor, \
    encode_tensor


def make_server(model, host: str = "127.0.0.1", port: int = 8706,
                max_workers: int = 4) -> ThreadingHTTPServer:
    info_payload = dict(model.info(), proto=PROTO_VERSION)
    info_bytes = json.dumps(info_payload).encode("ascii")
    gate = threading.Semaphore(max_workers)

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "scorepnp-server/1"

        def log_message(self, *args):
            pass

        def _reply(self, code: int, body: bytes,
                   ctype: str = "application/json") -> None:
            self.send_response(code)
            self.send_header(PROTO_HEADER, PROTO_VERSION)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _error(self, code: int, message: str, field: str | None = None) -> None:
            payload = {"error": message}
            if field:
                payload["field"] = field
            self._reply(code, json.dumps(payload).encode("ascii"))

        def do_GET(self):
            client_proto = self.headers.get(PROTO_HEADER)
            if client_proto is not None and client_proto != PROTO_VERSION:
                # absent header is allowed on /info for discovery;
                # a mismatched one is a hard error
                self._error(409, f"protocol version {client_proto!r} not "
                                 f"supported; server speaks {PROTO_VERSION!r}")
                return
            if self.path == "/info":
                self._reply(200, info_bytes)
            else:
                self._error(404, f"no such endpoint: {self.path}")

        def do_POST(self):
            if self.path != "/score":
                self._error(404, f"no such endpoint: {self.path}")
                return
            client_proto = self.headers.get(PROTO_HEADER)
            if client_proto != PROTO_VERSION:
                self._error(409, f"protocol version {client_proto!r} not "
                                 f"supported; server speaks {PROTO_VERSION!r}")
                return
            try:
                n = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(n)
                header, arr = decode_tensor(raw)
            except (WireError, ValueError) as exc:
                self._error(400, str(exc), field="body")
                return
            if arr.ndim != 4:
                self._error(400, f"tensor must be NCHW, got shape {arr.shape}",
                            field="shape")
                return
            try:
                t = float(header["t"])
            except (KeyError, TypeError, ValueError):
                self._error(400, "header field 't' missing or not a number",
                            field="t")
                return
            if not (1.0 - 1e-9 <= t <= model.T + 1e-9):
                self._error(400, f"t={t} outside [1, {model.T}]", field="t")
                return
            with gate:
                try:
                    out = model.score(arr, t)
                except Exception as exc:  # model failure -> 500, JSON body
                    self._error(500, f"model evaluation failed: {exc}")
                    return
            body = encode_tensor({"request_id": header.get("request_id")}, out)
            self._reply(200, body, ctype="application/octet-stream")

    return ThreadingHTTPServer((host, port), Handler)


def serve_forever(model, host: str = "127.0.0.1", port: int = 8706,
                  max_workers: int = 4) -> None:
    server = make_server(model, host, port, max_workers)
    print(f"serving {model.info().get('model')} on http://{host}:{port} "
          f"(proto {PROTO_VERSION})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
