"""In-process stub of the VLM and depth services.

Used by the wire-contract tests and handy for local dry runs::

    with StubServer(reply='{"thought": "", "action": "STOP"}') as stub:
        client = HttpVlmClient(stub.url)
        ...
        stub.requests  # every request the server saw
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable
from urllib.parse import parse_qsl, urlsplit

import numpy as np

from depthnav import array_store
from depthnav.pipeline import decode_image


@dataclass
class RecordedRequest:
    path: str
    query: dict[str, str]
    headers: dict[str, str]
    body: bytes

    def json(self):
        return json.loads(self.body)


def constant_depth(value: float = 2.0) -> Callable[[np.ndarray], np.ndarray]:
    def fn(image: np.ndarray) -> np.ndarray:
        return np.full(image.shape[:2], value, dtype="<f4")

    return fn


class StubServer:
    """Threaded HTTP server bound to an ephemeral localhost port."""

    def __init__(
        self,
        reply: str = '{"thought": "stub", "action": "STOP"}',
        usage: dict | None = None,
        depth_fn: Callable[[np.ndarray], np.ndarray] | None = None,
        status: int = 200,
    ):
        self.reply = reply
        self.usage = usage if usage is not None else {"prompt_tokens": 1234, "completion_tokens": 56}
        self.depth_fn = depth_fn or constant_depth()
        self.status = status
        self.requests: list[RecordedRequest] = []
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> StubServer:
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()

    def _handler(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status: int, body: bytes, ctype: str) -> None:
                self.send_response(status)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self):
                parts = urlsplit(self.path)
                body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                with stub._lock:
                    stub.requests.append(
                        RecordedRequest(parts.path, dict(parse_qsl(parts.query)), dict(self.headers), body)
                    )
                if stub.status != 200:
                    self._send(stub.status, b"stub failure", "text/plain")
                elif parts.path.endswith("/chat/completions"):
                    payload = {
                        "id": "stub",
                        "object": "chat.completion",
                        "choices": [
                            {"index": 0, "message": {"role": "assistant", "content": stub.reply}}
                        ],
                    }
                    if stub.usage:
                        payload["usage"] = stub.usage
                    self._send(200, json.dumps(payload).encode(), "application/json")
                elif parts.path.endswith("/depth"):
                    depth = stub.depth_fn(decode_image(body))
                    rec = array_store.ArrayRecord.from_array("depth", depth)
                    self._send(200, array_store.write_npz([rec]), "application/octet-stream")
                else:
                    self._send(404, b"not found", "text/plain")

        return Handler
