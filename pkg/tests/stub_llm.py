"""In-process HTTP stub standing in for a hosted LLM endpoint.

The stub records every request body and replays a scripted list of
responses; entries are either (status, text) pairs, the string "drop"
(close the connection without answering) or plain text answered with 200.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class StubLLMServer:
    def __init__(self, script=None):
        self.script = list(script or [])
        self.requests: list[dict] = []
        self.lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                with stub.lock:
                    stub.requests.append(
                        {"body": body,
                         "authorization": self.headers.get("Authorization")})
                    entry = stub.script.pop(0) if stub.script else "0"
                if entry == "drop":
                    self.connection.close()
                    return
                if isinstance(entry, tuple):
                    status, text = entry
                else:
                    status, text = 200, entry
                payload = json.dumps({"text": text}).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}/complete"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
