"""Operator gateway: live snapshots, the pending-decision queue, decision
submission, and a line-delimited event stream over HTTP.

Handlers never touch simulation state directly: reads use the engine's latest
published snapshot; writes go through the injection queue and take effect at
the next paced tick.
"""

from __future__ import annotations

import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .sim import Engine, EngineStopped

STREAM_BUFFER = 10_000
_DECISION_PATH = re.compile(r"^/decisions/([A-Za-z0-9_\-]+)$")


class GatewayHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    engine: Engine | None = None
    accepted_ids: set[str] = set()
    accepted_lock = threading.Lock()

    def log_message(self, *args) -> None:  # quiet by default
        pass

    def _json(self, code: int, body) -> None:
        data = json.dumps(body).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self) -> None:
        url = urlparse(self.path)
        engine = self.engine
        if engine is None:
            self._json(503, {"error": "engine not started"})
            return
        if url.path == "/state":
            snapshot = engine.snapshot()
            if snapshot is None:
                self._json(503, {"error": "no tick yet"})
                return
            self._json(200, snapshot)
        elif url.path == "/decisions":
            self._json(200, engine.decisions_view())
        elif url.path == "/events":
            since = int(parse_qs(url.query).get("since", ["-1"])[0])
            self._stream_events(engine, since)
        else:
            self._json(404, {"error": "not found"})

    def do_POST(self) -> None:
        engine = self.engine
        match = _DECISION_PATH.match(urlparse(self.path).path)
        if engine is None or match is None:
            self._json(404, {"error": "not found"})
            return
        decision_id = match.group(1)
        length = int(self.headers.get("Content-Length", "0"))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
            verdict = body.get("verdict")
        except json.JSONDecodeError:
            verdict = None
        if verdict not in ("approve", "reject"):
            self._json(400, {"error": "verdict must be approve or reject"})
            return
        outcome = engine.decision_outcomes.get(decision_id)
        with self.accepted_lock:
            already = decision_id in self.accepted_ids
        if outcome == "decided" or already:
            self._json(409, {"error": "already decided"})
            return
        if outcome == "expired":
            self._json(410, {"error": "deadline passed"})
            return
        if decision_id not in engine.pending_decisions:
            self._json(404, {"error": "unknown decision"})
            return
        try:
            engine.inject({"kind": "operator_decision", "id": decision_id,
                           "verdict": verdict})
        except EngineStopped:
            self._json(410, {"error": "simulation stopped"})
            return
        with self.accepted_lock:
            self.accepted_ids.add(decision_id)
        self._json(200, {"id": decision_id, "verdict": verdict, "status": "accepted"})

    def _stream_events(self, engine: Engine, since: int) -> None:
        self.send_response(200)
        self.send_header("Content-Type", "application/x-ndjson")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Transfer-Encoding", "chunked")
        self.end_headers()

        def write_line(line: str) -> None:
            payload = (line + "\n").encode()
            self.wfile.write(f"{len(payload):X}\r\n".encode() + payload + b"\r\n")
            self.wfile.flush()

        cursor = since + 1
        oldest = max(0, len(engine.lines) - STREAM_BUFFER)
        if cursor < oldest:
            write_line(json.dumps({"record": "gap", "from": cursor, "to": oldest},
                                  separators=(",", ":"), sort_keys=True))
            cursor = oldest
        try:
            while True:
                lines = engine.lines
                while cursor < len(lines):
                    write_line(lines[cursor])
                    cursor += 1
                if engine.stopped:
                    break
                time.sleep(0.05)
            self.wfile.write(b"0\r\n\r\n")
        except (BrokenPipeError, ConnectionResetError):
            pass


def make_server(engine: Engine, port: int) -> ThreadingHTTPServer:
    """Bind the gateway; raises OSError when the port is busy."""
    handler = type("BoundGatewayHandler", (GatewayHandler,), {
        "engine": engine, "accepted_ids": set(), "accepted_lock": threading.Lock()})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.daemon_threads = True
    return server


def serve(engine: Engine, port: int, pace: float,
          stop_flag: threading.Event | None = None):
    """Run the paced simulation with the gateway attached; returns the report."""
    server = make_server(engine, port)
    server_thread = threading.Thread(target=server.serve_forever, daemon=True)
    server_thread.start()
    try:
        report = engine.run_paced(pace, stop_flag)
    finally:
        server.shutdown()
        server.server_close()
    return report
