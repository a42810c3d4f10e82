import json
import socket
import threading
import time

import pytest
import requests

from skydrop import opsvc, sim
from skydrop.sim import Engine

from conftest import load, scenario_doc

SIG = [1.0] * 16
SIG_FAR = [1.0] * 8 + [-1.0] * 8


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class StubEngine:
    """Just enough engine surface for handler unit tests."""

    def __init__(self, lines=None):
        self.lines = lines or []
        self.stopped = True
        self.pending_decisions = {}
        self.decision_outcomes = {}
        self.injected = []
        self._snapshot = {"version": 1, "t_s": 0.0, "stopped": False,
                          "fleet": [], "jobs": {}, "pending_decisions": 0}

    def snapshot(self):
        return self._snapshot

    def decisions_view(self):
        return [{"id": d} for d in self.pending_decisions]

    def inject(self, command):
        self.injected.append(command)


@pytest.fixture
def gateway():
    stub = StubEngine()
    port = free_port()
    server = opsvc.make_server(stub, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield stub, f"http://127.0.0.1:{port}"
    server.shutdown()
    server.server_close()


class TestState:
    def test_snapshot_served(self, gateway):
        stub, url = gateway
        r = requests.get(f"{url}/state", timeout=15)
        assert r.status_code == 200
        assert r.json()["version"] == 1

    def test_versions_non_decreasing(self, gateway):
        stub, url = gateway
        v1 = requests.get(f"{url}/state", timeout=15).json()["version"]
        stub._snapshot = dict(stub._snapshot, version=5)
        v2 = requests.get(f"{url}/state", timeout=15).json()["version"]
        assert v2 >= v1

    def test_503_before_first_tick(self, gateway):
        stub, url = gateway
        stub._snapshot = None
        assert requests.get(f"{url}/state", timeout=15).status_code == 503

    def test_unknown_path_404(self, gateway):
        _, url = gateway
        assert requests.get(f"{url}/nope", timeout=15).status_code == 404

    def test_cors_headers_present(self, gateway):
        _, url = gateway
        r = requests.get(f"{url}/state", timeout=15)
        assert r.headers["Access-Control-Allow-Origin"] == "*"


class TestDecisionPosts:
    def pending(self, stub, did="d1"):
        stub.pending_decisions[did] = object()

    def test_bad_verdict_400(self, gateway):
        stub, url = gateway
        self.pending(stub)
        r = requests.post(f"{url}/decisions/d1", json={"verdict": "maybe"}, timeout=15)
        assert r.status_code == 400

    def test_unknown_404(self, gateway):
        _, url = gateway
        r = requests.post(f"{url}/decisions/zzz", json={"verdict": "approve"},
                          timeout=15)
        assert r.status_code == 404

    def test_accept_then_duplicate_409(self, gateway):
        stub, url = gateway
        self.pending(stub)
        r1 = requests.post(f"{url}/decisions/d1", json={"verdict": "approve"},
                           timeout=15)
        assert r1.status_code == 200
        assert stub.injected == [{"kind": "operator_decision", "id": "d1",
                                  "verdict": "approve"}]
        r2 = requests.post(f"{url}/decisions/d1", json={"verdict": "approve"},
                           timeout=15)
        assert r2.status_code == 409

    def test_already_decided_409(self, gateway):
        stub, url = gateway
        stub.decision_outcomes["d9"] = "decided"
        r = requests.post(f"{url}/decisions/d9", json={"verdict": "reject"},
                          timeout=15)
        assert r.status_code == 409

    def test_expired_410(self, gateway):
        stub, url = gateway
        stub.decision_outcomes["d2"] = "expired"
        r = requests.post(f"{url}/decisions/d2", json={"verdict": "approve"},
                          timeout=15)
        assert r.status_code == 410


class TestEventStream:
    def lines(self, n):
        return [json.dumps({"seq": i, "t": float(i), "record": "transition"},
                           sort_keys=True, separators=(",", ":"))
                for i in range(n)]

    def fetch(self, url, since=None):
        q = f"?since={since}" if since is not None else ""
        r = requests.get(f"{url}/events{q}", stream=True, timeout=15)
        return [json.loads(x) for x in r.iter_lines() if x]

    def test_full_stream_in_order(self, gateway):
        stub, url = gateway
        stub.lines = self.lines(10)
        got = self.fetch(url)
        assert [r["seq"] for r in got] == list(range(10))

    def test_since_cursor_resumes_after(self, gateway):
        stub, url = gateway
        stub.lines = self.lines(10)
        got = self.fetch(url, since=3)
        assert [r["seq"] for r in got] == [4, 5, 6, 7, 8, 9]

    def test_since_beyond_buffer_emits_gap(self, gateway, monkeypatch):
        stub, url = gateway
        monkeypatch.setattr(opsvc, "STREAM_BUFFER", 4)
        stub.lines = self.lines(10)
        got = self.fetch(url, since=-1)
        assert got[0] == {"record": "gap", "from": 0, "to": 6}
        assert [r["seq"] for r in got[1:]] == [6, 7, 8, 9]

    def test_live_lines_are_pushed(self, gateway):
        stub, url = gateway
        stub.stopped = False
        stub.lines = self.lines(2)
        collected = []

        def reader():
            collected.extend(self.fetch(url))

        t = threading.Thread(target=reader)
        t.start()
        time.sleep(0.2)
        stub.lines = self.lines(5)
        time.sleep(0.2)
        stub.stopped = True
        t.join(timeout=15)
        assert [r["seq"] for r in collected] == list(range(5))


def signature_scenario():
    return load(scenario_doc(
        addresses=[{"id": "A1", "x": 300, "y": 0, "contacts": ["r1"],
                    "signature": SIG, "captured_signature": SIG_FAR}],
        agents={"recipients": {"r1": {"policy": "always_approve"}},
                "operator": {"policy": "gateway"}}))


class TestLiveGateway:
    def test_live_decision_approved_over_http(self):
        engine = Engine(signature_scenario())
        port = free_port()
        server = opsvc.make_server(engine, port)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        url = f"http://127.0.0.1:{port}"
        runner = threading.Thread(target=engine.run_paced, args=(50.0,))
        runner.start()
        try:
            decision = None
            deadline = time.monotonic() + 20
            while time.monotonic() < deadline:
                ds = requests.get(f"{url}/decisions", timeout=15).json()
                if ds:
                    decision = ds[0]
                    break
                time.sleep(0.05)
            assert decision is not None, "escalation never surfaced"
            assert decision["kind"] == "signature_escalation"
            assert decision["confidence"] < 0.85
            r = requests.post(f"{url}/decisions/{decision['id']}",
                              json={"verdict": "approve"}, timeout=15)
            assert r.status_code == 200
            runner.join(timeout=30)
            assert not runner.is_alive()
            assert [d.article_id for d in engine.report.delivered] == ["p1"]
            # the decision left the pending list and is marked decided
            assert engine.pending_decisions == {}
            assert engine.decision_outcomes[decision["id"]] == "decided"
        finally:
            runner.join(timeout=30)
            server.shutdown()
            server.server_close()

    def test_stream_matches_log(self):
        engine = Engine(load(scenario_doc()))
        port = free_port()
        server = opsvc.make_server(engine, port)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        url = f"http://127.0.0.1:{port}"
        collected = []

        def reader():
            r = requests.get(f"{url}/events", stream=True, timeout=30)
            collected.extend(x.decode() for x in r.iter_lines() if x)

        t = threading.Thread(target=reader)
        t.start()
        try:
            engine.run_paced(200.0)
            t.join(timeout=30)
            assert collected == engine.log_lines()
        finally:
            server.shutdown()
            server.server_close()
