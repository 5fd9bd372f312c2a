import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from omnibench_rag import kernels


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\n[ACCEPTANCE] {name}: {report.outcome.upper()}")


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    """Run a test under both kernel backends (numba skipped if unavailable)."""
    if request.param == "numba" and not kernels.NUMBA_AVAILABLE:
        pytest.skip("numba not importable")
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(None)


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        self.server.stub.requests.append(
            {"path": self.path, "body": body, "headers": {k.lower(): v for k, v in self.headers.items()}}
        )
        step = self.server.stub.next_step(self.path, body)
        delay = step.get("delay", 0)
        if delay:
            time.sleep(delay)
        payload = step.get("payload", {})
        self.send_response(step.get("status", 200))
        raw = json.dumps(payload).encode()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


class StubServer:
    """Scriptable local HTTP endpoint for provider/embedder tests.

    `script` is either a callable (path, body) -> step dict, or a list of
    step dicts consumed one per request. A step is
    {"status": int, "payload": dict, "delay": seconds}.
    """

    def __init__(self):
        self.requests = []
        self.script = []
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self._httpd.stub = self
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def base_url(self):
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    def next_step(self, path, body):
        if callable(self.script):
            return self.script(path, body)
        if not self.script:
            return {"status": 500, "payload": {"error": "stub script exhausted"}}
        return self.script.pop(0)

    def close(self):
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def stub_server():
    server = StubServer()
    yield server
    server.close()


def chat_payload(text, prompt_tokens=7, completion_tokens=3):
    return {
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens},
    }


def embeddings_payload(vectors):
    return {"data": [{"index": i, "embedding": list(map(float, v))} for i, v in enumerate(vectors)]}
