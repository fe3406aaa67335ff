import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from spatialsoundqa.grader import (EmbeddingConfig, GraderError, embed, embedding_grade,
                                   soft_map)

BASIS = {"north": [1.0, 0.0, 0.0], "east": [0.0, 1.0, 0.0], "up": [0.0, 0.0, 1.0]}


def vector(text):
    if text in BASIS:
        return BASIS[text]
    h = np.frombuffer(text.encode().ljust(3, b"_")[:3], dtype=np.uint8).astype(float)
    return list(h + 1.0)


class Handler(BaseHTTPRequestHandler):
    mode = "ok"
    calls = 0

    def do_POST(self):
        type(self).calls += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if self.mode == "flaky" and type(self).calls % 2 == 1:
            self.send_response(503)
            self.end_headers()
            return
        if self.mode == "reject":
            self.send_response(401)
            self.end_headers()
            return
        if self.mode == "malformed":
            payload = {"embeddings": [[1.0]]}
        elif self.mode == "garbage":
            self.send_response(200)
            self.end_headers()
            self.wfile.write(b"<html>")
            return
        else:
            payload = {"embeddings": [vector(t) for t in body["texts"]]}
        out = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    srv = HTTPServer(("127.0.0.1", 0), Handler)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    Handler.mode, Handler.calls = "ok", 0
    yield f"http://127.0.0.1:{srv.server_address[1]}/embed"
    srv.shutdown()
    srv.server_close()


def cfg(url, **kw):
    kw.setdefault("backoff_s", 0.01)
    kw.setdefault("timeout_s", 5.0)
    return EmbeddingConfig(url, **kw)


def test_identical_and_orthogonal(server):
    sims = embedding_grade(["north", "north", "speech"], ["north", "east", "speech"], cfg(server))
    np.testing.assert_allclose(sims, [1.0, 0.0, 1.0], atol=1e-12)


def test_batching_preserves_order(server):
    texts = [f"t{i:03d}" for i in range(70)]
    out = embed(texts, cfg(server, batch_size=8, max_in_flight=3))
    np.testing.assert_array_equal(out, [vector(t) for t in texts])
    assert Handler.calls == 9


def test_retry_then_succeed(server):
    Handler.mode = "flaky"
    out = embed(["up"], cfg(server, retries=2))
    np.testing.assert_array_equal(out, [[0.0, 0.0, 1.0]])


def test_client_error_is_not_retried(server):
    Handler.mode = "reject"
    with pytest.raises(GraderError, match="401"):
        embed(["up"], cfg(server, retries=3))
    assert Handler.calls == 1


@pytest.mark.parametrize("mode", ["malformed", "garbage"])
def test_malformed_response(server, mode):
    Handler.mode = mode
    with pytest.raises(GraderError):
        embed(["a", "b"], cfg(server))


def test_unreachable_endpoint():
    with pytest.raises(GraderError, match="after 2 attempts"):
        embed(["a"], cfg("http://127.0.0.1:9/none", retries=1, timeout_s=1.0))


def test_soft_map(server):
    true_sets = [{"north"}, {"east"}, {"north", "up"}]
    assert soft_map(true_sets, true_sets, cfg(server)) == 1.0
    swapped = soft_map([{"east"}, {"north"}, set()], true_sets, cfg(server))
    assert swapped < 1.0


def test_config_from_env(monkeypatch):
    monkeypatch.delenv("SSF_EMBED_ENDPOINT", raising=False)
    with pytest.raises(GraderError):
        EmbeddingConfig.from_env()
    monkeypatch.setenv("SSF_EMBED_ENDPOINT", "http://x")
    monkeypatch.setenv("SSF_EMBED_AUTH", "Bearer t")
    c = EmbeddingConfig.from_env(batch_size=4)
    assert (c.endpoint, c.auth, c.batch_size) == ("http://x", "Bearer t", 4)
