"""CLI with --backend http against a local stub server: exercises the env
configuration, both HTTP clients, and the full index/extract flow."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

from cli_driver import run_cli

REPO = Path(__file__).resolve().parent.parent
CORPUS = REPO / "fixtures" / "corpus3"


class _Backend(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length))
        if self.path.endswith("/embeddings"):
            body = {"data": [{"embedding": [1.0, 0.5, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0]}]}
        else:
            content = json.dumps({"applies": False, "amount": "0", "evidence": []})
            body = {"choices": [{"message": {"content": content}}]}
        raw = json.dumps(body).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture
def backend_env(monkeypatch):
    server = HTTPServer(("127.0.0.1", 0), _Backend)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    base = f"http://127.0.0.1:{server.server_port}"
    monkeypatch.setenv("LLM_API_BASE", base)
    monkeypatch.setenv("LLM_API_KEY", "test-key")
    monkeypatch.setenv("LLM_MODEL", "stub")
    monkeypatch.setenv("EMBED_API_BASE", base)
    monkeypatch.setenv("EMBED_API_KEY", "test-key")
    monkeypatch.setenv("EMBED_MODEL", "stub-embed")
    yield base
    server.shutdown()


def test_http_backend_index_and_extract(tmp_path, backend_env):
    config = tmp_path / "config.yaml"
    config.write_text("embed_dim: 8\n")

    ingested = tmp_path / "ingested"
    index_dir = tmp_path / "index"
    out = tmp_path / "run"
    assert run_cli("ingest", CORPUS, ingested) == 0
    # --skip-augment keeps indexing LLM-free; embeddings go over HTTP
    assert run_cli("index", ingested, index_dir, "--backend", "http",
                   "--skip-augment", "--config", config) == 0
    assert run_cli("extract", index_dir, "proj-alpha.pdf", "--method", "zero",
                   "--out", out, "--backend", "http", "--config", config) == 0
    payload = json.loads((out / "results" / "proj-alpha.json").read_text())
    assert payload["total_ews_budget"] == 0.0
    assert all(a["amount"] == 0.0 for a in payload["pillar_allocations"].values())


def test_http_backend_missing_env_is_usage_error(tmp_path, monkeypatch):
    monkeypatch.delenv("LLM_API_BASE", raising=False)
    ingested = tmp_path / "ingested"
    assert run_cli("ingest", CORPUS, ingested) == 0
    assert run_cli("index", ingested, tmp_path / "idx", "--backend", "http") == 2
