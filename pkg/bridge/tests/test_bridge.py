"""Bridge conformance: the stub-backed server must pass the primary
artifact's golden wire-protocol suite with zero failures, and the primary's
HTTP clients must work against a live instance unmodified."""
import socket
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from drivepatch import wire
from drivepatch.image import ImageBuffer
from drivepatch.oracle import http_describe, http_embed

from oracle_bridge import BridgeConfig, create_app
from oracle_bridge.backends import BackendError, StubEmbedder, load_backends


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(BridgeConfig()))


def _post(client):
    def post(path, payload):
        response = client.post(path, json=payload)
        return response.status_code, response.json()

    return post


class TestProtocolConformance:
    def test_golden_suite_zero_failures(self, client):
        failures = wire.run_conformance(_post(client), max_image_bytes=BridgeConfig().max_image_bytes)
        assert failures == []

    def test_describe_golden_fixture(self, client):
        status, body = _post(client)("/v1/describe", dict(wire.GOLDEN_DESCRIBE_REQUESTS[0]))
        assert status == 200
        assert isinstance(body["description"], str) and body["description"]

    def test_embed_unit_norm(self, client):
        status, body = _post(client)("/v1/embed", {"text": "a pedestrian crossing"})
        assert status == 200
        vec = wire.validate_embed_response(body)
        assert float(np.linalg.norm(vec)) == pytest.approx(1.0, abs=1e-6)

    def test_embed_empty_is_zero_with_declared_dim(self, client):
        status, body = _post(client)("/v1/embed", {"text": ""})
        assert status == 200
        assert body["dim"] == StubEmbedder().dim
        assert not any(body["vector"])

    def test_oversized_image_413(self, client):
        cfg = BridgeConfig()
        oversized = "QUFB" * (cfg.max_image_bytes // 3 + 1)
        status, body = _post(client)(
            "/v1/describe", {"image_png_b64": oversized, "prompt": "p", "scenario": "s"}
        )
        assert status == 413
        assert "error" in body

    def test_undecodable_image_400(self, client):
        for bad in ("%%%", "bm90IGEgcG5n"):  # invalid base64, then non-PNG bytes
            status, body = _post(client)(
                "/v1/describe", {"image_png_b64": bad, "prompt": "p", "scenario": "s"}
            )
            assert status == 400
            assert "error" in body

    def test_embed_deterministic(self, client):
        post = _post(client)
        _, a = post("/v1/embed", {"text": "same text"})
        _, b = post("/v1/embed", {"text": "same text"})
        assert a == b


class TestBackends:
    def test_unknown_backend_aborts(self):
        with pytest.raises(BackendError, match="unknown describer"):
            load_backends("does-not-exist", "stub")
        with pytest.raises(BackendError, match="unknown embedder"):
            load_backends("stub", "does-not-exist")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BridgeConfig(max_image_bytes=0)


@pytest.fixture(scope="module")
def live_endpoint():
    import uvicorn

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    config = uvicorn.Config(
        create_app(BridgeConfig()), host="127.0.0.1", port=port, log_level="error"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("bridge did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestPrimaryClientsAgainstLiveBridge:
    def test_http_describe(self, live_endpoint):
        frame = ImageBuffer.filled(32, 24, (120, 60, 60))
        resp = http_describe(live_endpoint, frame, "what next?", scenario="crosswalk", timeout=10)
        assert "32x24" in resp.raw_text
        assert resp.parsed_action.value == "maintain"

    def test_http_embed(self, live_endpoint):
        vec = http_embed(live_endpoint, "a concrete barrier", timeout=10)
        assert float(np.linalg.norm(vec.components)) == pytest.approx(1.0, abs=1e-9)
        assert http_embed(live_endpoint, "", timeout=10).is_zero

    def test_conformance_over_real_http(self, live_endpoint):
        import requests

        def post(path, payload):
            response = requests.post(live_endpoint + path, json=payload, timeout=10)
            return response.status_code, response.json()

        assert wire.run_conformance(post, max_image_bytes=BridgeConfig().max_image_bytes) == []
