import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import jsonschema
import numpy as np
import pytest

from drivepatch.image import ImageBuffer
from drivepatch.oracle import (
    ProtocolError,
    RemoteError,
    RetryableError,
    http_describe,
    http_embed,
)
from drivepatch.wire import (
    DESCRIBE_REQUEST_SCHEMA,
    GOLDEN_DESCRIBE_REQUESTS,
    GOLDEN_PNG_B64_RED,
    decode_image_png_b64,
    describe_request,
    encode_image_png_b64,
    run_conformance,
    validate_describe_response,
    validate_embed_response,
)


class _CannedHandler(BaseHTTPRequestHandler):
    """Serves scripted (status, body) responses per path."""

    script = {}
    seen = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length)) if length else None
        type(self).seen.append((self.path, payload))
        status, body = self.script[self.path]
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def canned_server():
    server = HTTPServer(("127.0.0.1", 0), _CannedHandler)
    _CannedHandler.script = {}
    _CannedHandler.seen = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", _CannedHandler
    server.shutdown()
    thread.join(timeout=5)


class TestCodec:
    def test_png_b64_roundtrip(self):
        img = ImageBuffer.filled(5, 4, (250, 10, 60))
        encoded = encode_image_png_b64(img)
        assert "\n" not in encoded
        assert decode_image_png_b64(encoded).same_pixels(img)

    def test_golden_fixtures_decode(self):
        red = decode_image_png_b64(GOLDEN_PNG_B64_RED)
        assert red.width == 2 and red.height == 2
        assert np.all(red.pixels == np.array([255, 0, 0], dtype=np.uint8))

    def test_golden_requests_validate(self):
        for request in GOLDEN_DESCRIBE_REQUESTS:
            jsonschema.validate(request, DESCRIBE_REQUEST_SCHEMA)

    def test_describe_request_shape(self):
        img = ImageBuffer.filled(2, 2, (0, 0, 0))
        request = describe_request(img, "prompt", "crosswalk")
        jsonschema.validate(request, DESCRIBE_REQUEST_SCHEMA)


class TestResponseValidation:
    def test_describe_ok(self):
        assert validate_describe_response({"description": "hello"}) == "hello"

    def test_describe_missing_field(self):
        with pytest.raises(ProtocolError):
            validate_describe_response({"text": "hello"})

    def test_embed_ok(self):
        vec = validate_embed_response({"vector": [3.0, 4.0], "dim": 2})
        assert vec.tolist() == [3.0, 4.0]

    def test_embed_dim_mismatch_with_payload(self):
        with pytest.raises(ProtocolError):
            validate_embed_response({"vector": [1.0, 0.0], "dim": 3})

    def test_embed_dim_mismatch_with_config(self):
        with pytest.raises(ProtocolError):
            validate_embed_response({"vector": [1.0, 0.0], "dim": 2}, expected_dim=8)


class TestHttpDescribe:
    def test_roundtrip(self, canned_server):
        endpoint, handler = canned_server
        handler.script["/v1/describe"] = (200, {"description": "The driver should stop."})
        img = ImageBuffer.filled(4, 4, (1, 2, 3))
        resp = http_describe(endpoint, img, "what next?", scenario="crosswalk", timeout=5)
        assert resp.raw_text == "The driver should stop."
        assert resp.parsed_action.value == "brake_stop"
        path, payload = handler.seen[0]
        assert path == "/v1/describe"
        assert payload["prompt"] == "what next?"
        assert decode_image_png_b64(payload["image_png_b64"]).same_pixels(img)

    def test_unreachable_endpoint_retries_then_raises(self):
        with pytest.raises(RetryableError):
            http_describe(
                "http://127.0.0.1:1",  # nothing listens there
                ImageBuffer.filled(2, 2, (0, 0, 0)),
                "p",
                timeout=0.2,
                retries=1,
            )

    def test_missing_description_field(self, canned_server):
        endpoint, handler = canned_server
        handler.script["/v1/describe"] = (200, {"oops": 1})
        with pytest.raises(ProtocolError):
            http_describe(endpoint, ImageBuffer.filled(2, 2, (0, 0, 0)), "p", timeout=5)

    def test_non_2xx_raises_remote_error(self, canned_server):
        endpoint, handler = canned_server
        handler.script["/v1/describe"] = (500, {"error": "boom"})
        with pytest.raises(RemoteError):
            http_describe(endpoint, ImageBuffer.filled(2, 2, (0, 0, 0)), "p", timeout=5)


class TestHttpEmbed:
    def test_normalizes_vector(self, canned_server):
        endpoint, handler = canned_server
        handler.script["/v1/embed"] = (200, {"vector": [3.0, 4.0], "dim": 2})
        vec = http_embed(endpoint, "hi", timeout=5)
        assert vec.components.tolist() == pytest.approx([0.6, 0.8])

    def test_zero_vector_allowed(self, canned_server):
        endpoint, handler = canned_server
        handler.script["/v1/embed"] = (200, {"vector": [0.0, 0.0], "dim": 2})
        vec = http_embed(endpoint, "", timeout=5)
        assert vec.is_zero

    def test_configured_dim_mismatch(self, canned_server):
        endpoint, handler = canned_server
        handler.script["/v1/embed"] = (200, {"vector": [1.0, 0.0], "dim": 2})
        with pytest.raises(ProtocolError):
            http_embed(endpoint, "hi", expected_dim=16, timeout=5)


class _ReferenceServer:
    """Minimal in-process conformant implementation used to validate the
    conformance runner itself."""

    def __init__(self, max_image_bytes=1024 * 1024, dim=16):
        self.max_image_bytes = max_image_bytes
        self.dim = dim

    def post(self, path, payload):
        if path == "/v1/describe":
            if set(payload) != {"image_png_b64", "prompt", "scenario"} or not all(
                isinstance(v, str) for v in payload.values()
            ):
                return 400, {"error": "bad request shape"}
            data = payload["image_png_b64"]
            if len(data) * 3 // 4 > self.max_image_bytes:
                return 413, {"error": "image too large"}
            try:
                raw = base64.b64decode(data, validate=True)
                ImageBuffer.from_png_bytes(raw)
            except Exception as exc:
                return 400, {"error": f"bad image: {exc}"}
            return 200, {"description": "A road scene."}
        if path == "/v1/embed":
            text = payload.get("text", "")
            vec = np.zeros(self.dim)
            if text:
                vec[hash(text) % self.dim] = 1.0
            return 200, {"vector": vec.tolist(), "dim": self.dim}
        return 404, {"error": "no such endpoint"}


class TestConformanceRunner:
    def test_reference_server_passes(self):
        server = _ReferenceServer()
        failures = run_conformance(server.post, max_image_bytes=server.max_image_bytes)
        assert failures == []

    def test_broken_server_caught(self):
        server = _ReferenceServer()

        def broken_post(path, payload):
            status, body = server.post(path, payload)
            if path == "/v1/embed":
                body = {"vector": body["vector"], "dim": body["dim"] + 1}
            return status, body

        failures = run_conformance(broken_post, max_image_bytes=server.max_image_bytes)
        assert failures
