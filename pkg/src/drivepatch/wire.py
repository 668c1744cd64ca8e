"""Wire protocol shared with external oracle services.

Two JSON-over-HTTP endpoints:

    POST /v1/describe  {"image_png_b64": str, "prompt": str, "scenario": str}
                       -> {"description": str}
    POST /v1/embed     {"text": str}
                       -> {"vector": [float, ...], "dim": int}

Images are 8-bit RGB PNG, base64 without line breaks; text is UTF-8. Embed
responses are unit-norm vectors, or the zero vector for empty text. Servers
reject oversized images with HTTP 413 and undecodable requests with HTTP
400, both with a JSON body carrying an "error" string.

This module is the contract artifact: schemas, golden request fixtures, and
a conformance runner any server implementation can be checked against.
"""
from __future__ import annotations

import base64
import math
from typing import Callable

import jsonschema
import numpy as np

from .image import ImageBuffer
from .oracle import ProtocolError

DEFAULT_MAX_IMAGE_BYTES = 4 * 1024 * 1024

DESCRIBE_REQUEST_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "describe_request",
    "type": "object",
    "required": ["image_png_b64", "prompt", "scenario"],
    "properties": {
        "image_png_b64": {"type": "string"},
        "prompt": {"type": "string"},
        "scenario": {"type": "string"},
    },
    "additionalProperties": False,
}

DESCRIBE_RESPONSE_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "describe_response",
    "type": "object",
    "required": ["description"],
    "properties": {"description": {"type": "string"}},
}

EMBED_REQUEST_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "embed_request",
    "type": "object",
    "required": ["text"],
    "properties": {"text": {"type": "string"}},
    "additionalProperties": False,
}

EMBED_RESPONSE_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "embed_response",
    "type": "object",
    "required": ["vector", "dim"],
    "properties": {
        "vector": {"type": "array", "items": {"type": "number"}},
        "dim": {"type": "integer", "minimum": 1},
    },
}

ERROR_RESPONSE_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "error_response",
    "type": "object",
    "required": ["error"],
    "properties": {"error": {"type": "string"}},
}


def encode_image_png_b64(img: ImageBuffer) -> str:
    return base64.b64encode(img.to_png_bytes()).decode("ascii")


def decode_image_png_b64(data: str) -> ImageBuffer:
    try:
        raw = base64.b64decode(data, validate=True)
    except Exception as exc:
        raise ValueError(f"invalid base64 image payload: {exc}") from exc
    return ImageBuffer.from_png_bytes(raw)


def describe_request(img: ImageBuffer, prompt: str, scenario: str) -> dict:
    return {"image_png_b64": encode_image_png_b64(img), "prompt": prompt, "scenario": scenario}


def validate_describe_response(body) -> str:
    try:
        jsonschema.validate(body, DESCRIBE_RESPONSE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ProtocolError(f"describe reply violates schema: {exc.message}") from exc
    return body["description"]


def validate_embed_response(body, expected_dim: int | None = None) -> np.ndarray:
    try:
        jsonschema.validate(body, EMBED_RESPONSE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ProtocolError(f"embed reply violates schema: {exc.message}") from exc
    vec = np.asarray(body["vector"], dtype=np.float64)
    if vec.size != body["dim"]:
        raise ProtocolError(f"embed reply dim {body['dim']} != vector length {vec.size}")
    if expected_dim is not None and vec.size != expected_dim:
        raise ProtocolError(f"embed reply dim {vec.size} != configured dim {expected_dim}")
    return vec


# ---------------------------------------------------------------------------
# Golden fixtures (frozen bytes) and the server conformance suite
# ---------------------------------------------------------------------------

# 2x2 all-red and 4x3 gradient PNGs, frozen as emitted bytes.
GOLDEN_PNG_B64_RED = (
    "iVBORw0KGgoAAAANSUhEUgAAAAIAAAACCAIAAAD91JpzAAAAFklEQVR4nGP8z8DAwMDAxMDAwMDA"
    "AAANHQEDasKb6QAAAABJRU5ErkJggg=="
)
GOLDEN_PNG_B64_GRADIENT = (
    "iVBORw0KGgoAAAANSUhEUgAAAAQAAAADCAIAAAA7ljmRAAAAGElEQVR4nGNkYGiwYWCAIBaGAAY4"
    "QOEAADRaAd5bUJu1AAAAAElFTkSuQmCC"
)

GOLDEN_DESCRIBE_REQUESTS = (
    {
        "image_png_b64": GOLDEN_PNG_B64_RED,
        "prompt": "Describe the scene and recommend the driver's next action.",
        "scenario": "crosswalk",
    },
    {
        "image_png_b64": GOLDEN_PNG_B64_GRADIENT,
        "prompt": "What should the driver do next?",
        "scenario": "highway",
    },
)

GOLDEN_EMBED_TEXTS = (
    "A pedestrian is crossing the road. The driver should stop.",
    "The driver should turn right to exit the highway",
)

PostFn = Callable[[str, dict], tuple[int, object]]


def run_conformance(post: PostFn, max_image_bytes: int = DEFAULT_MAX_IMAGE_BYTES) -> list[str]:
    """Exercise a server through ``post(path, payload) -> (status, body)``
    and return a list of human-readable failures (empty means conformant)."""
    failures: list[str] = []

    def check(label: str, condition: bool, detail: str = "") -> None:
        if not condition:
            failures.append(f"{label}: {detail}" if detail else label)

    def expect_error(label: str, status: int, body, expected_status: int) -> None:
        check(label, status == expected_status, f"status {status}, expected {expected_status}")
        try:
            jsonschema.validate(body, ERROR_RESPONSE_SCHEMA)
        except jsonschema.ValidationError as exc:
            check(label, False, f"error body violates schema: {exc.message}")

    for i, request in enumerate(GOLDEN_DESCRIBE_REQUESTS):
        label = f"describe golden[{i}]"
        status, body = post("/v1/describe", request)
        check(label, status == 200, f"status {status}")
        if status == 200:
            try:
                jsonschema.validate(body, DESCRIBE_RESPONSE_SCHEMA)
            except jsonschema.ValidationError as exc:
                check(label, False, f"response violates schema: {exc.message}")

    for i, text in enumerate(GOLDEN_EMBED_TEXTS):
        label = f"embed golden[{i}]"
        status, body = post("/v1/embed", {"text": text})
        check(label, status == 200, f"status {status}")
        if status != 200:
            continue
        try:
            vec = validate_embed_response(body)
        except ProtocolError as exc:
            check(label, False, str(exc))
            continue
        norm = float(np.linalg.norm(vec))
        check(label, math.isclose(norm, 1.0, abs_tol=1e-6), f"norm {norm} not unit")

    status, body = post("/v1/embed", {"text": ""})
    label = "embed empty text"
    check(label, status == 200, f"status {status}")
    if status == 200:
        try:
            vec = validate_embed_response(body)
            check(label, not np.any(vec), "expected the zero vector")
        except ProtocolError as exc:
            check(label, False, str(exc))

    oversized = "QUFB" * (max_image_bytes // 3 + 1)
    status, body = post(
        "/v1/describe", {"image_png_b64": oversized, "prompt": "p", "scenario": "s"}
    )
    expect_error("describe oversized image", status, body, 413)

    status, body = post(
        "/v1/describe", {"image_png_b64": "!!!not-base64!!!", "prompt": "p", "scenario": "s"}
    )
    expect_error("describe invalid base64", status, body, 400)

    not_png = base64.b64encode(b"definitely not a png").decode("ascii")
    status, body = post(
        "/v1/describe", {"image_png_b64": not_png, "prompt": "p", "scenario": "s"}
    )
    expect_error("describe invalid png", status, body, 400)

    status, body = post("/v1/describe", {"prompt": "p", "scenario": "s"})
    expect_error("describe missing image field", status, body, 400)

    return failures
