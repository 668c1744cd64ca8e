"""FastAPI application implementing the wire protocol.

Endpoints:
    POST /v1/describe {"image_png_b64", "prompt", "scenario"} -> {"description"}
    POST /v1/embed    {"text"} -> {"vector", "dim"}

Oversized images are rejected with 413, undecodable requests with 400; both
carry a JSON body {"error": "..."}. Handlers are stateless per request.
"""
from __future__ import annotations

import base64
import binascii
import io
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from .backends import load_backends

DEFAULT_MAX_IMAGE_BYTES = 4 * 1024 * 1024


@dataclass(frozen=True)
class BridgeConfig:
    describer_model: str = "stub"
    embedder_model: str = "stub"
    host: str = "127.0.0.1"
    port: int = 8571
    max_image_bytes: int = DEFAULT_MAX_IMAGE_BYTES
    request_timeout_s: float = 60.0

    def __post_init__(self) -> None:
        if self.max_image_bytes <= 0:
            raise ValueError("max_image_bytes must be positive")
        if not (0 < self.port < 65536):
            raise ValueError(f"invalid port {self.port}")


class DescribeRequest(BaseModel):
    image_png_b64: str
    prompt: str
    scenario: str


class EmbedRequest(BaseModel):
    text: str


def create_app(cfg: BridgeConfig | None = None) -> FastAPI:
    cfg = cfg or BridgeConfig()
    describer, embedder = load_backends(cfg.describer_model, cfg.embedder_model)
    app = FastAPI(title="oracle-bridge", version="0.1.0")

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": f"malformed request: {exc.errors()[:3]}"})

    @app.post("/v1/describe")
    def describe(req: DescribeRequest):
        # Reject on encoded size before touching the payload.
        if len(req.image_png_b64) * 3 // 4 > cfg.max_image_bytes:
            return JSONResponse(
                status_code=413,
                content={"error": f"image exceeds {cfg.max_image_bytes} bytes"},
            )
        try:
            raw = base64.b64decode(req.image_png_b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            return JSONResponse(status_code=400, content={"error": f"invalid base64: {exc}"})
        if len(raw) > cfg.max_image_bytes:
            return JSONResponse(
                status_code=413,
                content={"error": f"image exceeds {cfg.max_image_bytes} bytes"},
            )
        try:
            with Image.open(io.BytesIO(raw)) as im:
                image = im.convert("RGB")
        except Exception as exc:
            return JSONResponse(status_code=400, content={"error": f"invalid PNG image: {exc}"})
        return {"description": describer.describe(image, req.prompt, req.scenario)}

    @app.post("/v1/embed")
    def embed(req: EmbedRequest):
        vector = embedder.embed(req.text)
        return {"vector": vector, "dim": len(vector)}

    return app


def serve(cfg: BridgeConfig) -> None:
    """Run the bridge until interrupted. Backend load failures abort startup
    with a diagnostic before the socket opens."""
    import uvicorn

    app = create_app(cfg)
    uvicorn.run(app, host=cfg.host, port=cfg.port, timeout_keep_alive=int(cfg.request_timeout_s))
