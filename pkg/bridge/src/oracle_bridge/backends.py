"""Model backends behind the bridge.

A backend pair is a Describer (image + prompt -> text) and an Embedder
(text -> unit-norm vector, zero vector for empty text). The bundled "stub"
pair needs no model weights: it answers with fixed text and a token-hash
embedding, which is enough to exercise the wire protocol end to end.

Real deployments register a loader here that wraps whatever local model
serves the description or embedding (the bridge itself stays model-free).
"""
from __future__ import annotations

from typing import Callable, Protocol

import numpy as np
from PIL import Image


class Describer(Protocol):
    def describe(self, image: Image.Image, prompt: str, scenario: str) -> str: ...


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> list[float]: ...


class BackendError(Exception):
    """A backend could not be loaded."""


class StubDescriber:
    """Fixed-response describer for protocol tests."""

    def describe(self, image: Image.Image, prompt: str, scenario: str) -> str:
        return (
            f"A schematic {image.width}x{image.height} road scene. "
            "The driver should maintain speed."
        )


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) % 2**64
    return h


class StubEmbedder:
    """Deterministic signed token-hash embedding; unit-norm or zero."""

    def __init__(self, dim: int = 256):
        self.dim = dim

    def embed(self, text: str) -> list[float]:
        acc = np.zeros(self.dim)
        token = []
        for ch in text.lower() + " ":
            if ch.isalnum():
                token.append(ch)
            elif token:
                h = _fnv1a_64("".join(token).encode("utf-8"))
                acc[h % self.dim] += 1.0 if h < 2**63 else -1.0
                token = []
        norm = float(np.linalg.norm(acc))
        if norm:
            acc /= norm
        return acc.tolist()


_DESCRIBERS: dict[str, Callable[[], Describer]] = {"stub": StubDescriber}
_EMBEDDERS: dict[str, Callable[[], Embedder]] = {"stub": StubEmbedder}


def load_backends(describer_model: str, embedder_model: str) -> tuple[Describer, Embedder]:
    try:
        describer = _DESCRIBERS[describer_model]()
    except KeyError:
        raise BackendError(
            f"unknown describer '{describer_model}' (available: {sorted(_DESCRIBERS)})"
        ) from None
    except Exception as exc:
        raise BackendError(f"describer '{describer_model}' failed to load: {exc}") from exc
    try:
        embedder = _EMBEDDERS[embedder_model]()
    except KeyError:
        raise BackendError(
            f"unknown embedder '{embedder_model}' (available: {sorted(_EMBEDDERS)})"
        ) from None
    except Exception as exc:
        raise BackendError(f"embedder '{embedder_model}' failed to load: {exc}") from exc
    return describer, embedder
