"""The black-box query boundary.

Two oracles answer image queries with free text: a deterministic mock for
desk-scale runs and an HTTP client speaking the wire protocol in
:mod:`drivepatch.wire`. Text embeddings likewise come from either a local
feature-hashing embedder or the HTTP embedding endpoint. Nothing here exposes
gradients or logits; the attack sees text only.
"""
from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass

import numpy as np

from .image import ImageBuffer
from .rng import fnv1a_64
from .transforms import Rect


class Action(enum.Enum):
    ACCELERATE = "accelerate"
    MAINTAIN = "maintain"
    BRAKE_STOP = "brake_stop"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    UNKNOWN = "unknown"


# First match wins, scanned top to bottom over the lowercased text.
_ACTION_RULES: tuple[tuple[Action, tuple[str, ...]], ...] = (
    (Action.TURN_RIGHT, ("turn right",)),
    (Action.TURN_LEFT, ("turn left",)),
    (Action.BRAKE_STOP, ("stop", "brake", "slow down")),
    (Action.ACCELERATE, ("accelerate", "speed up", "continue forward")),
    (Action.MAINTAIN, ("maintain",)),
)


def parse_action(text: str) -> Action:
    """Keyword-priority extraction of the recommended action from free text."""
    low = text.lower()
    for action, needles in _ACTION_RULES:
        if any(needle in low for needle in needles):
            return action
    return Action.UNKNOWN


@dataclass(frozen=True)
class OracleResponse:
    raw_text: str
    parsed_action: Action
    query_latency: float = 0.0


class OracleError(Exception):
    """Base class for oracle transport and protocol failures."""


class RetryableError(OracleError):
    """Timeout or connection failure; the request may be retried."""


class ProtocolError(OracleError):
    """The reply arrived but does not follow the wire protocol."""


class RemoteError(OracleError):
    """The endpoint answered with a non-2xx status."""


# ---------------------------------------------------------------------------
# Text embeddings
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """Unit-norm embedding, or the zero vector for empty text."""

    components: np.ndarray

    def __post_init__(self) -> None:
        c = np.ascontiguousarray(np.asarray(self.components, dtype=np.float64))
        if c.ndim != 1 or c.size < 1:
            raise ValueError("embedding must be a non-empty 1-d vector")
        norm = float(np.linalg.norm(c))
        if norm != 0.0 and abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding must be unit-norm or zero, got norm {norm}")
        c.setflags(write=False)
        object.__setattr__(self, "components", c)

    @property
    def dim(self) -> int:
        return self.components.size

    @property
    def is_zero(self) -> bool:
        return not np.any(self.components)


def _tokenize(text: str) -> list[str]:
    tokens = []
    current = []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


@functools.lru_cache(maxsize=65536)
def _hash_embed_cached(text: str, dim: int) -> EmbeddingVector:
    acc = np.zeros(dim, dtype=np.float64)
    for token in _tokenize(text):
        h = fnv1a_64(token.encode("utf-8"))
        sign = 1.0 if (h >> 63) == 0 else -1.0
        acc[h % dim] += sign
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        return EmbeddingVector(acc)
    return EmbeddingVector(acc / norm)


def hash_embed(text: str, dim: int = 256) -> EmbeddingVector:
    """Signed feature-hashing embedding: FNV-1a bucket per token, sign from
    the hash's top bit, L2-normalized. Empty text maps to the zero vector."""
    if dim < 8:
        raise ValueError("embedding dimension must be at least 8")
    return _hash_embed_cached(text, dim)


class HashEmbedder:
    """Local embedder used at desk scale; results are cached per text."""

    def __init__(self, dim: int = 256):
        self.dim = dim

    def embed(self, text: str) -> EmbeddingVector:
        return hash_embed(text, self.dim)


# ---------------------------------------------------------------------------
# Mock driving oracle
# ---------------------------------------------------------------------------

SAFE_CLEAR_RESPONSE = "The driver should maintain speed on the clear road."

# The mock flips to the scenario's target response once the region of
# interest is strongly red-dominant.
RED_DOMINANCE_THRESHOLD = 0.25

# Below the threshold the mock grades its commentary: it appends a fixed
# number of sentences and swaps them, one per rung, from restatements of the
# safe description to the target response's scene justification (its action
# keywords stripped) as red dominance rises. The grading is what gives a
# gradient-free optimizer a recoverable signal; with only flat responses on
# either side of the threshold, every query in the sub-threshold basin
# returns the same text and the estimated gradient is identically zero.
# Keeping the tail length constant makes the embedding move monotonically
# with the rung instead of saturating after a few repetitions, and a rung-0
# tail would be embedding-identical to the bare safe description.
LADDER_RUNGS = 64


@functools.lru_cache(maxsize=256)
def _neutralized_target(target_response: str) -> str:
    """The target response with every action keyword removed, so graded
    commentary can lean toward the target's wording without ever parsing to
    an action."""
    text = target_response
    for _, needles in _ACTION_RULES:
        for needle in needles:
            pattern = re.compile(r"\b" + re.escape(needle) + r"\b", re.IGNORECASE)
            text = pattern.sub(" ", text)
    return " ".join(text.split())


def red_dominance(frame: ImageBuffer, roi: Rect | None) -> float:
    """mean(R) - 0.5 * (mean(G) + mean(B)) over the roi, channels in [0, 1].

    Empty or off-frame rois score 0.
    """
    if roi is None or roi.is_empty:
        return 0.0
    clipped = roi.intersect(Rect(0, 0, frame.width, frame.height))
    if clipped is None:
        return 0.0
    window = frame.pixels[
        clipped.y : clipped.y + clipped.h, clipped.x : clipped.x + clipped.w
    ].astype(np.float64)
    means = window.mean(axis=(0, 1)) / 255.0
    return float(means[0] - 0.5 * (means[1] + means[2]))


def mock_describe(frame: ImageBuffer, roi: Rect | None, ctx) -> OracleResponse:
    """Deterministic stand-in for a camera-based driving model.

    ``ctx`` carries the scenario's target response, whether the critical
    object is visible, and the safe description naming it. Monotone in red
    dominance: raising red values in the roi can never flip the response
    from the target back to a safe description.
    """
    s = red_dominance(frame, roi)
    if s > RED_DOMINANCE_THRESHOLD:
        return OracleResponse(ctx.target_response, parse_action(ctx.target_response), 0.0)
    base = ctx.safe_critical_response if ctx.critical_visible else SAFE_CLEAR_RESPONSE
    rung = min(LADDER_RUNGS, int(max(s, 0.0) / RED_DOMINANCE_THRESHOLD * LADDER_RUNGS))
    phrase = _neutralized_target(ctx.target_response)
    if rung == 0 or not phrase:
        text = base
    else:
        tail = [phrase] * rung + [base] * (LADDER_RUNGS - rung)
        text = base + " " + " ".join(tail)
    return OracleResponse(text, parse_action(text), 0.0)


class MockOracle:
    """Pure-function oracle; safe to query from any number of threads."""

    def describe(self, frame: ImageBuffer, prompt: str, ctx) -> OracleResponse:
        return mock_describe(frame, ctx.patch_roi, ctx)


# ---------------------------------------------------------------------------
# HTTP oracle and embedder (wire protocol clients)
# ---------------------------------------------------------------------------


def http_describe(
    endpoint: str,
    frame: ImageBuffer,
    prompt: str,
    *,
    scenario: str = "",
    timeout: float = 30.0,
    retries: int = 2,
    session=None,
) -> OracleResponse:
    """POST /v1/describe with the frame as base64 PNG; retries idempotently."""
    from . import wire

    payload = wire.describe_request(frame, prompt, scenario)
    body = _post_json(endpoint.rstrip("/") + "/v1/describe", payload, timeout, retries, session)
    text = wire.validate_describe_response(body)
    return OracleResponse(text, parse_action(text), 0.0)


def http_embed(
    endpoint: str,
    text: str,
    *,
    expected_dim: int | None = None,
    timeout: float = 30.0,
    retries: int = 2,
    session=None,
) -> EmbeddingVector:
    """POST /v1/embed; the returned vector is renormalized locally."""
    from . import wire

    body = _post_json(endpoint.rstrip("/") + "/v1/embed", {"text": text}, timeout, retries, session)
    vec = wire.validate_embed_response(body, expected_dim=expected_dim)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return EmbeddingVector(np.zeros(vec.size))
    return EmbeddingVector(vec / norm)


def _post_json(url: str, payload: dict, timeout: float, retries: int, session=None) -> dict:
    import requests

    post = (session or requests).post
    last_exc: Exception | None = None
    for _ in range(max(1, retries + 1)):
        try:
            resp = post(url, json=payload, timeout=timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_exc = exc
            continue
        if not 200 <= resp.status_code < 300:
            raise RemoteError(f"{url} returned {resp.status_code}: {resp.text[:500]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{url} returned non-JSON body") from exc
    raise RetryableError(f"{url} unreachable after {retries + 1} attempts") from last_exc


class HttpOracle:
    """Wire-protocol driving oracle client."""

    def __init__(self, endpoint: str, timeout: float = 30.0, retries: int = 2):
        import requests

        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self._session = requests.Session()

    def describe(self, frame: ImageBuffer, prompt: str, ctx) -> OracleResponse:
        return http_describe(
            self.endpoint,
            frame,
            prompt,
            scenario=getattr(ctx, "scenario_name", ""),
            timeout=self.timeout,
            retries=self.retries,
            session=self._session,
        )


class HttpEmbedder:
    """Wire-protocol embedder client with a per-text cache."""

    def __init__(self, endpoint: str, dim: int | None = None, timeout: float = 30.0, retries: int = 2):
        self.endpoint = endpoint
        self.dim = dim
        self.timeout = timeout
        self.retries = retries
        self._cache: dict[str, EmbeddingVector] = {}

    def embed(self, text: str) -> EmbeddingVector:
        hit = self._cache.get(text)
        if hit is None:
            hit = http_embed(
                self.endpoint,
                text,
                expected_dim=self.dim,
                timeout=self.timeout,
                retries=self.retries,
            )
            self._cache[text] = hit
        return hit
