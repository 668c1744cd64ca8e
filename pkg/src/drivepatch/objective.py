"""The attack objective.

A candidate patch is scored by compositing it into the scene frame, applying
K independent viewing-condition transforms, querying the oracle on each
transformed frame, and averaging the semantic distance between the oracle's
text and the attacker's target response. A total-variation penalty on the
patch itself (computed once, outside the transform average, since it does not
depend on the transform) discourages unprintable high-frequency patterns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import EmbeddingVector
from .patch import Patch
from .rng import RngStream
from .transforms import apply_transform, composite_patch, sample_transform


@dataclass(frozen=True)
class ObjectiveConfig:
    target_response: str
    lambda_tv: float = 0.001
    k_eot: int = 5
    embed_dim: int = 256

    def __post_init__(self) -> None:
        if self.lambda_tv < 0:
            raise ValueError("lambda_tv must be non-negative")
        if self.k_eot < 1:
            raise ValueError("k_eot must be at least 1")


def cosine_similarity(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Cosine of the angle between two embeddings; 0 if either is zero."""
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} vs {v.dim}")
    nu = float(np.linalg.norm(u.components))
    nv = float(np.linalg.norm(v.components))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    # clamp away float residue so downstream losses stay exactly in range
    return float(np.clip(np.dot(u.components, v.components) / (nu * nv), -1.0, 1.0))


def semantic_loss(generated: str, target: str, embedder) -> float:
    """1 - cosine similarity of the two texts' embeddings, in [0, 2]."""
    return 1.0 - cosine_similarity(embedder.embed(generated), embedder.embed(target))


def tv_norm(p: Patch) -> float:
    """Isotropic total variation of the patch on [0, 1]-normalized values.

    Forward differences with a replicate boundary (zero difference past the
    last row/column), summed over pixels and channels.
    """
    v = p.values / 255.0
    dy = np.zeros_like(v)
    dx = np.zeros_like(v)
    dy[:-1] = v[1:] - v[:-1]
    dx[:, :-1] = v[:, 1:] - v[:, :-1]
    return float(np.sqrt(dy * dy + dx * dx).sum())


class ObjectiveEvalError(Exception):
    """An oracle query inside a candidate evaluation failed."""

    def __init__(self, sample_index: int, cause: Exception):
        super().__init__(f"oracle query failed on transform sample {sample_index}: {cause}")
        self.sample_index = sample_index
        self.cause = cause


def candidate_objective(
    p: Patch, scene, cfg: ObjectiveConfig, oracle, embedder, rng: RngStream
) -> float:
    """Transform-averaged semantic loss plus the TV penalty.

    ``scene`` is a rendered scene (frame plus context carrying the patch
    rectangle and prompt). The patch must already be clipped. Issues exactly
    ``cfg.k_eot`` oracle queries; deterministic for a fixed rng stream, and
    the K-sample mean is reduced in a fixed order for bit-reproducibility.
    """
    composited, _ = composite_patch(scene.frame, p, scene.context.patch_roi)
    gen = rng.generator()
    samples = [sample_transform(gen) for _ in range(cfg.k_eot)]
    total = 0.0
    for k, t in enumerate(samples):
        transformed = apply_transform(composited, t)
        try:
            resp = oracle.describe(transformed, scene.context.prompt, scene.context)
        except Exception as exc:
            raise ObjectiveEvalError(k, exc) from exc
        total += semantic_loss(resp.raw_text, cfg.target_response, embedder)
    return total / cfg.k_eot + cfg.lambda_tv * tv_norm(p)


class SceneObjective:
    """Callable objective binding a rendered scene, oracle, and embedder.

    Instances report ``queries_per_eval`` so the optimizer can keep an exact
    oracle-query counter next to its candidate-evaluation counter.
    """

    def __init__(self, scene, cfg: ObjectiveConfig, oracle, embedder):
        self.scene = scene
        self.cfg = cfg
        self.oracle = oracle
        self.embedder = embedder
        self.queries_per_eval = cfg.k_eot
        self._phys = (scene.context.patch_physical
                      if hasattr(scene.context, "patch_physical") else (1.0, 1.0))

    def __call__(self, theta: np.ndarray, rng: RngStream) -> float:
        patch = Patch(theta, self._phys[0], self._phys[1])
        return candidate_objective(patch, self.scene, self.cfg, self.oracle, self.embedder, rng)
