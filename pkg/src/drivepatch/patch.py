"""Printable patch parameters and their physical-realizability constraints.

A patch is optimized in a continuous [0, 255] space (gradient-free updates
need real-valued parameters) and quantized to 8-bit only when rendered into a
frame or exported for printing.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import ImageBuffer, round_half_away
from .rng import RngStream

VALUE_MIN = 0.0
VALUE_MAX = 255.0

# Gaussian init: centered mid-range, wide enough to fill most of [0, 255]
# with under 1% of values saturating at the clip bounds.
_INIT_MEAN = 127.5
_INIT_STD = 50.0


@dataclass(frozen=True, eq=False)
class Patch:
    """Continuous-valued patch: (height, width, 3) float64 in [0, 255] plus
    the physical print size in meters."""

    values: np.ndarray
    physical_width: float
    physical_height: float

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 3:
            raise ValueError(f"patch values must have shape (h, w, 3), got {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("patch dimensions must be at least 1x1")
        if not (self.physical_width > 0 and self.physical_height > 0):
            raise ValueError("physical dimensions must be strictly positive")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def with_values(self, values: np.ndarray) -> "Patch":
        return Patch(values, self.physical_width, self.physical_height)

    def same_values(self, other: "Patch") -> bool:
        return bool(np.array_equal(self.values, other.values))


def new_random_patch(
    seed: int, width: int, height: int, phys_w: float, phys_h: float
) -> Patch:
    """Gaussian-noise patch, deterministic per seed."""
    if width < 1 or height < 1:
        raise ValueError("patch width and height must be at least 1")
    gen = RngStream(seed).generator()
    z = gen.standard_normal((height, width, 3))
    values = np.clip(_INIT_MEAN + _INIT_STD * z, VALUE_MIN, VALUE_MAX)
    return Patch(values, phys_w, phys_h)


def clip_patch(p: Patch) -> Patch:
    """Hard-clip every value to [0, 255]. Idempotent."""
    return p.with_values(np.clip(p.values, VALUE_MIN, VALUE_MAX))


def quantize_patch(p: Patch) -> ImageBuffer:
    """8-bit render of a (clipped) patch; halves round away from zero."""
    q = round_half_away(p.values)
    return ImageBuffer(np.clip(q, 0, 255).astype(np.uint8))


def save_patch(p: Patch, path: str | Path, metadata: dict | None = None) -> None:
    """Write the quantized patch PNG plus a JSON sidecar with the physical
    size and any generation metadata."""
    path = Path(path)
    path.write_bytes(quantize_patch(p).to_png_bytes())
    sidecar = {
        "schema_version": 1,
        "physical_width_m": p.physical_width,
        "physical_height_m": p.physical_height,
        "width_px": p.width,
        "height_px": p.height,
    }
    if metadata:
        sidecar["metadata"] = metadata
    path.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_patch(path: str | Path) -> Patch:
    """Load a patch PNG and its sidecar; values come back quantized."""
    path = Path(path)
    img = ImageBuffer.from_png_bytes(path.read_bytes())
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.exists():
        raise FileNotFoundError(f"patch sidecar not found: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    return Patch(
        img.pixels.astype(np.float64),
        float(sidecar["physical_width_m"]),
        float(sidecar["physical_height_m"]),
    )
