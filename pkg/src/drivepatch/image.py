"""8-bit RGB raster buffers and PNG round-trips."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image


def round_half_away(values: np.ndarray | float) -> np.ndarray:
    """Round to nearest integer, halves away from zero.

    Fixed explicitly (instead of banker's rounding) so quantization is
    bit-identical across platforms.
    """
    v = np.asarray(values, dtype=np.float64)
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Row-major RGB8 image. Pixels are (height, width, 3) uint8, immutable."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must have shape (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image dimensions must be at least 1x1")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def same_pixels(self, other: "ImageBuffer") -> bool:
        return bool(np.array_equal(self.pixels, other.pixels))

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.pixels, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "ImageBuffer":
        with Image.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        return cls(arr)

    @classmethod
    def filled(cls, width: int, height: int, rgb: tuple[int, int, int]) -> "ImageBuffer":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:] = np.asarray(rgb, dtype=np.uint8)
        return cls(px)
