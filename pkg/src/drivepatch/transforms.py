"""Pinhole projection, patch compositing, and viewing-condition transforms.

The compositor quantizes the patch, resamples it to the projected rectangle,
and pastes it into a copy of the frame. Resampling uses bilinear
interpolation when magnifying and exact pixel-area averaging when minifying;
plain bilinear minification would sample only a sparse lattice of patch
pixels, which both aliases and makes the rendered appearance depend on
viewing distance in a physically meaningless way.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import ImageBuffer, round_half_away
from .patch import Patch, quantize_patch

# Viewing-condition jitter bounds: translations in pixels, brightness as a
# multiplicative factor, contrast as an additive shift in normalized
# intensity.
JITTER_PX = 5
BRIGHTNESS_RANGE = (0.9, 1.1)
CONTRAST_RANGE = (-0.05, 0.05)


@dataclass(frozen=True)
class CameraModel:
    """Forward-facing pinhole camera; principal point at the image center."""

    image_width: int
    image_height: int
    horizontal_fov_deg: float = 90.0

    def __post_init__(self) -> None:
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("camera resolution must be at least 1x1")
        if not (0.0 < self.horizontal_fov_deg < 180.0):
            raise ValueError("horizontal FOV must be in (0, 180) degrees")

    @property
    def focal_px(self) -> float:
        return self.image_width / (2.0 * math.tan(math.radians(self.horizontal_fov_deg) / 2.0))


@dataclass(frozen=True)
class PatchPlacement:
    """Patch mount pose relative to the camera: lateral and vertical offsets
    of the patch center from the optical axis, and distance along it."""

    lateral_m: float
    height_m: float
    distance_m: float

    def __post_init__(self) -> None:
        if not self.distance_m > 0:
            raise ValueError("placement distance must be strictly positive")


@dataclass(frozen=True)
class Rect:
    """Integer pixel rectangle (x, y) top-left, width/height in pixels."""

    x: int
    y: int
    w: int
    h: int

    @property
    def is_empty(self) -> bool:
        return self.w <= 0 or self.h <= 0

    def intersect(self, other: "Rect") -> "Rect | None":
        x0 = max(self.x, other.x)
        y0 = max(self.y, other.y)
        x1 = min(self.x + self.w, other.x + other.w)
        y1 = min(self.y + self.h, other.y + other.h)
        if x1 <= x0 or y1 <= y0:
            return None
        return Rect(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class TransformSample:
    """One draw of viewing-condition jitter."""

    dx: int
    dy: int
    brightness: float
    contrast_shift: float


IDENTITY_TRANSFORM = TransformSample(0, 0, 1.0, 0.0)


def project_rect(
    cam: CameraModel, place: PatchPlacement, phys_w: float, phys_h: float
) -> Rect:
    """Projected pixel rectangle of a frontal planar object centered at the
    placement point; may extend off-frame."""
    if not place.distance_m > 0:
        raise ValueError("distance must be strictly positive")
    f = cam.focal_px
    w = int(round_half_away(f * phys_w / place.distance_m))
    h = int(round_half_away(f * phys_h / place.distance_m))
    cx = cam.image_width / 2.0
    cy = cam.image_height / 2.0
    u = cx + f * place.lateral_m / place.distance_m
    v = cy - f * place.height_m / place.distance_m
    x = int(round_half_away(u - w / 2.0))
    y = int(round_half_away(v - h / 2.0))
    return Rect(x, y, w, h)


def project_patch_rect(cam: CameraModel, place: PatchPlacement, patch: Patch) -> Rect:
    """Projected pixel rectangle of the patch; may extend off-frame."""
    return project_rect(cam, place, patch.physical_width, patch.physical_height)


def _resize_bilinear(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize with half-pixel centers and edge clamping.

    Corner samples land exactly on corner pixels, so magnifying reproduces
    the source corners bit-exactly.
    """
    in_h, in_w = values.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0.0, in_h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    rows0 = values[y0]
    rows1 = values[y1]
    top = rows0[:, x0] * (1.0 - fx) + rows0[:, x1] * fx
    bot = rows1[:, x0] * (1.0 - fx) + rows1[:, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _resize_area(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact box-filter resize: each output pixel is the mean of the source
    over its fractional footprint, computed from an integral image."""
    in_h, in_w = values.shape[:2]
    integral = np.zeros((in_h + 1, in_w + 1, values.shape[2]), dtype=np.float64)
    np.cumsum(np.cumsum(values, axis=0), axis=1, out=integral[1:, 1:])

    def _axis_samples(n_out: int, n_in: int) -> np.ndarray:
        return np.arange(n_out + 1) * (n_in / n_out)

    def _interp(axis_pts: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
        idx = np.clip(np.floor(axis_pts).astype(np.intp), 0, arr.shape[axis] - 2)
        frac = axis_pts - idx
        lo = np.take(arr, idx, axis=axis)
        hi = np.take(arr, idx + 1, axis=axis)
        shape = [1] * arr.ndim
        shape[axis] = -1
        f = frac.reshape(shape)
        return lo * (1.0 - f) + hi * f

    ys = _axis_samples(out_h, in_h)
    xs = _axis_samples(out_w, in_w)
    s = _interp(ys, integral, axis=0)
    s = _interp(xs, s, axis=1)
    box = s[1:, 1:] - s[:-1, 1:] - s[1:, :-1] + s[:-1, :-1]
    area = (in_h / out_h) * (in_w / out_w)
    return box / area


def resample(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a (h, w, c) float array: bilinear up, area-average down."""
    in_h, in_w = values.shape[:2]
    if out_h >= in_h and out_w >= in_w:
        return _resize_bilinear(values, out_h, out_w)
    return _resize_area(values, out_h, out_w)


def composite_patch(
    frame: ImageBuffer, patch: Patch, rect: Rect
) -> tuple[ImageBuffer, Rect | None]:
    """Paste the quantized patch into the frame at rect.

    Returns the new frame and the visible (clipped) rectangle, or the input
    frame unchanged and None when the rect lies fully off-frame.
    """
    frame_rect = Rect(0, 0, frame.width, frame.height)
    visible = None if rect.is_empty else rect.intersect(frame_rect)
    if visible is None:
        return frame, None
    quantized = quantize_patch(patch).pixels.astype(np.float64)
    resized = resample(quantized, rect.h, rect.w)
    bytes_out = np.clip(round_half_away(resized), 0, 255).astype(np.uint8)
    out = frame.pixels.copy()
    sub = bytes_out[
        visible.y - rect.y : visible.y - rect.y + visible.h,
        visible.x - rect.x : visible.x - rect.x + visible.w,
    ]
    out[visible.y : visible.y + visible.h, visible.x : visible.x + visible.w] = sub
    return ImageBuffer(out), visible


def sample_transform(gen: np.random.Generator) -> TransformSample:
    """Draw one jitter sample; sequential draws from the same generator form
    the deterministic per-candidate transform sequence."""
    dx = int(gen.integers(-JITTER_PX, JITTER_PX + 1))
    dy = int(gen.integers(-JITTER_PX, JITTER_PX + 1))
    brightness = float(gen.uniform(*BRIGHTNESS_RANGE))
    contrast = float(gen.uniform(*CONTRAST_RANGE))
    return TransformSample(dx, dy, brightness, contrast)


def apply_transform(img: ImageBuffer, t: TransformSample) -> ImageBuffer:
    """Translate with replicate-edge fill, then scale/shift intensities in
    normalized [0, 1] space and requantize."""
    px = img.pixels
    h, w = px.shape[:2]
    if t.dx != 0 or t.dy != 0:
        rows = np.clip(np.arange(h) - t.dy, 0, h - 1)
        cols = np.clip(np.arange(w) - t.dx, 0, w - 1)
        px = px[rows][:, cols]
    # 256-entry LUT: cheap and makes the photometric map exactly reproducible.
    levels = np.arange(256, dtype=np.float64) / 255.0
    mapped = np.clip(t.brightness * levels + t.contrast_shift, 0.0, 1.0) * 255.0
    lut = round_half_away(mapped).astype(np.uint8)
    return ImageBuffer(lut[px])
