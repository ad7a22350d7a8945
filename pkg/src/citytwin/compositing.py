"""Texture and heatmap compositing.

Blending follows the progressive pairwise merge used for the ground texture:
the additive image is folded over the background with

    mix_a = 1 - (1 - a2)(1 - a1)
    mix_C = (C2*a2 + C1*a1*(1 - a2)) / mix_a

which is the non-premultiplied source-over operator.  mix_a = 0 (both layers
fully transparent) is defined as transparent black.  All math runs in floats;
quantization to 8 bits happens only at PNG/GIF emission.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image


class CompositingError(ValueError):
    pass


@dataclass(eq=False)
class RgbaImage:
    """Planar RGBA raster with unit-interval float channels, shape (h, w, 4)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 4:
            raise CompositingError(f"expected (h, w, 4) pixels, got {self.pixels.shape}")
        if np.nanmin(self.pixels) < -1e-9 or np.nanmax(self.pixels) > 1 + 1e-9:
            raise CompositingError("channels must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def filled(cls, height: int, width: int, rgba: tuple[float, float, float, float]) -> "RgbaImage":
        px = np.empty((height, width, 4), dtype=np.float64)
        px[:] = rgba
        return cls(px)

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)


def blend_pixel(background: np.ndarray, additive: np.ndarray) -> np.ndarray:
    """Merge one additive RGBA pixel (or array of them) over a background."""
    bg = np.asarray(background, dtype=np.float64)
    top = np.asarray(additive, dtype=np.float64)
    a1 = bg[..., 3]
    a2 = top[..., 3]
    # same value as 1 - (1-a2)(1-a1) without cancellation at tiny alphas
    mix_a = a2 + a1 * (1.0 - a2)
    out = np.zeros(np.broadcast(bg, top).shape, dtype=np.float64)
    safe = mix_a > 0.0
    denom = np.where(safe, mix_a, 1.0)
    # fully transparent top keeps the background bit-exact ((C*a1)/a1 would not)
    identity = (a2 == 0.0) & safe
    for c in range(3):
        blended = (top[..., c] * a2 + bg[..., c] * a1 * (1.0 - a2)) / denom
        out[..., c] = np.where(safe, np.where(identity, bg[..., c], blended), 0.0)
    out[..., 3] = np.where(safe, mix_a, 0.0)
    return out


def composite(stack: list[RgbaImage], opacities: list[float] | None = None) -> RgbaImage:
    """Fold a layer stack bottom-up; per-layer opacity scales that layer's alpha."""
    if not stack:
        raise CompositingError("empty layer stack")
    if opacities is None:
        opacities = [1.0] * len(stack)
    if len(opacities) != len(stack):
        raise CompositingError("one opacity per layer required")
    shape = stack[0].pixels.shape
    for img in stack[1:]:
        if img.pixels.shape != shape:
            raise CompositingError(
                f"layer shape {img.pixels.shape} does not match {shape}"
            )

    def with_opacity(img: RgbaImage, opacity: float) -> np.ndarray:
        px = img.pixels.copy()
        px[..., 3] = px[..., 3] * opacity
        return px

    acc = with_opacity(stack[0], opacities[0])
    for img, opacity in zip(stack[1:], opacities[1:]):
        acc = blend_pixel(acc, with_opacity(img, opacity))
    return RgbaImage(acc)


@dataclass(frozen=True)
class Colormap:
    """Ordered value->RGBA stops; values must be strictly increasing."""

    stops: tuple[tuple[float, tuple[float, float, float, float]], ...]
    mode: str = "linear"

    def __post_init__(self) -> None:
        if not self.stops:
            raise CompositingError("colormap needs at least one stop")
        values = [v for v, _ in self.stops]
        if any(b <= a for a, b in zip(values, values[1:])):
            raise CompositingError("colormap stops must be strictly increasing")
        if self.mode not in ("linear", "nearest"):
            raise CompositingError(f"unknown colormap mode {self.mode!r}")

    def lookup(self, values: np.ndarray) -> np.ndarray:
        """Map scalars to RGBA; NaN maps to transparent black."""
        v = np.asarray(values, dtype=np.float64)
        nan = ~np.isfinite(v)
        stop_vals = np.array([s[0] for s in self.stops])
        stop_rgba = np.array([s[1] for s in self.stops])
        filled = np.where(nan, stop_vals[0], v)
        out = np.empty(v.shape + (4,), dtype=np.float64)
        if self.mode == "nearest" or len(self.stops) == 1:
            idx = np.searchsorted(stop_vals, filled, side="left")
            idx = np.clip(idx, 0, len(stop_vals) - 1)
            left = np.clip(idx - 1, 0, len(stop_vals) - 1)
            # ties go to the lower stop
            use_left = np.abs(filled - stop_vals[left]) <= np.abs(stop_vals[idx] - filled)
            idx = np.where(use_left, left, idx)
            out = stop_rgba[idx]
        else:
            idx = np.clip(np.searchsorted(stop_vals, filled, side="right") - 1, 0, len(stop_vals) - 2)
            v0, v1 = stop_vals[idx], stop_vals[idx + 1]
            t = np.clip((filled - v0) / (v1 - v0), 0.0, 1.0)
            out = stop_rgba[idx] * (1.0 - t)[..., None] + stop_rgba[idx + 1] * t[..., None]
        out = out.copy()
        out[nan] = (0.0, 0.0, 0.0, 0.0)
        return out


def apply_colormap(raster: np.ndarray, cm: Colormap, opacity: float = 1.0) -> RgbaImage:
    """Colorize a scalar raster; global opacity multiplies the alpha channel."""
    if not (0.0 <= opacity <= 1.0):
        raise CompositingError(f"opacity out of range: {opacity}")
    rgba = cm.lookup(raster)
    rgba[..., 3] *= opacity
    return RgbaImage(rgba)


# --- emission ------------------------------------------------------------------

def to_png_bytes(img: RgbaImage | np.ndarray, *, rgb_only: bool = False) -> bytes:
    """Deterministic PNG bytes (no timestamps or ancillary chunks)."""
    arr = img.to_uint8() if isinstance(img, RgbaImage) else np.asarray(img, dtype=np.uint8)
    mode = "RGB" if (rgb_only or arr.shape[2] == 3) else "RGBA"
    if rgb_only and arr.shape[2] == 4:
        arr = arr[..., :3]
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def to_gif_bytes(frames: list[RgbaImage | np.ndarray], delay_cs: int) -> bytes:
    """Animated GIF with the stored per-frame delay in centiseconds.

    GIF's native delay unit is the centisecond, so the written delay is
    bit-exact to the stored value.
    """
    if not frames:
        raise CompositingError("empty frame list")
    if delay_cs < 0:
        raise CompositingError("negative frame delay")
    images = []
    for f in frames:
        arr = f.to_uint8() if isinstance(f, RgbaImage) else np.asarray(f, dtype=np.uint8)
        if arr.shape[2] == 4:
            arr = arr[..., :3]
        images.append(Image.fromarray(arr, mode="RGB"))
    buf = io.BytesIO()
    images[0].save(
        buf,
        format="GIF",
        save_all=True,
        append_images=images[1:],
        duration=delay_cs * 10,  # Pillow wants milliseconds
        loop=0,
    )
    return buf.getvalue()
