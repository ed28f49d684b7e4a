"""Raster primitives: 8-bit RGB/RGBA images, source-over compositing,
bilinear resize, and the PSNR metric.

Conventions, pinned so results are bit-identical across platforms:

  - images are numpy ``uint8`` arrays, ``(H, W, 3)`` or ``(H, W, 4)``, row-major
  - masks are ``(H, W) uint8``; a pixel counts as foreground at value >= 128
  - blending, mixing and resizing quantize with round-half-up at the end
  - bilinear sampling uses the align-corners convention

All functions are pure; nothing here mutates its inputs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import PlacementError

PSNR_CAP_DB = 99.0          # reported when MSE is exactly zero
FG_THRESHOLD = 128          # mask binarization: value >= 128 is foreground

# documentation aliases for the conventions above
Raster = np.ndarray         # (H, W, 3) or (H, W, 4) uint8
Mask = np.ndarray           # (H, W) uint8
LabelVector = dict          # class id -> weight, summing to 1


# ---------------------------------------------------------------------------
# validation helpers

def require_rgb(img: np.ndarray, name: str = "image") -> np.ndarray:
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise TypeError(f"{name}: expected uint8 samples, got {arr.dtype}")
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise TypeError(f"{name}: expected RGB shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name}: degenerate dimensions {arr.shape}")
    return arr


def require_rgba(img: np.ndarray, name: str = "sprite") -> np.ndarray:
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise TypeError(f"{name}: expected uint8 samples, got {arr.dtype}")
    if arr.ndim != 3 or arr.shape[2] != 4:
        raise TypeError(f"{name}: expected RGBA shape (H, W, 4), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name}: degenerate dimensions {arr.shape}")
    return arr


def require_mask(mask: np.ndarray, name: str = "mask") -> np.ndarray:
    arr = np.asarray(mask)
    if arr.dtype != np.uint8:
        raise TypeError(f"{name}: expected uint8 samples, got {arr.dtype}")
    if arr.ndim != 2:
        raise TypeError(f"{name}: expected single-channel shape (H, W), got {arr.shape}")
    return arr


def round_half_up(x) -> np.ndarray:
    """Round to nearest integer with halves rounded up (inputs >= 0)."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


# ---------------------------------------------------------------------------
# placement and compositing

@dataclass(frozen=True)
class Placement:
    """Where and how a sprite lands on a canvas.

    ``offset_x``/``offset_y`` locate the sprite's top-left corner on the
    canvas after scaling; negative offsets hang off the top/left edges.
    """

    scale: float
    flip_h: bool
    offset_x: int
    offset_y: int

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"placement scale must be > 0, got {self.scale}")


def scaled_size(w: int, h: int, scale: float) -> tuple[int, int]:
    """Pixel dimensions of a ``w x h`` sprite after scaling (never below 1)."""
    return (max(1, int(round_half_up(w * scale))),
            max(1, int(round_half_up(h * scale))))


def transform_sprite(sprite: np.ndarray, placement: Placement) -> np.ndarray:
    """Scale (bilinear, alpha treated like color) and optionally h-flip."""
    sprite = require_rgba(sprite)
    new_w, new_h = scaled_size(sprite.shape[1], sprite.shape[0], placement.scale)
    out = resize_bilinear(sprite, new_w, new_h)
    if placement.flip_h:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def composite_over(base: np.ndarray, sprite: np.ndarray,
                   placement: Placement) -> tuple[np.ndarray, float]:
    """Source-over blend of an RGBA sprite onto an opaque RGB base.

    Per pixel: ``out = round((a*s + (255-a)*b) / 255)`` with round-half-up,
    computed in exact integer arithmetic.  Returns the blended image and the
    alpha-weighted area (sum of alpha/255) of the sprite pixels that landed
    inside the base bounds.
    """
    base = require_rgb(base, "base")
    sp = transform_sprite(sprite, placement)
    bh, bw = base.shape[:2]
    sh, sw = sp.shape[:2]
    ox, oy = placement.offset_x, placement.offset_y

    x0, y0 = max(ox, 0), max(oy, 0)
    x1, y1 = min(ox + sw, bw), min(oy + sh, bh)
    if x0 >= x1 or y0 >= y1:
        raise PlacementError(
            f"sprite {sw}x{sh} at offset ({ox}, {oy}) does not overlap base {bw}x{bh}")

    region = sp[y0 - oy:y1 - oy, x0 - ox:x1 - ox]
    a = region[:, :, 3:4].astype(np.int32)
    s = region[:, :, :3].astype(np.int32)
    b = base[y0:y1, x0:x1].astype(np.int32)

    out = base.copy()
    out[y0:y1, x0:x1] = ((a * s + (255 - a) * b + 127) // 255).astype(np.uint8)
    visible_area = float(region[:, :, 3].sum(dtype=np.int64)) / 255.0
    return out, visible_area


def alpha_on_canvas(canvas_shape: tuple[int, int], sprite: np.ndarray,
                    placement: Placement) -> np.ndarray:
    """Canvas-sized float map of the sprite's alpha in [0, 1] (0 off-sprite).

    Used for occlusion-aware area accounting when several sprites share a
    canvas; matches the geometry of :func:`composite_over` exactly.
    """
    bh, bw = canvas_shape
    sp = transform_sprite(sprite, placement)
    sh, sw = sp.shape[:2]
    ox, oy = placement.offset_x, placement.offset_y
    x0, y0 = max(ox, 0), max(oy, 0)
    x1, y1 = min(ox + sw, bw), min(oy + sh, bh)
    out = np.zeros((bh, bw), dtype=np.float64)
    if x0 < x1 and y0 < y1:
        out[y0:y1, x0:x1] = sp[y0 - oy:y1 - oy, x0 - ox:x1 - ox, 3] / 255.0
    return out


def alpha_area(sprite: np.ndarray) -> float:
    """Alpha-weighted pixel area: sum of alpha/255 over all pixels."""
    sprite = require_rgba(sprite)
    return float(sprite[:, :, 3].sum(dtype=np.int64)) / 255.0


# ---------------------------------------------------------------------------
# resize

def resize_bilinear(img: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resize with align-corners sampling; alpha resampled like color.

    Identical target dimensions return a bit-exact copy.  A target dimension
    of 1 samples the source center line.
    """
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise TypeError(f"expected uint8 image, got {arr.dtype}")
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target dimensions must be >= 1, got {new_w}x{new_h}")

    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    h, w = arr.shape[:2]
    if (new_w, new_h) == (w, h):
        out = arr.copy()
        return out[:, :, 0] if squeeze else out

    xs = np.linspace(0.0, w - 1, new_w) if new_w > 1 else np.array([(w - 1) / 2.0])
    ys = np.linspace(0.0, h - 1, new_h) if new_h > 1 else np.array([(h - 1) / 2.0])
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]

    work = arr.astype(np.float64)
    top = work[np.ix_(y0, x0)] * (1 - fx) + work[np.ix_(y0, x1)] * fx
    bot = work[np.ix_(y1, x0)] * (1 - fx) + work[np.ix_(y1, x1)] * fx
    out = round_half_up(top * (1 - fy) + bot * fy).astype(np.uint8)
    return out[:, :, 0] if squeeze else out


# ---------------------------------------------------------------------------
# metric

def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over all channels.

    Identical inputs (MSE = 0) report the finite sentinel ``PSNR_CAP_DB`` so
    diversity summaries stay sortable.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(255.0 ** 2 / mse))


# ---------------------------------------------------------------------------
# soft labels

def label_from_areas(areas: dict[int, float]) -> dict[int, float]:
    """Normalize per-class pixel areas into a label vector summing to 1."""
    total = float(sum(areas.values()))
    if total <= 0:
        raise ValueError("cannot build a label from all-zero areas")
    return {cls: float(v) / total for cls, v in areas.items()}


def check_label(label: dict[int, float], tol: float = 1e-9) -> None:
    """Raise if weights leave [0, 1] or the vector does not sum to 1 +- tol."""
    for cls, w in label.items():
        if not 0.0 <= w <= 1.0:
            raise ValueError(f"label weight for class {cls} out of [0, 1]: {w}")
    total = sum(label.values())
    if abs(total - 1.0) > tol:
        raise ValueError(f"label weights sum to {total!r}, expected 1")


# ---------------------------------------------------------------------------
# PNG I/O

_MODE_BY_CHANNELS = {1: "L", 3: "RGB", 4: "RGBA"}


def read_png(path, mode: str) -> np.ndarray:
    """Read a PNG as uint8, converting to ``mode`` ('RGB', 'RGBA' or 'L')."""
    with Image.open(path) as im:
        if im.mode != mode:
            im = im.convert(mode)
        return np.asarray(im, dtype=np.uint8)


def write_png(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.uint8)
    channels = 1 if arr.ndim == 2 else arr.shape[2]
    Image.fromarray(arr, _MODE_BY_CHANNELS[channels]).save(Path(path), format="PNG")


def png_mode(path) -> str:
    with Image.open(path) as im:
        return im.mode


def encode_png(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.uint8)
    channels = 1 if arr.ndim == 2 else arr.shape[2]
    buf = io.BytesIO()
    Image.fromarray(arr, _MODE_BY_CHANNELS[channels]).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes, mode: str) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        if im.mode != mode:
            im = im.convert(mode)
        return np.asarray(im, dtype=np.uint8)
