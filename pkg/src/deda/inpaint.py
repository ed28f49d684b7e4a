"""Fill the hole in a CIP so every banked background is hole-free.

The fill is a validity-weighted pull-push pyramid: downsampling averages
only known pixels and propagates a validity weight; upsampling writes
values back into hole pixels only.  A final single-level Laplacian blend
attenuates high-frequency detail in a narrow band around the hole
boundary so the seam does not show.  Pixels farther than ``blend_band``
from the hole are bit-identical to the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decouple import CipWithHole
from .errors import DegenerateHoleError
from .imagecore import FG_THRESHOLD, require_rgb, round_half_up

DEGENERATE_HOLE_FRAC = 0.98


@dataclass(frozen=True, eq=False)
class Cip:
    """Class-independent part: a hole-free RGB background."""

    pixels: np.ndarray
    source_id: str
    source_class: int

    def __post_init__(self):
        require_rgb(self.pixels)


@dataclass(frozen=True)
class PyramidConfig:
    """``max_levels`` caps pyramid depth (None: descend until the hole is
    closed or the coarsest level is <= 2x2).  ``blend_band`` is the width in
    pixels of the seam-smoothing band around the hole boundary."""

    max_levels: int | None = None
    blend_band: int = 4

    def __post_init__(self):
        if self.max_levels is not None and self.max_levels < 1:
            raise ValueError("max_levels must be >= 1")
        if self.blend_band < 0:
            raise ValueError("blend_band must be >= 0")


def _downsample_weighted(color: np.ndarray, weight: np.ndarray):
    """2x box downsample averaging only valid pixels (odd dims padded with
    zero weight so padding never contributes)."""
    h, w = weight.shape
    ph, pw = (h + 1) // 2 * 2, (w + 1) // 2 * 2
    cpad = np.zeros((ph, pw, color.shape[2]), dtype=np.float64)
    wpad = np.zeros((ph, pw), dtype=np.float64)
    cpad[:h, :w] = color * weight[:, :, None]
    wpad[:h, :w] = weight
    csum = cpad[0::2, 0::2] + cpad[1::2, 0::2] + cpad[0::2, 1::2] + cpad[1::2, 1::2]
    wsum = wpad[0::2, 0::2] + wpad[1::2, 0::2] + wpad[0::2, 1::2] + wpad[1::2, 1::2]
    cnew = np.where(wsum[:, :, None] > 0, csum / np.maximum(wsum, 1e-12)[:, :, None], 0.0)
    return cnew, wsum / 4.0


def _upsample_halfpixel(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear upsample with half-pixel centers, matching the box grid."""
    h, w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.intp)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def _dilate3x3(mask: np.ndarray) -> np.ndarray:
    p = np.pad(mask, 1, mode="constant")
    out = np.zeros_like(mask)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            out |= p[dy:dy + mask.shape[0], dx:dx + mask.shape[1]]
    return out


def _chebyshev_distance(hole: np.ndarray, cap: int) -> np.ndarray:
    """Distance to the hole set, exact up to ``cap`` (cap+1 beyond)."""
    dist = np.full(hole.shape, cap + 1, dtype=np.int32)
    dist[hole] = 0
    covered = hole.copy()
    for k in range(1, cap + 1):
        grown = _dilate3x3(covered)
        dist[grown & ~covered] = k
        covered = grown
    return dist


def _tent_blur(img: np.ndarray) -> np.ndarray:
    """Two passes of a 3x3 box filter (edge-replicated): a tent low-pass."""
    out = img
    for _ in range(2):
        p = np.pad(out, ((1, 1), (1, 1), (0, 0)), mode="edge")
        out = (p[:-2, :-2] + p[:-2, 1:-1] + p[:-2, 2:]
               + p[1:-1, :-2] + p[1:-1, 1:-1] + p[1:-1, 2:]
               + p[2:, :-2] + p[2:, 1:-1] + p[2:, 2:]) / 9.0
    return out


def inpaint_pyramid(cip: CipWithHole, cfg: PyramidConfig = PyramidConfig()) -> Cip:
    """Fill the hole from the surrounding image statistics.

    Hole-free inputs come back bit-identical.  Holes covering >= 98% of the
    image raise :class:`DegenerateHoleError`; callers fall back to
    :func:`fill_mean_color`.
    """
    hole = cip.hole >= FG_THRESHOLD
    if not hole.any():
        return Cip(pixels=cip.pixels.copy(), source_id=cip.source_id,
                   source_class=cip.source_class)
    frac = float(hole.mean())
    if frac >= DEGENERATE_HOLE_FRAC:
        raise DegenerateHoleError(f"hole covers {frac:.3f} of the image")

    # pull: average known pixels only, carrying validity down the pyramid
    colors = [cip.pixels.astype(np.float64)]
    weights = [1.0 - hole.astype(np.float64)]
    while weights[-1].min() == 0.0 and min(weights[-1].shape) > 2:
        if cfg.max_levels is not None and len(colors) >= cfg.max_levels:
            break
        cnew, wnew = _downsample_weighted(colors[-1], weights[-1])
        colors.append(cnew)
        weights.append(wnew)

    filled = colors[-1]
    w_top = weights[-1]
    if w_top.min() == 0.0:
        # depth capped with the hole still open: seed the rest with the mean
        mean = filled[w_top > 0].mean(axis=0)
        filled = np.where(w_top[:, :, None] > 0, filled, mean)

    # push: each level keeps its known content by validity and takes the
    # upsampled coarse fill elsewhere; at level 0 only hole pixels change
    for lvl in range(len(colors) - 2, -1, -1):
        th, tw = weights[lvl].shape
        up = _upsample_halfpixel(filled, th, tw)
        w = np.clip(weights[lvl], 0.0, 1.0)[:, :, None]
        filled = w * colors[lvl] + (1.0 - w) * up

    # boundary blend: attenuate the Laplacian (detail) component inside the
    # hole and across blend_band known pixels around it
    band = cfg.blend_band
    if band > 0:
        dist = _chebyshev_distance(hole, band)
        ramp = np.clip((band + 1 - dist) / (band + 1), 0.0, 1.0)
        ramp[hole] = 1.0
        low = _tent_blur(filled)
        filled = filled - ramp[:, :, None] * (filled - low)
        touched = dist <= band
    else:
        touched = hole

    out = cip.pixels.copy()
    out[touched] = np.clip(round_half_up(filled[touched]), 0, 255).astype(np.uint8)
    return Cip(pixels=out, source_id=cip.source_id, source_class=cip.source_class)


def fill_mean_color(cip: CipWithHole, noise_sigma: float = 0.0,
                    rng: np.random.Generator | None = None) -> Cip:
    """Degenerate-hole fallback: hole pixels take the mean color of the known
    pixels plus zero-mean uniform noise of half-width ``noise_sigma``."""
    hole = cip.hole >= FG_THRESHOLD
    out = cip.pixels.copy()
    if not hole.any():
        return Cip(pixels=out, source_id=cip.source_id, source_class=cip.source_class)
    known = cip.pixels[~hole]
    if known.size == 0:
        raise ValueError("no known pixels to take a mean from")
    mean = known.astype(np.float64).mean(axis=0)
    fill = np.broadcast_to(mean, (int(hole.sum()), 3)).copy()
    if noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        fill += rng.uniform(-noise_sigma, noise_sigma, size=fill.shape)
    out[hole] = np.clip(round_half_up(fill), 0, 255).astype(np.uint8)
    return Cip(pixels=out, source_id=cip.source_id, source_class=cip.source_class)
