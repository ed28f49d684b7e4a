"""Split an image plus segmentation masks into a class-dependent cutout
(CDP) and the leftover background with a hole (CIP).

Soft mask values survive into the cutout's alpha channel so feathered
segmentations composite without halos; the >=128 binarized view is used
only for bounding boxes and the cutout/background partition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoBackgroundError, NoForegroundError
from .imagecore import (FG_THRESHOLD, alpha_area, require_mask, require_rgb,
                        require_rgba)


@dataclass(frozen=True, eq=False)
class Cdp:
    """Class-dependent part: a tight RGBA cutout of one object.

    ``kind`` is ``"real"`` for cutouts taken straight from an image and
    ``"synthetic"`` for generated variants, which carry the id of the real
    cutout they were edited from plus the edit strength used.
    """

    sprite: np.ndarray
    class_id: int
    kind: str
    source_id: str
    alpha_area: float
    parent_id: str | None = None
    strength_used: float | None = None

    def __post_init__(self):
        require_rgba(self.sprite)
        if self.kind not in ("real", "synthetic"):
            raise ValueError(f"kind must be 'real' or 'synthetic', got {self.kind!r}")
        if self.kind == "real" and (self.parent_id is not None
                                    or self.strength_used is not None):
            raise ValueError("real cutouts carry no parent_id or strength_used")
        fg = self.sprite[:, :, 3] >= FG_THRESHOLD
        if not fg.any():
            raise NoForegroundError("cutout has no pixel with alpha >= 128")
        # tight bounding box: every border row/column holds a foreground pixel
        if not (fg[0].any() and fg[-1].any() and fg[:, 0].any() and fg[:, -1].any()):
            raise ValueError("cutout bounding box is not tight")


@dataclass(frozen=True, eq=False)
class CipWithHole:
    """Class-independent part before inpainting: the full image plus a hole
    mask (255 where object content was removed).

    :func:`extract_cip` always produces a hole covering a fraction in (0, 1)
    of the image; the type itself also admits a hole-free instance so the
    inpainting stage can state its idempotence contract.
    """

    pixels: np.ndarray
    hole: np.ndarray
    source_id: str
    source_class: int

    def __post_init__(self):
        require_rgb(self.pixels)
        require_mask(self.hole)
        if self.hole.shape != self.pixels.shape[:2]:
            raise ValueError(
                f"hole {self.hole.shape} does not match pixels {self.pixels.shape[:2]}")
        if bool((self.hole >= FG_THRESHOLD).all()):
            raise ValueError("hole covers the whole image")


def aggregate_masks(masks: list[np.ndarray]) -> np.ndarray:
    """Union of any number of soft masks: the pixelwise maximum."""
    if not masks:
        raise ValueError("need at least one mask")
    masks = [require_mask(m) for m in masks]
    shape = masks[0].shape
    for m in masks[1:]:
        if m.shape != shape:
            raise ValueError(f"mask shape mismatch: {m.shape} vs {shape}")
    return np.maximum.reduce(masks).astype(np.uint8)


def binarize(mask: np.ndarray) -> np.ndarray:
    """Hard 0/255 view of a soft mask at the >=128 threshold."""
    mask = require_mask(mask)
    return np.where(mask >= FG_THRESHOLD, 255, 0).astype(np.uint8)


def mask_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    """(top, left, bottom, right) half-open bounds of the binarized mask."""
    fg = require_mask(mask) >= FG_THRESHOLD
    rows = np.flatnonzero(fg.any(axis=1))
    cols = np.flatnonzero(fg.any(axis=0))
    if rows.size == 0:
        raise NoForegroundError("mask selects no foreground pixel")
    return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


def _check_mask_extremes(mask: np.ndarray) -> None:
    fg = mask >= FG_THRESHOLD
    if not fg.any():
        raise NoForegroundError("mask selects no foreground pixel")
    if fg.all():
        raise NoBackgroundError("mask covers the whole image")


def extract_cdp(image: np.ndarray, mask: np.ndarray, class_id: int,
                source_id: str = "") -> Cdp:
    """Cut the masked object out as a tight RGBA sprite, mask as alpha."""
    image = require_rgb(image)
    mask = require_mask(mask)
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask {mask.shape} does not match image {image.shape[:2]}")
    _check_mask_extremes(mask)

    top, left, bottom, right = mask_bbox(mask)
    sprite = np.dstack([image[top:bottom, left:right],
                        mask[top:bottom, left:right]]).astype(np.uint8)
    return Cdp(sprite=sprite, class_id=int(class_id), kind="real",
               source_id=source_id, alpha_area=alpha_area(sprite))


def extract_cip(image: np.ndarray, mask: np.ndarray, class_id: int,
                source_id: str = "") -> CipWithHole:
    """Keep the whole image and mark the object region as the hole to fill."""
    image = require_rgb(image)
    mask = require_mask(mask)
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask {mask.shape} does not match image {image.shape[:2]}")
    _check_mask_extremes(mask)
    return CipWithHole(pixels=image.copy(), hole=binarize(mask),
                       source_id=source_id, source_class=int(class_id))
