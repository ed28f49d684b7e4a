"""Sprite-level editing: run the diffusion editor over RGBA cutouts.

Pixel sprites map to tensors in [-1, 1]; edited tensors map back with
round-half-up quantization.  The toy editor conditions on a per-class
RGBA mean-color identifier, which keeps edits class-consistent without any
pretrained model.  Edited sprites are re-cropped to a tight bounding box
before they become synthetic cutouts.
"""

from __future__ import annotations

import numpy as np

from .bank import Bank
from .decouple import Cdp, mask_bbox
from .diffusion import (EditConfig, Identifier, NoiseSchedule,
                        ToyGaussianDenoiser, sdedit)
from .errors import NoForegroundError
from .imagecore import alpha_area, round_half_up

TOY_EDIT_SIGMA0 = 0.5


def sprite_to_tensor(sprite: np.ndarray) -> np.ndarray:
    return sprite.astype(np.float64) / 127.5 - 1.0


def tensor_to_sprite(t: np.ndarray) -> np.ndarray:
    return np.clip(round_half_up((t + 1.0) * 127.5), 0, 255).astype(np.uint8)


def class_mean_identifier(bank: Bank, class_id: int) -> Identifier:
    """Mean RGBA color (tensor space) over the class's real cutouts: the toy
    stand-in for a learned class embedding.  Fixed dimension 4 per bank."""
    reals = bank.real_cdps(class_id)
    if not reals:
        raise ValueError(f"class {class_id} has no real cutout")
    acc = np.zeros(4)
    for rec in reals:
        acc += sprite_to_tensor(bank.load_cdp(rec).sprite).mean(axis=(0, 1))
    return Identifier(class_id=class_id, embedding=acc / len(reals))


def edit_sprite_toy(sprite: np.ndarray, identifier: Identifier, strength: float,
                    seed: int, sched: NoiseSchedule,
                    sigma0: float = TOY_EDIT_SIGMA0) -> np.ndarray:
    """Edit an RGBA sprite with the toy denoiser; dimensions are preserved
    and strength 0 round-trips the pixels exactly."""
    den = ToyGaussianDenoiser(sched, sigma0=sigma0)
    x0 = sprite_to_tensor(sprite)
    out = sdedit(x0, identifier, EditConfig(strength=strength, seed=seed),
                 den, sched)
    if strength == 0.0:
        return sprite.copy()
    return tensor_to_sprite(out)


def synthetic_from_sprite(edited: np.ndarray, parent: Cdp, parent_record_id: str,
                          strength: float) -> Cdp:
    """Tight-crop an edited sprite and wrap it as a synthetic cutout."""
    alpha = edited[:, :, 3]
    try:
        top, left, bottom, right = mask_bbox(alpha)
    except NoForegroundError:
        raise NoForegroundError("edit wiped out the foreground") from None
    sprite = np.ascontiguousarray(edited[top:bottom, left:right])
    return Cdp(sprite=sprite, class_id=parent.class_id, kind="synthetic",
               source_id=parent.source_id, alpha_area=alpha_area(sprite),
               parent_id=parent_record_id, strength_used=float(strength))


def derive_edit_seed(base_seed: int, record_id: str, variant: int) -> int:
    """Stable per-(cutout, variant) seed so edit runs are resumable."""
    digest = np.uint64(1469598103934665603)
    for b in f"{base_seed}:{record_id}:{variant}".encode():
        digest = np.uint64((int(digest) ^ b) * 1099511628211 % (1 << 64))
    return int(digest % np.uint64(2**63 - 1))
