"""Pixel-level mixing baselines for the experiment harness.

``mixup`` linearly combines two images and their labels; ``cutmix`` pastes a
rectangular patch of one image into another and weighs the labels by the
realized patch area.  The mixing coefficient is drawn Uniform(0, 1) unless
supplied (a Beta draw can be passed in by callers that want one).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import check_label, round_half_up


@dataclass(frozen=True, eq=False)
class MixResult:
    image: np.ndarray
    label: dict[int, float]
    lam: float

    def __post_init__(self):
        check_label(self.label)


def _mixed_label(class_a: int, class_b: int, lam: float) -> dict[int, float]:
    if class_a == class_b:
        return {int(class_a): 1.0}
    label = {int(class_a): lam, int(class_b): 1.0 - lam}
    return {cls: w for cls, w in label.items() if w > 0.0}


def mixup(a: tuple[np.ndarray, int], b: tuple[np.ndarray, int],
          lam: float) -> MixResult:
    """Pixelwise ``lam*a + (1-lam)*b`` with round-half-up quantization."""
    img_a, class_a = a
    img_b, class_b = b
    if img_a.shape != img_b.shape:
        raise ValueError(f"shape mismatch: {img_a.shape} vs {img_b.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    mixed = round_half_up(lam * img_a.astype(np.float64)
                          + (1.0 - lam) * img_b.astype(np.float64))
    return MixResult(image=mixed.astype(np.uint8),
                     label=_mixed_label(class_a, class_b, lam), lam=float(lam))


def cutmix(a: tuple[np.ndarray, int], b: tuple[np.ndarray, int],
           rng: np.random.Generator, lam: float | None = None) -> MixResult:
    """Cut a patch of area ratio (1 - lam) from b into a, centered at a
    uniform position and clipped to bounds; the final lam is recomputed from
    the clipped patch area so label weights match the visible pixels exactly."""
    img_a, class_a = a
    img_b, class_b = b
    if img_a.shape != img_b.shape:
        raise ValueError(f"shape mismatch: {img_a.shape} vs {img_b.shape}")
    lam = float(rng.uniform()) if lam is None else float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")

    h, w = img_a.shape[:2]
    ratio = np.sqrt(1.0 - lam)
    ph = int(round_half_up(h * ratio))
    pw = int(round_half_up(w * ratio))
    cy = int(rng.integers(h))
    cx = int(rng.integers(w))
    y0, y1 = max(0, cy - ph // 2), min(h, cy - ph // 2 + ph)
    x0, x1 = max(0, cx - pw // 2), min(w, cx - pw // 2 + pw)

    out = img_a.copy()
    out[y0:y1, x0:x1] = img_b[y0:y1, x0:x1]
    lam_final = 1.0 - ((y1 - y0) * (x1 - x0)) / (h * w)
    return MixResult(image=out, label=_mixed_label(class_a, class_b, lam_final),
                     lam=lam_final)
