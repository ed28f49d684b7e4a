"""Online randomized combination: paste a sampled cutout onto a sampled
background at a random scale/flip/position, occasionally mix in a second
cutout from another class, and emit the image with an area-proportional
soft label.

Random transforms are pinned to uniform scale and horizontal flip.  When two
cutouts share a canvas the later one occludes the earlier, and label weights
use the *visible* alpha-weighted areas, i.e. what the classifier actually
sees.  Every sample records provenance (background id, cutout ids, exact
placements) sufficient to replay it bit-for-bit.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bank import Bank, load_bank, sample_cdp_record, sample_cip_record
from .decouple import Cdp
from .errors import PlacementError, RetryExhaustedError
from .imagecore import (Placement, alpha_on_canvas, check_label,
                        composite_over, label_from_areas, scaled_size,
                        transform_sprite, write_png)
from .inpaint import Cip

log = logging.getLogger(__name__)

MAX_OFFSET_ATTEMPTS = 100
MAX_SAMPLE_RETRIES = 10


@dataclass(frozen=True)
class CombinerPolicy:
    p_aug: float = 0.5
    p_syn: float = 0.25
    p_mix: float = 0.5
    scale_range: tuple[float, float] = (0.5, 1.0)   # fraction of fit-to-canvas
    min_visible_frac: float = 0.7                   # tau
    hflip_prob: float = 0.5
    strict_inter_class_cip: bool = True

    def __post_init__(self):
        for name in ("p_aug", "p_syn", "p_mix", "hflip_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        lo, hi = self.scale_range
        if not 0.0 < lo <= hi:
            raise ValueError(f"need 0 < lo <= hi in scale_range, got {self.scale_range}")
        if not 0.0 < self.min_visible_frac <= 1.0:
            raise ValueError(f"min_visible_frac must be in (0, 1], got "
                             f"{self.min_visible_frac}")


@dataclass(frozen=True, eq=False)
class AugmentedSample:
    image: np.ndarray
    label: dict[int, float]
    provenance: dict

    def __post_init__(self):
        check_label(self.label)


def _draw_placement(canvas_hw: tuple[int, int], cdp: Cdp, policy: CombinerPolicy,
                    rng: np.random.Generator) -> Placement:
    """Draw scale/flip/offset for one sprite.

    Scale is uniform in ``scale_range`` relative to the largest scale at
    which the sprite still fits the canvas.  Offsets are rejection-sampled
    until at least ``min_visible_frac`` of the sprite's alpha-area lands in
    bounds; after MAX_OFFSET_ATTEMPTS the placement clamps to fully inside.
    """
    ch, cw = canvas_hw
    if ch < 8 or cw < 8:
        raise PlacementError(f"canvas {cw}x{ch} is smaller than 8x8")
    sh, sw = cdp.sprite.shape[:2]
    fit = min(cw / sw, ch / sh)
    lo, hi = policy.scale_range
    scale = float(rng.uniform(lo, hi)) * fit
    flip = bool(rng.random() < policy.hflip_prob)

    new_w, new_h = scaled_size(sw, sh, scale)
    if new_w > cw or new_h > ch:
        raise PlacementError(
            f"sprite {sw}x{sh} does not fit canvas {cw}x{ch} at scale {scale:.4f}")
    scaled_alpha = transform_sprite(cdp.sprite, Placement(scale, flip, 0, 0))[:, :, 3]
    total = float(scaled_alpha.sum(dtype=np.int64))

    for _ in range(MAX_OFFSET_ATTEMPTS):
        ox = int(rng.integers(1 - new_w, cw))
        oy = int(rng.integers(1 - new_h, ch))
        x0, y0 = max(ox, 0), max(oy, 0)
        x1, y1 = min(ox + new_w, cw), min(oy + new_h, ch)
        inside = float(scaled_alpha[y0 - oy:y1 - oy, x0 - ox:x1 - ox]
                       .sum(dtype=np.int64))
        frac = inside / total if total > 0 else 1.0
        if frac >= policy.min_visible_frac - 1e-12:
            return Placement(scale, flip, ox, oy)
    ox = int(rng.integers(0, cw - new_w + 1))
    oy = int(rng.integers(0, ch - new_h + 1))
    return Placement(scale, flip, ox, oy)


def place_cdp(cip: Cip, cdp: Cdp, policy: CombinerPolicy,
              rng: np.random.Generator) -> tuple[np.ndarray, float, Placement]:
    """Composite one cutout onto the background at a random placement."""
    placement = _draw_placement(cip.pixels.shape[:2], cdp, policy, rng)
    out, visible = composite_over(cip.pixels, cdp.sprite, placement)
    return out, visible, placement


def occlusion_areas(alpha_under: np.ndarray, alpha_over: np.ndarray) -> tuple[float, float]:
    """Visible alpha-weighted areas when ``over`` is composited above
    ``under`` on the same canvas: the under sprite keeps only the alpha mass
    the over sprite lets through."""
    visible_under = float((alpha_under * (1.0 - alpha_over)).sum())
    visible_over = float(alpha_over.sum())
    return visible_under, visible_over


def mix_two_cdps(cip: Cip, cdp_a: Cdp, cdp_b: Cdp, policy: CombinerPolicy,
                 rng: np.random.Generator
                 ) -> tuple[np.ndarray, dict[int, float], list[Placement]]:
    """Place two cutouts of different classes (b over a) and report each
    one's visible area."""
    if cdp_a.class_id == cdp_b.class_id:
        raise ValueError("mixing requires two different classes")
    canvas_hw = cip.pixels.shape[:2]
    pl_a = _draw_placement(canvas_hw, cdp_a, policy, rng)
    pl_b = _draw_placement(canvas_hw, cdp_b, policy, rng)
    out, _ = composite_over(cip.pixels, cdp_a.sprite, pl_a)
    out, _ = composite_over(out, cdp_b.sprite, pl_b)
    map_a = alpha_on_canvas(canvas_hw, cdp_a.sprite, pl_a)
    map_b = alpha_on_canvas(canvas_hw, cdp_b.sprite, pl_b)
    vis_a, vis_b = occlusion_areas(map_a, map_b)
    areas = {cdp_a.class_id: vis_a, cdp_b.class_id: vis_b}
    return out, areas, [pl_a, pl_b]


def _placement_dict(p: Placement) -> dict:
    return {"scale": p.scale, "flip_h": p.flip_h,
            "offset_x": p.offset_x, "offset_y": p.offset_y}


def _placement_from_dict(d: dict) -> Placement:
    return Placement(scale=float(d["scale"]), flip_h=bool(d["flip_h"]),
                     offset_x=int(d["offset_x"]), offset_y=int(d["offset_y"]))


def make_augmented_sample(bank: Bank, class_hint: int, policy: CombinerPolicy,
                          rng: np.random.Generator,
                          seed_note=None) -> AugmentedSample:
    """One combined sample for ``class_hint``.

    Draw order per attempt: cutout record, background record, mix decision,
    then (for mixes) the partner class and its cutout record, then the
    placements.  Re-draws everything up to MAX_SAMPLE_RETRIES times if every
    placed cutout ended up with zero visible area.
    """
    classes_with_reals = sorted({r.class_id for r in bank.cdp_records
                                 if r.kind == "real"})
    for _ in range(MAX_SAMPLE_RETRIES):
        rec_a = sample_cdp_record(bank, class_hint, policy.p_syn, rng)
        cdp_a = bank.load_cdp(rec_a)
        rec_cip = sample_cip_record(bank, class_hint,
                                    policy.strict_inter_class_cip, rng)
        cip = bank.load_cip(rec_cip)
        do_mix = bool(rng.random() < policy.p_mix)
        others = [c for c in classes_with_reals if c != class_hint]

        if do_mix and others:
            other = others[int(rng.integers(len(others)))]
            rec_b = sample_cdp_record(bank, other, policy.p_syn, rng)
            cdp_b = bank.load_cdp(rec_b)
            image, areas, placements = mix_two_cdps(cip, cdp_a, cdp_b, policy, rng)
            if sum(areas.values()) <= 0.0:
                continue
            label = label_from_areas({c: a for c, a in areas.items() if a > 0.0})
            cdp_provs = [
                {"id": rec_a.id, "kind": rec_a.kind, "class_id": rec_a.class_id,
                 "placement": _placement_dict(placements[0])},
                {"id": rec_b.id, "kind": rec_b.kind, "class_id": rec_b.class_id,
                 "placement": _placement_dict(placements[1])},
            ]
        else:
            if do_mix:
                log.info("no partner class available; emitting unmixed sample")
            image, visible, placement = place_cdp(cip, cdp_a, policy, rng)
            if visible <= 0.0:
                continue
            label = {class_hint: 1.0}
            cdp_provs = [{"id": rec_a.id, "kind": rec_a.kind,
                          "class_id": rec_a.class_id,
                          "placement": _placement_dict(placement)}]

        provenance = {"cip_id": rec_cip.id, "cdps": cdp_provs, "seed": seed_note}
        return AugmentedSample(image=image, label=label, provenance=provenance)
    raise RetryExhaustedError(
        f"no visible cutout after {MAX_SAMPLE_RETRIES} re-draws")


def next_training_sample(real_item: tuple[np.ndarray, int], bank: Bank,
                         policy: CombinerPolicy,
                         rng: np.random.Generator) -> AugmentedSample:
    """With probability 1 - p_aug pass the real image through one-hot;
    otherwise emit a combined sample for the real item's class."""
    image, class_id = real_item
    if rng.random() < policy.p_aug:
        return make_augmented_sample(bank, int(class_id), policy, rng)
    return AugmentedSample(image=image, label={int(class_id): 1.0},
                           provenance={"real": True, "class_id": int(class_id),
                                       "seed": None})


def replay_sample(bank: Bank, provenance: dict) -> tuple[np.ndarray, dict[int, float]]:
    """Rebuild a sample's image and label exactly from its provenance."""
    cip = bank.load_cip(provenance["cip_id"])
    canvas_hw = cip.pixels.shape[:2]
    image = cip.pixels
    entries = []
    for item in provenance["cdps"]:
        cdp = bank.load_cdp(item["id"])
        placement = _placement_from_dict(item["placement"])
        image, _ = composite_over(image, cdp.sprite, placement)
        entries.append((cdp, placement))
    if len(entries) == 1:
        label = {entries[0][0].class_id: 1.0}
    else:
        (cdp_a, pl_a), (cdp_b, pl_b) = entries
        map_a = alpha_on_canvas(canvas_hw, cdp_a.sprite, pl_a)
        map_b = alpha_on_canvas(canvas_hw, cdp_b.sprite, pl_b)
        vis_a, vis_b = occlusion_areas(map_a, map_b)
        areas = {cdp_a.class_id: vis_a, cdp_b.class_id: vis_b}
        label = label_from_areas({c: a for c, a in areas.items() if a > 0.0})
    return image, label


# ---------------------------------------------------------------------------
# batch emission

def _emit_chunk(root: str, out_dir: str, seed: int, indices: list[int],
                policy: CombinerPolicy) -> list[dict]:
    bank = load_bank(root)
    classes = sorted({r.class_id for r in bank.cdp_records if r.kind == "real"})
    records = []
    for i in indices:
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        class_hint = classes[int(rng.integers(len(classes)))]
        sample = make_augmented_sample(bank, class_hint, policy, rng,
                                       seed_note=[seed, i])
        name = f"{i:06d}.png"
        write_png(Path(out_dir) / name, sample.image)
        records.append({
            "file": name,
            "labels": [{"class": int(c), "weight": float(w)}
                       for c, w in sorted(sample.label.items())],
            "provenance": sample.provenance,
        })
    return records


def emit_batch(bank: Bank, out_dir, count: int, policy: CombinerPolicy,
               seed: int, workers: int = 1) -> list[dict]:
    """Write ``count`` samples as ``<index>.png`` plus one labels.jsonl line
    per sample.  Each sample owns the rng stream (seed, index), so output is
    byte-identical for any worker count."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    indices = list(range(count))
    if workers <= 1 or count == 0:
        records = _emit_chunk(str(bank.root), str(out_dir), seed, indices, policy)
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        records = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_emit_chunk, str(bank.root), str(out_dir),
                                   seed, chunk, policy)
                       for chunk in chunks if chunk]
            for fut in futures:
                records.extend(fut.result())
        records.sort(key=lambda r: r["file"])

    with open(out_dir / "labels.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return records
