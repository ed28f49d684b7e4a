"""Desk-scale experiment rig.

A procedural shapes dataset with a controllable spurious background
correlation plays the role of a background-robustness benchmark: each class
has its own background texture during training (correlation strength
``rho``), and evaluation compares accuracy on in-distribution images against
the same images re-rendered over a different class's texture.  A linear
softmax classifier on raw pixels is enough to expose the effect.

The rig also produces the edit-diversity report: mean PSNR between real
cutouts and their toy-edited variants across edit strengths.
"""

from __future__ import annotations

import json
import time
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bank import Bank, ClassInfo
from .combiner import CombinerPolicy, next_training_sample
from .decouple import extract_cdp, extract_cip
from .diffusion import NoiseSchedule, build_schedule
from .editing import (TOY_EDIT_SIGMA0, class_mean_identifier, derive_edit_seed,
                      edit_sprite_toy, synthetic_from_sprite)
from .errors import DegenerateHoleError, DivergedError
from .imagecore import psnr
from .inpaint import PyramidConfig, fill_mean_color, inpaint_pyramid
from .mixers import cutmix

SHAPE_NAMES = ("disk", "square", "triangle", "cross")
TEXTURE_NAMES = ("stripes", "checker", "noise", "gradient")
CLASS_COLORS = ((214, 58, 46), (64, 196, 82), (66, 92, 230), (232, 204, 52))


# ---------------------------------------------------------------------------
# dataset

@dataclass(frozen=True)
class ShapesConfig:
    canvas: int = 64
    n_classes: int = 4
    m_per_class: int = 50
    test_per_class: int = 25
    rho: float = 1.0                 # P(background texture matches the class)
    textures: tuple[str, ...] = TEXTURE_NAMES
    color_jitter: int = 18
    seed: int = 0

    def __post_init__(self):
        if self.n_classes > len(self.textures) or self.n_classes > len(SHAPE_NAMES):
            raise ValueError("more classes than shapes/textures available")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")


@dataclass(frozen=True)
class ShapeSpec:
    shape_id: int
    cy: int
    cx: int
    radius: int
    color: tuple[int, int, int]
    # texture roll; kept at (0, 0) by the generator so the background cue is
    # a fixed template a linear model can actually latch onto
    phase: tuple[int, int] = (0, 0)


@dataclass
class ShapesDataset:
    cfg: ShapesConfig
    images: np.ndarray               # (N, H, W, 3) uint8
    masks: np.ndarray                # (N, H, W) uint8 {0, 255}
    labels: np.ndarray               # (N,) int
    bg_ids: np.ndarray               # (N,) int
    specs: list[ShapeSpec]


def render_texture(texture: str, canvas: int, phase: tuple[int, int]) -> np.ndarray:
    yy, xx = np.mgrid[0:canvas, 0:canvas]
    if texture == "stripes":
        gray = np.where(((yy // 4) % 2) == 0, 170, 60)
    elif texture == "checker":
        gray = np.where(((yy // 8 + xx // 8) % 2) == 0, 180, 50)
    elif texture == "noise":
        gray = np.random.default_rng(1234).integers(30, 220, size=(canvas, canvas))
    elif texture == "gradient":
        gray = 40 + (yy * 175) // max(1, canvas - 1)
    else:
        raise ValueError(f"unknown texture {texture!r}")
    gray = np.roll(np.roll(gray, phase[0], axis=0), phase[1], axis=1)
    return np.repeat(gray[:, :, None], 3, axis=2).astype(np.uint8)


def render_shape_mask(shape_id: int, canvas: int, cy: int, cx: int,
                      radius: int) -> np.ndarray:
    yy, xx = np.mgrid[0:canvas, 0:canvas]
    dy, dx = yy - cy, xx - cx
    name = SHAPE_NAMES[shape_id]
    if name == "disk":
        mask = dy * dy + dx * dx <= radius * radius
    elif name == "square":
        mask = np.maximum(np.abs(dy), np.abs(dx)) <= radius
    elif name == "triangle":
        mask = (np.abs(dy) <= radius) & (np.abs(dx) <= (dy + radius) / 2)
    elif name == "cross":
        arm = max(1, radius // 3)
        mask = ((np.abs(dy) <= arm) & (np.abs(dx) <= radius)) | \
               ((np.abs(dx) <= arm) & (np.abs(dy) <= radius))
    else:
        raise ValueError(f"unknown shape {shape_id}")
    return mask


def render_item(cfg: ShapesConfig, spec: ShapeSpec,
                bg_id: int) -> tuple[np.ndarray, np.ndarray]:
    image = render_texture(cfg.textures[bg_id], cfg.canvas, spec.phase).copy()
    mask = render_shape_mask(spec.shape_id, cfg.canvas, spec.cy, spec.cx,
                             spec.radius)
    image[mask] = spec.color
    return image, np.where(mask, 255, 0).astype(np.uint8)


def _draw_spec(cfg: ShapesConfig, class_id: int,
               rng: np.random.Generator) -> ShapeSpec:
    c = cfg.canvas
    radius = int(rng.integers(c // 8, c // 4 + 1))
    cy = int(rng.integers(radius, c - radius))
    cx = int(rng.integers(radius, c - radius))
    base = CLASS_COLORS[class_id]
    jitter = rng.integers(-cfg.color_jitter, cfg.color_jitter + 1, size=3)
    color = tuple(int(np.clip(b + j, 0, 255)) for b, j in zip(base, jitter))
    return ShapeSpec(shape_id=class_id, cy=cy, cx=cx, radius=radius,
                     color=color)


def gen_shapes_dataset(cfg: ShapesConfig, n_per_class: int | None = None,
                       seed: int | None = None) -> ShapesDataset:
    """Deterministic under (cfg, seed).  The background texture equals the
    class's own texture with probability rho, otherwise it is uniform over
    all textures (so rho = 0 makes backgrounds independent of the class)."""
    n_per_class = cfg.m_per_class if n_per_class is None else n_per_class
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD5)))
    images, masks, labels, bg_ids, specs = [], [], [], [], []
    for class_id in range(cfg.n_classes):
        for _ in range(n_per_class):
            spec = _draw_spec(cfg, class_id, rng)
            # both draws always consumed to keep streams aligned across rho
            matched = rng.random() < cfg.rho
            random_bg = int(rng.integers(cfg.n_classes))
            bg = class_id if matched else random_bg
            image, mask = render_item(cfg, spec, bg)
            images.append(image)
            masks.append(mask)
            labels.append(class_id)
            bg_ids.append(bg)
            specs.append(spec)
    return ShapesDataset(cfg=cfg, images=np.stack(images), masks=np.stack(masks),
                         labels=np.array(labels), bg_ids=np.array(bg_ids),
                         specs=specs)


def swap_backgrounds(ds: ShapesDataset, seed: int = 0) -> np.ndarray:
    """Re-render every image over a different class's texture (uniform over
    the other classes, deterministic under seed)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5A)))
    out = np.empty_like(ds.images)
    for i, spec in enumerate(ds.specs):
        label = int(ds.labels[i])
        others = [c for c in range(ds.cfg.n_classes) if c != label]
        bg = others[int(rng.integers(len(others)))]
        out[i], _ = render_item(ds.cfg, spec, bg)
    return out


# ---------------------------------------------------------------------------
# linear soft-label classifier

@dataclass
class LinearModel:
    weights: np.ndarray              # (C, D)
    bias: np.ndarray                 # (C,)

    @classmethod
    def zeros(cls, n_classes: int, n_features: int) -> "LinearModel":
        return cls(weights=np.zeros((n_classes, n_features)),
                   bias=np.zeros(n_classes))


def _dense_label(label: dict[int, float], n_classes: int) -> np.ndarray:
    y = np.zeros(n_classes)
    for c, w in label.items():
        y[c] = w
    return y


def loss_and_grad(model: LinearModel, image: np.ndarray,
                  label: dict[int, float]):
    """Soft-target cross-entropy and its gradients for one sample; pixels are
    scaled to [0, 1]."""
    x = image.reshape(-1).astype(np.float64) / 255.0
    y = _dense_label(label, model.bias.shape[0])
    z = model.weights @ x + model.bias
    zmax = z.max()
    logsumexp = zmax + np.log(np.exp(z - zmax).sum())
    loss = float(logsumexp - z @ y)
    p = np.exp(z - logsumexp)
    gz = p - y
    return loss, np.outer(gz, x), gz


@dataclass
class TrainResult:
    model: LinearModel
    epoch_losses: list[float] = field(default_factory=list)


def train_linear(model: LinearModel, sample_source, epochs: int, lr: float,
                 rng: np.random.Generator) -> TrainResult:
    """Plain SGD over whatever (image, label) stream ``sample_source(rng)``
    yields each epoch."""
    losses = []
    # overflow to inf is the divergence signal, not a numerics bug
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(epochs):
            total, count = 0.0, 0
            for image, label in sample_source(rng):
                loss, gw, gb = loss_and_grad(model, image, label)
                if not np.isfinite(loss):
                    raise DivergedError("training loss became non-finite",
                                        trace=losses)
                model.weights -= lr * gw
                model.bias -= lr * gb
                total += loss
                count += 1
            losses.append(total / max(count, 1))
    return TrainResult(model=model, epoch_losses=losses)


def evaluate(model: LinearModel, images: np.ndarray,
             labels: np.ndarray) -> float:
    """Exact accuracy fraction over a fixed split."""
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    z = x @ model.weights.T + model.bias
    return float((z.argmax(axis=1) == labels).mean())


# ---------------------------------------------------------------------------
# bank construction from ground-truth masks

def build_shapes_bank(root, ds: ShapesDataset) -> Bank:
    classes = [ClassInfo(i, SHAPE_NAMES[i]) for i in range(ds.cfg.n_classes)]
    bank = Bank.create(root, classes)
    for i in range(len(ds.images)):
        label = int(ds.labels[i])
        cdp = extract_cdp(ds.images[i], ds.masks[i], label, source_id=f"img{i}")
        cip_hole = extract_cip(ds.images[i], ds.masks[i], label,
                               source_id=f"img{i}")
        try:
            cip = inpaint_pyramid(cip_hole, PyramidConfig())
        except DegenerateHoleError:
            cip = fill_mean_color(cip_hole, noise_sigma=4.0,
                                  rng=np.random.default_rng(i))
        bank.add_real_cdp(cdp)
        bank.add_cip(cip)
    bank.save()
    return bank


def add_toy_synthetics(bank: Bank, sched: NoiseSchedule, strength: float = 0.4,
                       k: int = 3, seed: int = 0,
                       sigma0: float = TOY_EDIT_SIGMA0) -> None:
    """Expand every real cutout with k toy-edited variants at the given
    strength."""
    identifiers = {c.id: class_mean_identifier(bank, c.id)
                   for c in bank.classes if bank.real_cdps(c.id)}
    for rec in [r for r in bank.cdp_records if r.kind == "real"]:
        parent = bank.load_cdp(rec)
        have = len(bank.synthetic_children(rec.id))
        for j in range(have, k):
            edit_seed = derive_edit_seed(seed, rec.id, j)
            edited = edit_sprite_toy(parent.sprite, identifiers[rec.class_id],
                                     strength, edit_seed, sched, sigma0)
            bank.append_synthetic(
                synthetic_from_sprite(edited, parent, rec.id, strength))


# ---------------------------------------------------------------------------
# experiments

@dataclass
class ReportRow:
    method: str
    seed: int | str                  # experiment seed, or "mean"
    id_accuracy: float
    swapped_accuracy: float
    mean_psnr: float | None = None
    runtime_s: float = 0.0


@dataclass
class ExperimentReport:
    rows: list[ReportRow] = field(default_factory=list)

    def mean_for(self, method: str) -> ReportRow:
        for row in self.rows:
            if row.method == method and row.seed == "mean":
                return row
        raise KeyError(method)


def _real_stream(ds: ShapesDataset):
    def source(rng):
        order = rng.permutation(len(ds.images))
        for i in order:
            yield ds.images[i], {int(ds.labels[i]): 1.0}
    return source


def _cutmix_stream(ds: ShapesDataset, policy: CombinerPolicy):
    def source(rng):
        order = rng.permutation(len(ds.images))
        for i in order:
            if rng.random() < policy.p_aug:
                j = int(rng.integers(len(ds.images)))
                res = cutmix((ds.images[i], int(ds.labels[i])),
                             (ds.images[j], int(ds.labels[j])), rng)
                yield res.image, res.label
            else:
                yield ds.images[i], {int(ds.labels[i]): 1.0}
    return source


def _deda_stream(ds: ShapesDataset, bank: Bank, policy: CombinerPolicy):
    def source(rng):
        order = rng.permutation(len(ds.images))
        for i in order:
            sample = next_training_sample((ds.images[i], int(ds.labels[i])),
                                          bank, policy, rng)
            yield sample.image, sample.label
    return source


# augmented sprites stay in the natural shape-size range (the datasets draw
# radius canvas/8..canvas/4, i.e. about a quarter to a half of fit-to-canvas)
HARNESS_POLICY = CombinerPolicy(scale_range=(0.25, 0.55))


def run_background_robustness(cfg: ShapesConfig, workdir,
                              methods: tuple[str, ...] = ("none", "cutmix", "deda"),
                              seeds: tuple[int, ...] = (0, 1, 2, 3, 4),
                              epochs: int = 30, lr: float = 0.05,
                              policy: CombinerPolicy = HARNESS_POLICY,
                              sched: NoiseSchedule | None = None) -> ExperimentReport:
    """Train each method per seed and evaluate on the in-distribution test
    split and on the same split re-rendered over a different class's texture."""
    workdir = Path(workdir)
    sched = sched if sched is not None else build_schedule()
    report = ExperimentReport()
    accs: dict[str, list[tuple[float, float]]] = {m: [] for m in methods}

    for seed in seeds:
        train_cfg = replace(cfg, seed=seed)
        train_ds = gen_shapes_dataset(train_cfg)
        test_ds = gen_shapes_dataset(train_cfg, n_per_class=cfg.test_per_class,
                                     seed=seed + 10_000)
        swapped = swap_backgrounds(test_ds, seed=seed)

        bank = None
        if "deda" in methods:
            bank = build_shapes_bank(workdir / f"bank-seed{seed}", train_ds)
            add_toy_synthetics(bank, sched, strength=0.4, k=3, seed=seed)
            bank.verify()

        for method in methods:
            start = time.time()
            if method == "none":
                source = _real_stream(train_ds)
            elif method == "cutmix":
                source = _cutmix_stream(train_ds, policy)
            elif method == "deda":
                source = _deda_stream(train_ds, bank, policy)
            else:
                raise ValueError(f"unknown method {method!r}")
            model = LinearModel.zeros(cfg.n_classes, cfg.canvas ** 2 * 3)
            method_tag = zlib.crc32(method.encode())
            train_linear(model, source, epochs=epochs, lr=lr,
                         rng=np.random.default_rng(
                             np.random.SeedSequence((seed, method_tag))))
            id_acc = evaluate(model, test_ds.images, test_ds.labels)
            sw_acc = evaluate(model, swapped, test_ds.labels)
            accs[method].append((id_acc, sw_acc))
            report.rows.append(ReportRow(method=method, seed=seed,
                                         id_accuracy=id_acc,
                                         swapped_accuracy=sw_acc,
                                         runtime_s=time.time() - start))

    for method in methods:
        pairs = accs[method]
        report.rows.append(ReportRow(
            method=method, seed="mean",
            id_accuracy=float(np.mean([p[0] for p in pairs])),
            swapped_accuracy=float(np.mean([p[1] for p in pairs])),
            runtime_s=float(sum(r.runtime_s for r in report.rows
                                if r.method == method and r.seed != "mean"))))
    return report


def run_diversity_report(bank: Bank, edit_strengths: list[float], n: int,
                         sched: NoiseSchedule | None = None,
                         sigma0: float = TOY_EDIT_SIGMA0,
                         seed: int = 0) -> list[tuple[float, float]]:
    """Mean PSNR between n real cutouts and their toy edits, per strength.

    Strength 0 is the identity edit, so its mean PSNR sits exactly at the
    sentinel cap.  Lower PSNR means the edit moved the pixels further, i.e.
    more diversity."""
    sched = sched if sched is not None else build_schedule()
    reals = [r for r in bank.cdp_records if r.kind == "real"][:n]
    out = []
    for s in edit_strengths:
        values = []
        for idx, rec in enumerate(reals):
            parent = bank.load_cdp(rec)
            ident = class_mean_identifier(bank, rec.class_id)
            edited = edit_sprite_toy(parent.sprite, ident, s, seed * 100_003 + idx,
                                     sched, sigma0)
            values.append(psnr(parent.sprite, edited))
        out.append((float(s), float(np.mean(values)) if values else float("nan")))
    return out


# ---------------------------------------------------------------------------
# report output

def write_report_tsv(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method\tseed\tid_accuracy\tswapped_accuracy\tmean_psnr\truntime_s\n")
        for row in report.rows:
            psnr_s = "" if row.mean_psnr is None else f"{row.mean_psnr:.4f}"
            fh.write(f"{row.method}\t{row.seed}\t{row.id_accuracy:.4f}\t"
                     f"{row.swapped_accuracy:.4f}\t{psnr_s}\t{row.runtime_s:.2f}\n")


def write_report_jsonl(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in report.rows:
            fh.write(json.dumps({
                "method": row.method, "seed": row.seed,
                "id_accuracy": row.id_accuracy,
                "swapped_accuracy": row.swapped_accuracy,
                "mean_psnr": row.mean_psnr, "runtime_s": row.runtime_s,
            }, sort_keys=True) + "\n")
