"""Command-line surface for batch pipelines.

Subcommands::

    deda decouple --images DIR --masks DIR --class-map FILE --out BANK
    deda edit     --bank BANK --backend toy|URL --strength S --multiplier K
    deda augment  --bank BANK --count N --out DIR
    deda harness  --preset robustness|diversity --seeds K --out PREFIX

Flags override config-file values (``--config`` JSON, keys = long option
names with underscores), which override defaults.  ``DEDA_BACKEND_URL``
supplies the default backend.  Exit codes: 0 success, 2 input/config error,
3 partial failure.  Every command is deterministic under (--seed,
--workers 1).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .backend_client import BackendClient
from .bank import Bank, ClassInfo, load_bank
from .combiner import CombinerPolicy, emit_batch
from .decouple import aggregate_masks, extract_cdp, extract_cip
from .diffusion import build_schedule
from .editing import (class_mean_identifier, derive_edit_seed, edit_sprite_toy,
                      synthetic_from_sprite)
from .errors import (BackendError, DedaError, DegenerateHoleError,
                     IntegrityError, NoBackgroundError, NoForegroundError)
from .harness import (ShapesConfig, build_shapes_bank, gen_shapes_dataset,
                      run_background_robustness, run_diversity_report,
                      write_report_jsonl, write_report_tsv, ExperimentReport,
                      ReportRow)
from .imagecore import encode_png, read_png
from .inpaint import PyramidConfig, fill_mean_color, inpaint_pyramid

log = logging.getLogger("deda")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PARTIAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deda")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with defaults for any long option")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decouple", help="build a bank from images + masks")
    p.add_argument("--images", type=Path, default=None)
    p.add_argument("--masks", type=Path, default=None)
    p.add_argument("--class-map", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--prompt-backend", default=None,
                   help="segmentation service URL for images without mask files")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("edit", help="expand real cutouts with synthetic variants")
    p.add_argument("--bank", type=Path, default=None)
    p.add_argument("--backend", default=None, help="'toy' or a service URL")
    p.add_argument("--strength", type=float, default=None)
    p.add_argument("--multiplier", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("augment", help="emit combined samples + labels.jsonl")
    p.add_argument("--bank", type=Path, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--p-aug", type=float, default=None)
    p.add_argument("--p-syn", type=float, default=None)
    p.add_argument("--p-mix", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("harness", help="run a desk-scale experiment preset")
    p.add_argument("--preset", choices=("robustness", "diversity"), default=None)
    p.add_argument("--seeds", type=int, default=None, help="number of seeds")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--out", type=Path, default=None, help="report path prefix")
    p.add_argument("--seed", type=int, default=None)
    return parser


_DEFAULTS = {
    "seed": 0, "workers": 1, "strength": 0.4, "multiplier": 3,
    "p_aug": 0.5, "p_syn": 0.25, "p_mix": 0.5, "count": 0,
    "seeds": 5, "rho": 1.0, "preset": "robustness", "log_level": "WARNING",
}


def _resolve(args: argparse.Namespace, key: str, required: bool = False,
             config: dict | None = None):
    """Flag > config file > default."""
    value = getattr(args, key, None)
    if value is None and config:
        value = config.get(key)
    if value is None:
        value = _DEFAULTS.get(key)
    if value is None and required:
        raise SystemExit(f"deda: missing required option --{key.replace('_', '-')}")
    return value


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        log.error("cannot read config %s: %s", path, exc)
        raise SystemExit(EXIT_INPUT)
    if not isinstance(doc, dict):
        log.error("config must be a JSON object")
        raise SystemExit(EXIT_INPUT)
    return doc


def _load_class_map(path: Path) -> tuple[list[ClassInfo], dict[str, int]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    classes = [ClassInfo(int(c["id"]), str(c["name"])) for c in doc["classes"]]
    images = {str(k): int(v) for k, v in doc["images"].items()}
    return classes, images


# ---------------------------------------------------------------------------
# decouple

def cmd_decouple(args, config) -> int:
    images_dir = Path(_resolve(args, "images", required=True, config=config))
    masks_dir = _resolve(args, "masks", config=config)
    class_map = Path(_resolve(args, "class_map", required=True, config=config))
    out = Path(_resolve(args, "out", required=True, config=config))
    backend_url = _resolve(args, "prompt_backend", config=config) \
        or os.environ.get("DEDA_BACKEND_URL")
    seed = int(_resolve(args, "seed", config=config))

    try:
        classes, image_map = _load_class_map(class_map)
    except (OSError, ValueError, KeyError) as exc:
        log.error("bad class map %s: %s", class_map, exc)
        return EXIT_INPUT

    names = {c.id: c.name for c in classes}
    client = BackendClient(backend_url) if backend_url else None
    bank = Bank.create(out, classes)
    ok = 0
    for path in sorted(images_dir.glob("*.png")):
        stem = path.stem
        if stem not in image_map:
            log.warning("%s: not in class map, skipped", stem)
            continue
        class_id = image_map[stem]
        image = read_png(path, "RGB")
        mask_paths = sorted(Path(masks_dir).glob(f"{stem}.mask.*.png")) \
            if masks_dir else []
        if mask_paths:
            masks = [read_png(p, "L") for p in mask_paths]
        elif client is not None:
            try:
                masks = client.segment(encode_png(image), names[class_id])
            except BackendError as exc:
                log.warning("%s: segmentation failed (%s), skipped", stem, exc)
                continue
        else:
            log.warning("%s: no mask files and no backend, skipped", stem)
            continue
        if not masks:
            log.warning("%s: no foreground found, skipped", stem)
            continue
        try:
            mask = aggregate_masks(masks)
            cdp = extract_cdp(image, mask, class_id, source_id=stem)
            cip_hole = extract_cip(image, mask, class_id, source_id=stem)
        except (NoForegroundError, NoBackgroundError) as exc:
            log.warning("%s: %s, skipped", stem, exc)
            continue
        try:
            cip = inpaint_pyramid(cip_hole, PyramidConfig())
        except DegenerateHoleError:
            cip = fill_mean_color(cip_hole, noise_sigma=4.0,
                                  rng=np.random.default_rng((seed, ok)))
        bank.add_real_cdp(cdp)
        bank.add_cip(cip)
        ok += 1
    bank.save()
    if ok == 0:
        log.error("no image produced a cutout; bank is empty")
        return EXIT_INPUT
    log.info("bank built with %d cutouts at %s", ok, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# edit

def cmd_edit(args, config) -> int:
    bank_path = Path(_resolve(args, "bank", required=True, config=config))
    backend = _resolve(args, "backend", config=config) \
        or os.environ.get("DEDA_BACKEND_URL") or "toy"
    strength = float(_resolve(args, "strength", config=config))
    multiplier = int(_resolve(args, "multiplier", config=config))
    seed = int(_resolve(args, "seed", config=config))

    try:
        bank = load_bank(bank_path)
        bank.verify()
    except (OSError, IntegrityError) as exc:
        log.error("cannot load bank %s: %s", bank_path, exc)
        return EXIT_INPUT
    if multiplier <= 0:
        return EXIT_OK

    sched = build_schedule()
    toy = backend == "toy"
    client = None if toy else BackendClient(backend)
    identifiers: dict[int, object] = {}
    if toy:
        identifiers = {c.id: class_mean_identifier(bank, c.id)
                       for c in bank.classes if bank.real_cdps(c.id)}
    else:
        for c in bank.classes:
            reals = bank.real_cdps(c.id)
            if not reals:
                continue
            pngs = [encode_png(bank.load_cdp(r).sprite) for r in reals]
            identifiers[c.id] = client.invert(c.id, pngs, strength, seed=seed)

    skipped = 0
    for rec in [r for r in bank.cdp_records if r.kind == "real"]:
        parent = bank.load_cdp(rec)
        have = len(bank.synthetic_children(rec.id))
        for j in range(have, multiplier):
            edited = None
            for attempt in range(3):
                edit_seed = derive_edit_seed(seed + attempt, rec.id, j)
                try:
                    if toy:
                        edited = edit_sprite_toy(parent.sprite,
                                                 identifiers[rec.class_id],
                                                 strength, edit_seed, sched)
                    else:
                        edited = client.edit(parent.sprite,
                                             identifiers[rec.class_id],
                                             strength, seed=edit_seed)
                    bank.append_synthetic(
                        synthetic_from_sprite(edited, parent, rec.id, strength))
                    break
                except (BackendError, NoForegroundError) as exc:
                    log.warning("%s variant %d attempt %d failed: %s",
                                rec.id, j, attempt + 1, exc)
                    edited = None
            if edited is None:
                skipped += 1
    if skipped:
        log.error("%d variants skipped after retries", skipped)
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# augment

def cmd_augment(args, config) -> int:
    bank_path = Path(_resolve(args, "bank", required=True, config=config))
    out = Path(_resolve(args, "out", required=True, config=config))
    count = int(_resolve(args, "count", config=config))
    seed = int(_resolve(args, "seed", config=config))
    workers = int(_resolve(args, "workers", config=config))
    policy = CombinerPolicy(
        p_aug=float(_resolve(args, "p_aug", config=config)),
        p_syn=float(_resolve(args, "p_syn", config=config)),
        p_mix=float(_resolve(args, "p_mix", config=config)))

    try:
        bank = load_bank(bank_path)
        bank.verify()
    except (OSError, IntegrityError) as exc:
        log.error("bank verification failed: %s", exc)
        return EXIT_INPUT
    emit_batch(bank, out, count, policy, seed=seed, workers=workers)
    return EXIT_OK


# ---------------------------------------------------------------------------
# harness

def cmd_harness(args, config) -> int:
    preset = _resolve(args, "preset", config=config)
    n_seeds = int(_resolve(args, "seeds", config=config))
    rho = float(_resolve(args, "rho", config=config))
    seed = int(_resolve(args, "seed", config=config))
    out = _resolve(args, "out", config=config)
    out_prefix = Path(out) if out else Path("report")

    try:
        if preset == "robustness":
            cfg = ShapesConfig(rho=rho)
            with tempfile.TemporaryDirectory() as workdir:
                report = run_background_robustness(
                    cfg, workdir, seeds=tuple(range(n_seeds)))
        else:
            cfg = ShapesConfig(seed=seed)
            ds = gen_shapes_dataset(cfg)
            with tempfile.TemporaryDirectory() as workdir:
                bank = build_shapes_bank(Path(workdir) / "bank", ds)
                pairs = run_diversity_report(bank, [0.0, 0.2, 0.4, 0.8], n=24,
                                             seed=seed)
            report = ExperimentReport(rows=[
                ReportRow(method=f"toy-edit@s={s}", seed=seed, id_accuracy=0.0,
                          swapped_accuracy=0.0, mean_psnr=v)
                for s, v in pairs])
    except DedaError as exc:
        log.error("harness arm failed: %s", exc)
        return EXIT_INPUT

    write_report_tsv(report, out_prefix.with_suffix(".tsv"))
    write_report_jsonl(report, out_prefix.with_suffix(".jsonl"))
    with open(out_prefix.with_suffix(".tsv"), encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    config = _load_config(args.config)
    logging.basicConfig(
        level=(args.log_level or config.get("log_level")
               or _DEFAULTS["log_level"]).upper(),
        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"decouple": cmd_decouple, "edit": cmd_edit,
                "augment": cmd_augment, "harness": cmd_harness}
    try:
        return handlers[args.command](args, config)
    except DedaError as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
