"""File-backed store of cutouts and backgrounds.

Layout::

    <root>/manifest.json     UTF-8, stable key order, version field mandatory
    <root>/cdp/<id>.png      RGBA cutouts (real and synthetic)
    <root>/cip/<id>.png      RGB hole-free backgrounds

The manifest is always rewritten atomically (temp file + rename) so an
interrupted generation run can never tear it.  Banks are read-only during
training: sampling only consumes the caller's rng stream, so per-worker
streams give reproducible draws.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .decouple import Cdp
from .errors import IntegrityError, SamplingError
from .imagecore import alpha_area, png_mode, read_png, write_png
from .inpaint import Cip

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class ClassInfo:
    id: int
    name: str


@dataclass(frozen=True)
class CdpRecord:
    id: str
    class_id: int
    kind: str                    # real | synthetic
    path: str
    alpha_area: float
    parent_id: str | None = None
    strength_used: float | None = None


@dataclass(frozen=True)
class CipRecord:
    id: str
    source_class: int
    path: str


@dataclass(frozen=True)
class BankStats:
    """C classes, M real cutouts per class (minimum), K synthetic variants
    guaranteed per real cutout (minimum)."""

    C: int
    M: int
    K: int
    per_class: dict[int, int]    # exact real counts


def combinations_per_cdp_family(stats: BankStats) -> int:
    """Distinct (cutout-variant, background) pairs reachable from one real
    cutout's family: (1 + K) variants times the C*M backgrounds."""
    return (1 + stats.K) * stats.C * stats.M


@dataclass
class Bank:
    root: Path
    classes: list[ClassInfo]
    cdp_records: list[CdpRecord] = field(default_factory=list)
    cip_records: list[CipRecord] = field(default_factory=list)
    version: int = MANIFEST_VERSION
    # decode cache for the training-time sampling path; loaded objects are
    # immutable by convention
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # ------------------------------------------------------------------ io

    @classmethod
    def create(cls, root, classes: list[ClassInfo]) -> "Bank":
        root = Path(root)
        (root / "cdp").mkdir(parents=True, exist_ok=True)
        (root / "cip").mkdir(parents=True, exist_ok=True)
        return cls(root=root, classes=list(classes))

    @classmethod
    def load(cls, root) -> "Bank":
        root = Path(root)
        with open(root / "manifest.json", encoding="utf-8") as fh:
            doc = json.load(fh)
        if "version" not in doc:
            raise IntegrityError("manifest has no version field")
        bank = cls(
            root=root,
            classes=[ClassInfo(int(c["id"]), str(c["name"])) for c in doc["classes"]],
            cdp_records=[CdpRecord(
                id=r["id"], class_id=int(r["class_id"]), kind=r["kind"],
                path=r["path"], alpha_area=float(r["alpha_area"]),
                parent_id=r.get("parent_id"),
                strength_used=r.get("strength_used"),
            ) for r in doc["cdp_records"]],
            cip_records=[CipRecord(
                id=r["id"], source_class=int(r["source_class"]), path=r["path"],
            ) for r in doc["cip_records"]],
            version=int(doc["version"]),
        )
        return bank

    def save(self) -> None:
        """Atomic manifest rewrite: write a temp file, then rename over."""
        doc = {
            "version": self.version,
            "classes": [asdict(c) for c in self.classes],
            "cdp_records": [asdict(r) for r in self.cdp_records],
            "cip_records": [asdict(r) for r in self.cip_records],
            "stats": asdict(self.stats()),
        }
        data = json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False)
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".manifest-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(data + "\n")
            os.replace(tmp, self.root / "manifest.json")
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    # --------------------------------------------------------------- stats

    def stats(self) -> BankStats:
        per_class = {c.id: 0 for c in self.classes}
        syn_counts: dict[str, int] = {}
        for r in self.cdp_records:
            if r.kind == "real":
                per_class[r.class_id] = per_class.get(r.class_id, 0) + 1
                syn_counts.setdefault(r.id, 0)
            else:
                syn_counts[r.parent_id] = syn_counts.get(r.parent_id, 0) + 1
        m = min(per_class.values()) if per_class else 0
        k = min(syn_counts.values()) if syn_counts else 0
        return BankStats(C=len(self.classes), M=m, K=k, per_class=per_class)

    # ------------------------------------------------------------ mutation

    def _next_id(self, prefix: str, records) -> str:
        return f"{prefix}-{len(records) + 1:06d}"

    def _known_class(self, class_id: int) -> bool:
        return any(c.id == class_id for c in self.classes)

    def add_real_cdp(self, cdp: Cdp) -> CdpRecord:
        if cdp.kind != "real":
            raise IntegrityError(f"add_real_cdp got kind {cdp.kind!r}")
        if not self._known_class(cdp.class_id):
            raise IntegrityError(f"unknown class {cdp.class_id}")
        rid = self._next_id("cdp", self.cdp_records)
        rel = f"cdp/{rid}.png"
        write_png(self.root / rel, cdp.sprite)
        rec = CdpRecord(id=rid, class_id=cdp.class_id, kind="real", path=rel,
                        alpha_area=cdp.alpha_area)
        self.cdp_records.append(rec)
        return rec

    def add_cip(self, cip: Cip) -> CipRecord:
        if not self._known_class(cip.source_class):
            raise IntegrityError(f"unknown class {cip.source_class}")
        rid = self._next_id("cip", self.cip_records)
        rel = f"cip/{rid}.png"
        write_png(self.root / rel, cip.pixels)
        rec = CipRecord(id=rid, source_class=cip.source_class, path=rel)
        self.cip_records.append(rec)
        return rec

    def append_synthetic(self, cdp: Cdp) -> CdpRecord:
        """Add one synthetic variant and persist the manifest immediately."""
        if cdp.kind != "synthetic":
            raise IntegrityError(f"append_synthetic got kind {cdp.kind!r}")
        parent = self.find_cdp(cdp.parent_id)
        if parent is None or parent.kind != "real":
            raise IntegrityError(f"dangling parent {cdp.parent_id!r}")
        if parent.class_id != cdp.class_id:
            raise IntegrityError(
                f"synthetic class {cdp.class_id} != parent class {parent.class_id}")
        rid = self._next_id("cdp", self.cdp_records)
        rel = f"cdp/{rid}.png"
        write_png(self.root / rel, cdp.sprite)
        rec = CdpRecord(id=rid, class_id=cdp.class_id, kind="synthetic", path=rel,
                        alpha_area=cdp.alpha_area, parent_id=cdp.parent_id,
                        strength_used=cdp.strength_used)
        self.cdp_records.append(rec)
        self.save()
        return rec

    # ------------------------------------------------------------- lookup

    def find_cdp(self, rid: str) -> CdpRecord | None:
        for r in self.cdp_records:
            if r.id == rid:
                return r
        return None

    def find_cip(self, rid: str) -> CipRecord | None:
        for r in self.cip_records:
            if r.id == rid:
                return r
        return None

    def load_cdp(self, rec: CdpRecord | str) -> Cdp:
        if isinstance(rec, str):
            found = self.find_cdp(rec)
            if found is None:
                raise SamplingError(f"no cutout record {rec!r}")
            rec = found
        key = ("cdp", rec.id)
        if key not in self._cache:
            sprite = read_png(self.root / rec.path, "RGBA")
            self._cache[key] = Cdp(
                sprite=sprite, class_id=rec.class_id, kind=rec.kind,
                source_id=rec.id, alpha_area=rec.alpha_area,
                parent_id=rec.parent_id, strength_used=rec.strength_used)
        return self._cache[key]

    def load_cip(self, rec: CipRecord | str) -> Cip:
        if isinstance(rec, str):
            found = self.find_cip(rec)
            if found is None:
                raise SamplingError(f"no background record {rec!r}")
            rec = found
        key = ("cip", rec.id)
        if key not in self._cache:
            self._cache[key] = Cip(pixels=read_png(self.root / rec.path, "RGB"),
                                   source_id=rec.id, source_class=rec.source_class)
        return self._cache[key]

    def real_cdps(self, class_id: int) -> list[CdpRecord]:
        return [r for r in self.cdp_records
                if r.class_id == class_id and r.kind == "real"]

    def synthetic_cdps(self, class_id: int) -> list[CdpRecord]:
        return [r for r in self.cdp_records
                if r.class_id == class_id and r.kind == "synthetic"]

    def synthetic_children(self, parent_id: str) -> list[CdpRecord]:
        return [r for r in self.cdp_records if r.parent_id == parent_id]

    # -------------------------------------------------------------- verify

    def verify(self) -> None:
        """Check referential and file-level invariants; raise IntegrityError
        naming the offending record ids."""
        ids = [r.id for r in self.cdp_records] + [r.id for r in self.cip_records]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise IntegrityError(f"duplicate record ids: {dupes}")
        real_by_id = {r.id: r for r in self.cdp_records if r.kind == "real"}
        for r in self.cdp_records:
            path = self.root / r.path
            if not path.exists():
                raise IntegrityError(f"{r.id}: missing file {r.path}")
            if png_mode(path) != "RGBA":
                raise IntegrityError(f"{r.id}: expected RGBA png, got {png_mode(path)}")
            sprite = read_png(path, "RGBA")
            if r.alpha_area <= 0:
                raise IntegrityError(f"{r.id}: alpha_area must be > 0")
            if abs(alpha_area(sprite) - r.alpha_area) > 1e-6:
                raise IntegrityError(f"{r.id}: alpha_area mismatch")
            if r.kind == "synthetic":
                parent = real_by_id.get(r.parent_id)
                if parent is None:
                    raise IntegrityError(f"{r.id}: dangling parent {r.parent_id!r}")
                if parent.class_id != r.class_id:
                    raise IntegrityError(f"{r.id}: class differs from parent")
            elif r.kind != "real":
                raise IntegrityError(f"{r.id}: bad kind {r.kind!r}")
        for r in self.cip_records:
            path = self.root / r.path
            if not path.exists():
                raise IntegrityError(f"{r.id}: missing file {r.path}")
            if png_mode(path) != "RGB":
                raise IntegrityError(f"{r.id}: expected RGB png, got {png_mode(path)}")


# ---------------------------------------------------------------------------
# construction helpers

def build_bank(root, classes: list[ClassInfo], cdps: list[Cdp] = (),
               cips: list[Cip] = ()) -> Bank:
    bank = Bank.create(root, classes)
    for cdp in cdps:
        bank.add_real_cdp(cdp)
    for cip in cips:
        bank.add_cip(cip)
    bank.save()
    return bank


def load_bank(root) -> Bank:
    return Bank.load(root)


# ---------------------------------------------------------------------------
# sampling

def sample_cdp_record(bank: Bank, class_id: int, p_syn: float,
                      rng: np.random.Generator) -> CdpRecord:
    """Synthetic with probability p_syn (uniform among the class's synthetic
    cutouts), otherwise uniform among its real ones.  A class without
    synthetics falls back to real with a logged note.  Always consumes one
    branch draw and one index draw, so seeded streams stay aligned."""
    reals = bank.real_cdps(class_id)
    if not bank._known_class(class_id):
        raise SamplingError(f"unknown class {class_id}")
    if not reals:
        raise SamplingError(f"class {class_id} has no real cutout")
    want_syn = rng.random() < p_syn
    pool = reals
    if want_syn:
        syns = bank.synthetic_cdps(class_id)
        if syns:
            pool = syns
        else:
            log.info("class %s has no synthetic cutouts; falling back to real",
                     class_id)
    return pool[int(rng.integers(len(pool)))]


def sample_cip_record(bank: Bank, exclude_class: int, strict_inter_class: bool,
                      rng: np.random.Generator) -> CipRecord:
    """Uniform over eligible backgrounds; strict mode drops ones whose source
    class equals ``exclude_class``."""
    pool = bank.cip_records
    if strict_inter_class:
        pool = [r for r in pool if r.source_class != exclude_class]
    if not pool:
        raise SamplingError(
            f"no eligible background (strict={strict_inter_class}, "
            f"exclude={exclude_class})")
    return pool[int(rng.integers(len(pool)))]


def sample_cdp(bank: Bank, class_id: int, p_syn: float,
               rng: np.random.Generator) -> Cdp:
    return bank.load_cdp(sample_cdp_record(bank, class_id, p_syn, rng))


def sample_cip(bank: Bank, exclude_class: int, strict_inter_class: bool,
               rng: np.random.Generator) -> Cip:
    return bank.load_cip(sample_cip_record(bank, exclude_class,
                                           strict_inter_class, rng))
