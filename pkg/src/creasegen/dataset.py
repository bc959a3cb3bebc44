"""End-to-end dataset builds for the FC, CPD and VPD variants.

Layout under ``out_dir``::

    manifest.json
    <identity_id>/identity.json
    <identity_id>/<index>_<tag>.png
    <identity_id>/<index>_cpd.json      (CPD only: the perturbed guides)

Every random stream is derived from ``global_seed`` plus stable keys, so
results do not depend on worker count or scheduling.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import augment
from .errors import CreaseError, ValidationError
from .geometry import GENERATOR_VERSION, IdentityConfig, IdentityRecord, cpd_variant, sample_identity
from .raster import CanvasConfig, encode_png, read_gray, render_identity
from .seeding import derive_rng, derive_seed

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
IDENTITY_NAME = "identity.json"
VARIANTS = ("FC", "CPD", "VPD")
DEFAULT_SAMPLES = {"FC": 10, "CPD": 10, "VPD": len(augment.list_augmentations())}
DEFAULT_CPD_MAGNITUDE = 0.1
MAX_DEDUP_ATTEMPTS = 1000


@dataclass(frozen=True)
class DatasetConfig:
    variant: str
    n_identities: int
    global_seed: int
    out_dir: str | Path
    canvas: CanvasConfig = field(default_factory=CanvasConfig)
    samples_per_identity: int | None = None
    cpd_magnitude: float = DEFAULT_CPD_MAGNITUDE
    identity: IdentityConfig = field(default_factory=IdentityConfig)
    dedup: bool = False
    jobs: int | None = None
    name: str | None = None

    def __post_init__(self):
        v = str(self.variant).upper()
        if v not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        object.__setattr__(self, "variant", v)
        if self.n_identities < 1:
            raise ValidationError("n_identities must be >= 1")
        if not 0 <= int(self.global_seed) < 2 ** 64:
            raise ValidationError("global_seed must be a 64-bit unsigned integer")
        if self.samples_per_identity is None:
            object.__setattr__(self, "samples_per_identity", DEFAULT_SAMPLES[v])
        if self.samples_per_identity < 1:
            raise ValidationError("samples_per_identity must be >= 1")
        if v == "VPD" and self.samples_per_identity > DEFAULT_SAMPLES["VPD"]:
            raise ValidationError(
                f"VPD draws one sample per registry augmentation; at most {DEFAULT_SAMPLES['VPD']}")
        if self.cpd_magnitude < 0:
            raise ValidationError("cpd_magnitude must be non-negative")
        if self.jobs is not None and self.jobs < 1:
            raise ValidationError("jobs must be >= 1")

    @property
    def dataset_name(self) -> str:
        return self.name or f"{self.variant.lower()}-{self.n_identities}-seed{self.global_seed}"


@dataclass(frozen=True)
class ManifestEntry:
    identity_id: str
    variant_index: int
    augmentation: str | None
    file: str
    sha256: str

    def to_dict(self) -> dict:
        return {"identity_id": self.identity_id, "variant_index": self.variant_index,
                "augmentation": self.augmentation, "file": self.file, "sha256": self.sha256}

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(str(d["identity_id"]), int(d["variant_index"]), d.get("augmentation"),
                   str(d["file"]), str(d["sha256"]))


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    variant: str
    global_seed: int
    n_identities: int
    samples_per_identity: int
    entries: tuple[ManifestEntry, ...]
    canvas: dict
    generator_version: str = GENERATOR_VERSION
    cpd_magnitude: float | None = None
    registry: list | None = None

    def to_dict(self) -> dict:
        d = {
            "manifest_version": MANIFEST_VERSION,
            "name": self.name,
            "variant": self.variant,
            "global_seed": self.global_seed,
            "n_identities": self.n_identities,
            "samples_per_identity": self.samples_per_identity,
            "generator_version": self.generator_version,
            "canvas": self.canvas,
        }
        if self.cpd_magnitude is not None:
            d["cpd_magnitude"] = self.cpd_magnitude
        if self.registry is not None:
            d["registry"] = self.registry
        d["entries"] = [e.to_dict() for e in self.entries]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        if d.get("manifest_version") != MANIFEST_VERSION:
            raise ValidationError(f"unsupported manifest_version {d.get('manifest_version')!r}")
        try:
            return cls(
                name=str(d["name"]), variant=str(d["variant"]), global_seed=int(d["global_seed"]),
                n_identities=int(d["n_identities"]), samples_per_identity=int(d["samples_per_identity"]),
                entries=tuple(ManifestEntry.from_dict(e) for e in d["entries"]),
                canvas=dict(d["canvas"]), generator_version=str(d["generator_version"]),
                cpd_magnitude=d.get("cpd_magnitude"), registry=d.get("registry"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed manifest: {exc}") from exc

    def identity_ids(self) -> list[str]:
        return list(dict.fromkeys(e.identity_id for e in self.entries))


def read_manifest(path: str | Path) -> DatasetManifest:
    try:
        return DatasetManifest.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# --- identities -------------------------------------------------------------

def identity_id(index: int) -> str:
    return f"id{index:04d}"


def dedup_masks(identities: Iterable[IdentityRecord]) -> tuple[list[IdentityRecord], list[IdentityRecord]]:
    """Keep the first identity per distinct serialized grid mask."""
    seen: set[bytes] = set()
    kept, rejected = [], []
    for rec in identities:
        key = rec.mask.key()
        if key in seen:
            rejected.append(rec)
        else:
            seen.add(key)
            kept.append(rec)
    return kept, rejected


def sample_identities(config: DatasetConfig) -> list[IdentityRecord]:
    """Identity ``i`` uses ``derive_seed(global_seed, i)``.

    With ``dedup`` a colliding mask is redrawn from
    ``derive_seed(global_seed, i, attempt)`` until it is new.
    """
    out: list[IdentityRecord] = []
    seen: set[bytes] = set()
    for i in range(config.n_identities):
        rec = sample_identity(derive_seed(config.global_seed, i), config.identity, identity_id(i))
        attempt = 0
        while config.dedup and rec.mask.key() in seen:
            attempt += 1
            if attempt > MAX_DEDUP_ATTEMPTS:
                raise CreaseError(f"could not find a new grid mask for identity {i}")
            rec = sample_identity(derive_seed(config.global_seed, i, attempt), config.identity, identity_id(i))
        seen.add(rec.mask.key())
        out.append(rec)
    return out


# --- per-identity build -----------------------------------------------------

def identity_samples(rec: IdentityRecord, config: DatasetConfig):
    """Yield ``(variant_index, tag, augmentation, image, sidecar)`` for one identity."""
    canvas = config.canvas
    k = config.samples_per_identity
    if config.variant == "FC":
        img = render_identity(rec, canvas)
        for i in range(k):
            yield i, "fc", None, img, None
    elif config.variant == "CPD":
        for i in range(k):
            var = cpd_variant(rec, derive_rng(rec.seed, "cpd", i), config.cpd_magnitude, i,
                              min_gap=config.identity.min_gap)
            yield i, "cpd", None, render_identity(var, canvas), var
    else:
        base = render_identity(rec, canvas)
        for i, spec in enumerate(augment.list_augmentations()[:k]):
            rng = derive_rng(config.global_seed, rec.id, spec.name)
            yield i, spec.name, spec.name, augment.apply_augmentation(base, spec, rng), None


def _build_identity(args) -> list[dict]:
    rec_json, config = args
    rec = IdentityRecord.from_json(rec_json)
    out_dir = Path(config.out_dir) / rec.id
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / IDENTITY_NAME).write_text(rec.to_json(indent=1) + "\n")
    entries = []
    for index, tag, aug, img, sidecar in identity_samples(rec, config):
        data = encode_png(img)
        name = f"{index:02d}_{tag}"
        (out_dir / f"{name}.png").write_bytes(data)
        if sidecar is not None:
            (out_dir / f"{name}.json").write_text(sidecar.to_json(indent=1) + "\n")
        entries.append(ManifestEntry(rec.id, index, aug, f"{rec.id}/{name}.png", _sha256(data)).to_dict())
    return entries


def default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def run_jobs(fn, items: list, jobs: int | None) -> list:
    jobs = jobs or default_jobs()
    if jobs == 1 or len(items) == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        # map preserves input order regardless of completion order
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def generate_dataset(config: DatasetConfig) -> DatasetManifest:
    """Build a dataset and write ``manifest.json`` last, atomically.

    A stale manifest is removed first, so a failed build never leaves a
    manifest that describes files it did not write.
    """
    root = Path(config.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / MANIFEST_NAME).unlink(missing_ok=True)
    identities = sample_identities(config)
    for rec in identities:
        bad = rec.violations()
        if bad:
            raise CreaseError(f"identity {rec.id} violates invariants: {bad}")
    log.info("building %s dataset: %d identities x %d samples",
             config.variant, config.n_identities, config.samples_per_identity)
    per_id = run_jobs(_build_identity, [(r.to_json(), config) for r in identities], config.jobs)
    entries = tuple(ManifestEntry.from_dict(e) for block in per_id for e in block)
    manifest = DatasetManifest(
        name=config.dataset_name,
        variant=config.variant,
        global_seed=int(config.global_seed),
        n_identities=config.n_identities,
        samples_per_identity=config.samples_per_identity,
        entries=entries,
        canvas=config.canvas.to_dict(),
        cpd_magnitude=config.cpd_magnitude if config.variant == "CPD" else None,
        registry=([s.to_dict() for s in augment.list_augmentations()[:config.samples_per_identity]]
                  if config.variant == "VPD" else None),
    )
    expected = config.n_identities * config.samples_per_identity
    if len(entries) != expected:
        raise CreaseError(f"built {len(entries)} entries, expected {expected}")
    _atomic_write(root / MANIFEST_NAME, manifest.to_json().encode())
    return manifest


def config_from_manifest(manifest: DatasetManifest, out_dir: str | Path, jobs: int | None = None) -> DatasetConfig:
    return DatasetConfig(
        variant=manifest.variant, n_identities=manifest.n_identities, global_seed=manifest.global_seed,
        out_dir=out_dir, canvas=CanvasConfig(**manifest.canvas),
        samples_per_identity=manifest.samples_per_identity,
        cpd_magnitude=manifest.cpd_magnitude if manifest.cpd_magnitude is not None else DEFAULT_CPD_MAGNITUDE,
        jobs=jobs, name=manifest.name,
    )


# --- verification -----------------------------------------------------------

@dataclass
class VerifyReport:
    checked: int = 0
    mismatches: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checked": self.checked, "mismatches": self.mismatches}


def verify_manifest(manifest: DatasetManifest | str | Path, root_dir: str | Path | None = None,
                    regenerate: bool = False, jobs: int | None = None) -> VerifyReport:
    """Re-hash every file and check counts; problems are reported, not raised.

    With ``regenerate`` the dataset is rebuilt from its seed in a scratch
    directory and those hashes are compared as well.
    """
    if not isinstance(manifest, DatasetManifest):
        path = Path(manifest)
        root_dir = path.parent if root_dir is None else root_dir
        manifest = read_manifest(path)
    if root_dir is None:
        raise ValidationError("root_dir is required when passing a manifest object")
    root = Path(root_dir)
    report = VerifyReport()
    expected = manifest.n_identities * manifest.samples_per_identity
    if len(manifest.entries) != expected:
        report.mismatches.append({"kind": "count", "expected": expected, "found": len(manifest.entries)})
    ids = manifest.identity_ids()
    if len(ids) != manifest.n_identities:
        report.mismatches.append({"kind": "count", "what": "identities",
                                  "expected": manifest.n_identities, "found": len(ids)})
    for ident in ids:
        p = root / ident / IDENTITY_NAME
        try:
            IdentityRecord.from_json(p.read_text())
        except FileNotFoundError:
            report.mismatches.append({"kind": "missing", "file": f"{ident}/{IDENTITY_NAME}"})
        except (ValidationError, ValueError) as exc:
            report.mismatches.append({"kind": "schema", "file": f"{ident}/{IDENTITY_NAME}", "error": str(exc)})
    for e in manifest.entries:
        report.checked += 1
        p = root / e.file
        if not p.is_file():
            report.mismatches.append({"kind": "missing", "file": e.file})
            continue
        digest = _sha256(p.read_bytes())
        if digest != e.sha256:
            report.mismatches.append({"kind": "hash", "file": e.file, "expected": e.sha256, "found": digest})
    if regenerate:
        with tempfile.TemporaryDirectory() as tmp:
            fresh = generate_dataset(config_from_manifest(manifest, tmp, jobs))
        if len(fresh.entries) != len(manifest.entries):
            report.mismatches.append({"kind": "regenerate", "what": "entry count"})
        for old, new in zip(manifest.entries, fresh.entries):
            if old.file != new.file or old.sha256 != new.sha256:
                report.mismatches.append({"kind": "regenerate", "file": old.file,
                                          "expected": old.sha256, "found": new.sha256})
    return report


def load_groups(manifest: DatasetManifest, root_dir: str | Path) -> dict[str, list[np.ndarray]]:
    """Images per identity, in variant-index order."""
    root = Path(root_dir)
    groups: dict[str, list[tuple[int, np.ndarray]]] = {}
    for e in manifest.entries:
        groups.setdefault(e.identity_id, []).append((e.variant_index, read_gray(root / e.file)))
    return {k: [img for _, img in sorted(v, key=lambda t: t[0])] for k, v in groups.items()}

