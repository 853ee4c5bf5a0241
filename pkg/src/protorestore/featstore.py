"""Feature bank storage: typed in-memory banks and the FBANK disk format.

An FBANK file is little-endian throughout:

    magic   4 bytes  b"FBNK"
    version u32      currently 1
    dim     u32      feature length
    n       u64      record count
    classes u32      class count (ids are dense 0..classes-1)
    records n * (class_id u32, dim * f32)

Class names and split assignments never enter the binary; they live in a
JSON sidecar next to the bank (same basename, `.manifest.json` suffix)
together with a free-form provenance string.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"FBNK"
VERSION = 1
_HEADER = struct.Struct("<4sIIQI")

SPLITS = ("base", "val", "novel")


class BankFormatError(ValueError):
    """Base class for malformed bank files."""


class BadMagicError(BankFormatError):
    pass


class VersionError(BankFormatError):
    pass


class TruncatedError(BankFormatError):
    pass


class NonFiniteError(BankFormatError):
    pass


@dataclass(frozen=True)
class FeatureRecord:
    """One stored feature vector with its class label."""

    class_id: int
    vector: np.ndarray


@dataclass(frozen=True)
class SplitManifest:
    """Assignment of every class id to exactly one of base/val/novel."""

    split_of: dict[int, str]
    names: dict[int, str] = field(default_factory=dict)
    provenance: str = ""

    def __post_init__(self):
        for cid, split in self.split_of.items():
            if split not in SPLITS:
                raise ValueError(f"class {cid}: unknown split {split!r}")
        for cid in self.names:
            if cid not in self.split_of:
                raise ValueError(f"name given for class {cid} missing from splits")
        # normalize: every class gets a name, so banks compare and
        # round-trip independently of who filled the defaults in
        full = {cid: self.names.get(cid, f"class_{cid}") for cid in self.split_of}
        object.__setattr__(self, "names", full)

    def classes_in(self, split: str) -> list[int]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return sorted(c for c, s in self.split_of.items() if s == split)

    def name_of(self, cid: int) -> str:
        return self.names.get(cid, f"class_{cid}")


@dataclass
class FeatureBank:
    """Columnar stack of feature records plus their split manifest.

    `vectors` is float32 (the storage precision); math downstream
    promotes to float64.  Banks are treated as immutable once built.
    """

    dim: int
    class_ids: np.ndarray
    vectors: np.ndarray
    manifest: SplitManifest

    def __post_init__(self):
        self.class_ids = np.asarray(self.class_ids, dtype=np.uint32)
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        self.validate()

    @property
    def n_records(self) -> int:
        return int(self.class_ids.shape[0])

    @property
    def n_classes(self) -> int:
        return len(self.manifest.split_of)

    def validate(self) -> None:
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.vectors.shape != (self.n_records, self.dim):
            raise ValueError(f"vectors shape {self.vectors.shape} does not match "
                             f"({self.n_records}, {self.dim})")
        n_cls = self.n_classes
        if sorted(self.manifest.split_of) != list(range(n_cls)):
            raise ValueError("manifest must cover the dense class range exactly")
        if self.n_records and int(self.class_ids.max()) >= n_cls:
            raise ValueError(f"record class id {int(self.class_ids.max())} "
                             f">= class count {n_cls}")
        if not np.all(np.isfinite(self.vectors)):
            bad = int(np.nonzero(~np.isfinite(self.vectors).all(axis=1))[0][0])
            raise NonFiniteError(f"non-finite value in record {bad}")

    def record(self, i: int) -> FeatureRecord:
        return FeatureRecord(int(self.class_ids[i]), self.vectors[i])

    def records(self):
        for i in range(self.n_records):
            yield self.record(i)

    def positions_of_class(self, cid: int) -> np.ndarray:
        return np.nonzero(self.class_ids == cid)[0]

    def equals(self, other: "FeatureBank") -> bool:
        return (self.dim == other.dim
                and np.array_equal(self.class_ids, other.class_ids)
                and np.array_equal(self.vectors, other.vectors)
                and self.manifest.split_of == other.manifest.split_of
                and self.manifest.names == other.manifest.names)


def manifest_path(path) -> Path:
    return Path(path).with_suffix(".manifest.json")


def save_bank(bank: FeatureBank, path) -> Path:
    """Write bank + manifest sidecar; returns the bank path."""
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, bank.dim, bank.n_records, bank.n_classes)
    rec_dtype = np.dtype([("class_id", "<u4"), ("vector", "<f4", (bank.dim,))])
    body = np.empty(bank.n_records, dtype=rec_dtype)
    body["class_id"] = bank.class_ids
    body["vector"] = bank.vectors
    path.write_bytes(header + body.tobytes())

    doc = {
        "provenance": bank.manifest.provenance,
        "classes": {
            str(cid): {"name": bank.manifest.name_of(cid),
                       "split": bank.manifest.split_of[cid]}
            for cid in sorted(bank.manifest.split_of)
        },
    }
    manifest_path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n",
                                   encoding="utf-8")
    return path


def load_bank(path) -> FeatureBank:
    """Read an FBANK file and its manifest sidecar, validating both."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedError(f"file shorter than the {_HEADER.size}-byte header")
    magic, version, dim, n_records, n_classes = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionError(f"unsupported version {version}, expected {VERSION}")
    if dim == 0:
        raise BankFormatError("declared dim is zero")
    rec_size = 4 + 4 * dim
    body = raw[_HEADER.size:]
    expected = n_records * rec_size
    if len(body) != expected:
        reached = len(body) // rec_size
        raise TruncatedError(
            f"size mismatch: {n_records} records declared, data ends "
            f"inside record {min(reached, n_records - 1) if n_records else 0} "
            f"({len(body)} of {expected} body bytes)")

    rec_dtype = np.dtype([("class_id", "<u4"), ("vector", "<f4", (dim,))])
    parsed = np.frombuffer(body, dtype=rec_dtype, count=n_records)
    class_ids = parsed["class_id"].copy()
    vectors = parsed["vector"].reshape(n_records, dim).copy()

    finite = np.isfinite(vectors).all(axis=1) if n_records else np.ones(0, bool)
    if not finite.all():
        raise NonFiniteError(f"non-finite value in record {int(np.nonzero(~finite)[0][0])}")

    mpath = manifest_path(path)
    if not mpath.exists():
        raise BankFormatError(f"manifest sidecar missing: {mpath}")
    doc = json.loads(mpath.read_text(encoding="utf-8"))
    split_of = {int(cid): entry["split"] for cid, entry in doc["classes"].items()}
    names = {int(cid): entry["name"] for cid, entry in doc["classes"].items()}
    manifest = SplitManifest(split_of=split_of, names=names,
                             provenance=doc.get("provenance", ""))
    if len(split_of) != n_classes:
        raise BankFormatError(f"manifest lists {len(split_of)} classes, "
                              f"header declares {n_classes}")
    return FeatureBank(dim=dim, class_ids=class_ids, vectors=vectors,
                       manifest=manifest)


def view_split(bank: FeatureBank, split: str) -> FeatureBank:
    """Bank restricted to the records whose class belongs to `split`.

    Class ids are preserved, so a view interoperates with prototypes and
    targets computed elsewhere.  An empty split yields an empty view.
    """
    wanted = set(bank.manifest.classes_in(split))
    mask = np.isin(bank.class_ids, sorted(wanted))
    return FeatureBank(dim=bank.dim,
                       class_ids=bank.class_ids[mask],
                       vectors=bank.vectors[mask],
                       manifest=bank.manifest)
