"""Export class-per-directory image trees as feature banks.

Walks a dataset laid out as one directory per class, pushes every image
through a frozen convolutional backbone (global-pooled penultimate
layer, so no class head), and writes the features as an FBANK bank plus
JSON manifest, ready for the protorestore toolkit.

The bank writer is restated here rather than imported so the exporter
runs without the consumer installed; the round-trip tests pin byte
compatibility against the consumer's loader.  Layout, little-endian:

    magic   4 bytes  b"FBNK"
    version u32      currently 1
    dim     u32      feature length
    n       u64      record count
    classes u32      class count (ids are dense 0..classes-1)
    records n * (class_id u32, dim * f32)

Sidecar (same basename, `.manifest.json`): {"classes": {id: {name,
split}}, "provenance": ...}.  Class ids are assigned by lexicographic
class-name order and files are processed in lexicographic order within
each class, so re-exporting an identical spec reproduces the bank
byte for byte (on the same torch build).  Inference is batched; torch
parallelizes within a batch; the output is written once at the end.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision import models, transforms

__version__ = "0.1.0"

MAGIC = b"FBNK"
VERSION = 1
_HEADER = struct.Struct("<4sIIQI")

SPLITS = ("base", "val", "novel")

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".gif", ".webp")

# feature width of the global-pooled penultimate layer, per architecture
_BACKBONES = {
    "resnet18": (models.resnet18, 512),
    "resnet34": (models.resnet34, 512),
    "resnet50": (models.resnet50, 2048),
}

# fixed init seed: an identical spec must reproduce identical bank bytes
# even when no weights file is given
_INIT_SEED = 0


@dataclass(frozen=True)
class PreprocessProfile:
    """Deterministic eval-time image pipeline; constants go in provenance."""

    resize: int = 256   # shorter side
    crop: int = 224     # center crop
    mean: tuple[float, float, float] = (0.485, 0.456, 0.406)
    std: tuple[float, float, float] = (0.229, 0.224, 0.225)

    def __post_init__(self):
        if self.crop <= 0 or self.resize <= 0:
            raise ValueError("resize and crop must be positive")
        if self.crop > self.resize:
            raise ValueError(f"crop {self.crop} exceeds resize {self.resize}")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ValueError("mean and std must have 3 channels")
        if any(s <= 0 for s in self.std):
            raise ValueError("std entries must be positive")

    def describe(self) -> str:
        m = ",".join(f"{v:g}" for v in self.mean)
        s = ",".join(f"{v:g}" for v in self.std)
        return f"resize={self.resize} crop={self.crop} mean=({m}) std=({s})"


@dataclass(frozen=True)
class ExportSpec:
    """Everything that determines an export, and nothing else."""

    root: Path
    split_file: Path
    out_path: Path
    backbone: str = "resnet18"
    weights_path: Path | None = None
    profile: PreprocessProfile = field(default_factory=PreprocessProfile)
    batch_size: int = 32

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        object.__setattr__(self, "split_file", Path(self.split_file))
        object.__setattr__(self, "out_path", Path(self.out_path))
        if self.weights_path is not None:
            object.__setattr__(self, "weights_path", Path(self.weights_path))
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class ExportResult:
    bank_path: Path
    n_records: int
    dim: int
    class_names: tuple[str, ...]            # index = class id
    skipped: tuple[tuple[str, str], ...]    # (path, reason) per unreadable image


def scan_tree(root) -> dict[str, list[Path]]:
    """Class name -> lexicographically sorted image paths.

    A class is an immediate subdirectory of `root`; hidden entries and
    non-image suffixes are ignored.  Every class must hold at least one
    image file.
    """
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"dataset root {root} is not a directory")
    classes: dict[str, list[Path]] = {}
    for d in sorted(p for p in root.iterdir()
                    if p.is_dir() and not p.name.startswith(".")):
        files = sorted(f for f in d.iterdir()
                       if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise ValueError(f"class directory {d.name!r} has no images")
        classes[d.name] = files
    if not classes:
        raise ValueError(f"no class directories under {root}")
    return classes


def read_split_file(path) -> dict[str, str]:
    """Parse `class_name,split` lines into {name: split}.

    Blank lines and `#` comments are allowed; splits must be one of
    base/val/novel and every class may appear once.
    """
    path = Path(path)
    splits: dict[str, str] = {}
    for ln, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or not parts[0]:
            raise ValueError(f"{path}:{ln}: expected 'class_name,split'")
        name, split = parts
        if split not in SPLITS:
            raise ValueError(f"{path}:{ln}: unknown split {split!r} "
                             f"(want one of {', '.join(SPLITS)})")
        if name in splits:
            raise ValueError(f"{path}:{ln}: duplicate class {name!r}")
        splits[name] = split
    if not splits:
        raise ValueError(f"split file {path} lists no classes")
    return splits


def build_backbone(name: str, weights_path=None):
    """Construct the headless backbone in eval mode.

    Returns (net, feature_dim, weights_note).  Without a weights file
    the net is randomly initialized from a fixed seed; with one, the
    state dict is loaded (a missing classifier head is tolerated, any
    other mismatch is an error) and its digest recorded for provenance.
    """
    try:
        ctor, dim = _BACKBONES[name]
    except KeyError:
        raise ValueError(f"unknown backbone {name!r}; choices: "
                         f"{', '.join(sorted(_BACKBONES))}") from None
    torch.manual_seed(_INIT_SEED)
    net = ctor(weights=None)
    if weights_path is None:
        note = f"random(seed={_INIT_SEED})"
    else:
        weights_path = Path(weights_path)
        blob = weights_path.read_bytes()
        try:
            sd = torch.load(weights_path, map_location="cpu", weights_only=True)
        except Exception as exc:  # torch raises several loader-specific types
            raise ValueError(f"cannot read weights file {weights_path}: {exc}") from exc
        if isinstance(sd, dict) and "state_dict" in sd:
            sd = sd["state_dict"]
        try:
            got = net.load_state_dict(sd, strict=False)
        except RuntimeError as exc:  # shape mismatch
            raise ValueError(f"weights do not fit {name}: {exc}") from exc
        missing = [k for k in got.missing_keys if not k.startswith("fc.")]
        if missing or got.unexpected_keys:
            raise ValueError(f"weights do not fit {name}: missing {missing}, "
                             f"unexpected {list(got.unexpected_keys)}")
        note = f"file:{weights_path.name} sha256:{hashlib.sha256(blob).hexdigest()[:12]}"
    net.fc = torch.nn.Identity()  # keep the global-pooled features only
    net.eval()
    return net, dim, note


def _probe_dim(net, name: str, declared: int, crop: int) -> None:
    with torch.no_grad():
        out = net(torch.zeros(1, 3, crop, crop))
    if out.ndim != 2 or out.shape[1] != declared:
        raise ValueError(f"backbone {name!r} produced {tuple(out.shape)} features, "
                         f"expected (1, {declared})")


def _load_image(path: Path, pipeline) -> torch.Tensor:
    with Image.open(path) as img:
        return pipeline(img.convert("RGB"))


def _write_bank(path: Path, class_ids: np.ndarray, vectors: np.ndarray,
                names: list[str], split_of: list[str], provenance: str) -> Path:
    dim = vectors.shape[1]
    header = _HEADER.pack(MAGIC, VERSION, dim, len(class_ids), len(names))
    rec_dtype = np.dtype([("class_id", "<u4"), ("vector", "<f4", (dim,))])
    body = np.empty(len(class_ids), dtype=rec_dtype)
    body["class_id"] = class_ids
    body["vector"] = vectors
    path.write_bytes(header + body.tobytes())

    doc = {
        "provenance": provenance,
        "classes": {str(cid): {"name": names[cid], "split": split_of[cid]}
                    for cid in range(len(names))},
    }
    mpath = path.with_suffix(".manifest.json")
    mpath.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n",
                     encoding="utf-8")
    return path


def export_features(spec: ExportSpec) -> ExportResult:
    """Extract one feature record per readable image and write the bank.

    Unreadable images are skipped and reported in the result; the split
    file must cover exactly the classes found on disk.
    """
    classes = scan_tree(spec.root)
    split_by_name = read_split_file(spec.split_file)
    missing = sorted(set(classes) - set(split_by_name))
    if missing:
        raise ValueError(f"split file does not cover: {', '.join(missing)}")
    extra = sorted(set(split_by_name) - set(classes))
    if extra:
        raise ValueError(f"split file names absent classes: {', '.join(extra)}")

    net, dim, weights_note = build_backbone(spec.backbone, spec.weights_path)
    _probe_dim(net, spec.backbone, dim, spec.profile.crop)
    pipeline = transforms.Compose([
        transforms.Resize(spec.profile.resize),
        transforms.CenterCrop(spec.profile.crop),
        transforms.ToTensor(),
        transforms.Normalize(mean=spec.profile.mean, std=spec.profile.std),
    ])

    names = sorted(classes)
    todo = [(cid, f) for cid, name in enumerate(names) for f in classes[name]]

    ids: list[int] = []
    chunks: list[np.ndarray] = []
    skipped: list[tuple[str, str]] = []
    batch_ids: list[int] = []
    batch: list[torch.Tensor] = []

    def flush():
        if not batch:
            return
        with torch.no_grad():
            out = net(torch.stack(batch))
        chunks.append(out.numpy().astype(np.float32, copy=False))
        ids.extend(batch_ids)
        batch.clear()
        batch_ids.clear()

    for cid, f in todo:
        try:
            tensor = _load_image(f, pipeline)
        except (OSError, ValueError) as exc:
            skipped.append((str(f), str(exc) or type(exc).__name__))
            continue
        batch.append(tensor)
        batch_ids.append(cid)
        if len(batch) == spec.batch_size:
            flush()
    flush()

    if not ids:
        raise ValueError("no readable images under the dataset root")
    vectors = np.concatenate(chunks, axis=0)
    bad = np.nonzero(~np.isfinite(vectors).all(axis=1))[0]
    if bad.size:
        raise ValueError(f"backbone produced non-finite features (record {int(bad[0])})")

    provenance = (f"featexport {__version__} backbone={spec.backbone}({dim}d) "
                  f"weights={weights_note} preprocess[{spec.profile.describe()}] "
                  f"root={spec.root.name} splits={spec.split_file.name} "
                  f"images={len(ids)} skipped={len(skipped)}")
    _write_bank(spec.out_path, np.asarray(ids, dtype=np.uint32), vectors,
                names, [split_by_name[n] for n in names], provenance)
    return ExportResult(bank_path=spec.out_path, n_records=len(ids), dim=dim,
                        class_names=tuple(names), skipped=tuple(skipped))
