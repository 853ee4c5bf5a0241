"""Synthetic feature banks with known class centers and planted outliers.

Each class is a Gaussian cluster around a hidden center; a fixed
fraction of its samples is additionally displaced along a random unit
direction, which makes them land measurably farther from the class
center than the clean samples.  The true centers and outlier flags are
never stored in the bank itself; they go to a separate oracle sidecar
so nothing downstream can accidentally exploit them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .featstore import FeatureBank, SplitManifest
from .numerics import RngStream

# Stream namespace labels (children of the generator seed).
_NS_CLASS = 101


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic bank.

    The defaults are the desk-scale benchmark: clusters overlap enough
    that one-shot accuracy lands mid-range, which leaves headroom for
    prototype restoration to show up in the metrics.
    """

    n_classes: int = 20
    dim: int = 64
    per_class: int = 200
    cluster_std: float = 0.6
    center_scale: float = 0.4
    outlier_frac: float = 0.3
    outlier_offset: float = 6.0
    seed: int = 0
    split_counts: tuple[int, int, int] = (10, 1, 9)   # base, val, novel

    def __post_init__(self):
        if self.n_classes < 1 or self.dim < 1:
            raise ValueError("n_classes and dim must be positive")
        if self.per_class < 2:
            raise ValueError("per_class must be at least 2")
        if not 0.0 <= self.outlier_frac < 1.0:
            raise ValueError("outlier_frac must be in [0, 1)")
        if self.cluster_std < 0 or self.center_scale <= 0 or self.outlier_offset < 0:
            raise ValueError("scales must be nonnegative, center_scale positive")
        if self.n_outliers >= self.per_class:
            raise ValueError("outlier_frac leaves no clean samples per class")
        if sum(self.split_counts) != self.n_classes:
            raise ValueError(f"split_counts {self.split_counts} must sum to "
                             f"n_classes {self.n_classes}")

    @property
    def n_outliers(self) -> int:
        # exact count per class, not a per-sample coin flip
        return int(round(self.outlier_frac * self.per_class))


@dataclass(frozen=True)
class GroundTruth:
    """Oracle view of a generated bank: true centers and outlier flags."""

    centers: np.ndarray        # (n_classes, dim) float64
    outlier_flags: np.ndarray  # (n_records,) bool


def generate(spec: SynthSpec) -> tuple[FeatureBank, GroundTruth]:
    """Build a bank from the recipe; deterministic in spec.seed.

    Per class: the center is uniform in [-center_scale, center_scale]^dim,
    clean samples are N(center, cluster_std^2 I), and each outlier is a
    clean draw pushed outlier_offset along its own random unit direction.
    Each class consumes an independent child stream, so generation order
    has no bearing on the values.
    """
    root = RngStream(spec.seed).child(_NS_CLASS)
    n_out = spec.n_outliers
    n_clean = spec.per_class - n_out

    centers = np.empty((spec.n_classes, spec.dim))
    vectors = np.empty((spec.n_classes * spec.per_class, spec.dim))
    class_ids = np.repeat(np.arange(spec.n_classes, dtype=np.uint32), spec.per_class)
    flags = np.zeros(spec.n_classes * spec.per_class, dtype=bool)

    for cid in range(spec.n_classes):
        gen = root.child(cid).generator()
        center = gen.uniform(-spec.center_scale, spec.center_scale, size=spec.dim)
        noise = gen.normal(0.0, spec.cluster_std, size=(spec.per_class, spec.dim))
        samples = center + noise
        if n_out:
            dirs = gen.normal(size=(n_out, spec.dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            samples[n_clean:] += spec.outlier_offset * dirs
        lo = cid * spec.per_class
        centers[cid] = center
        vectors[lo:lo + spec.per_class] = samples
        flags[lo + n_clean:lo + spec.per_class] = True

    split_of = {}
    bounds = np.cumsum((0,) + spec.split_counts)
    for split, lo, hi in zip(("base", "val", "novel"), bounds[:-1], bounds[1:]):
        for cid in range(lo, hi):
            split_of[cid] = split

    manifest = SplitManifest(
        split_of=split_of,
        names={c: f"synth_{c:02d}" for c in range(spec.n_classes)},
        provenance=(f"synthgen seed={spec.seed} classes={spec.n_classes} "
                    f"dim={spec.dim} per_class={spec.per_class} "
                    f"cluster_std={spec.cluster_std} center_scale={spec.center_scale} "
                    f"outlier_frac={spec.outlier_frac} "
                    f"outlier_offset={spec.outlier_offset}"),
    )
    bank = FeatureBank(dim=spec.dim, class_ids=class_ids,
                       vectors=vectors.astype(np.float32), manifest=manifest)
    return bank, GroundTruth(centers=centers, outlier_flags=flags)


def oracle_path(bank_path) -> Path:
    return Path(bank_path).with_suffix(".oracle.txt")


def save_oracle(truth: GroundTruth, class_ids: np.ndarray, path) -> Path:
    """Write the oracle sidecar: center lines, then one line per record."""
    path = Path(path)
    lines = []
    for cid, center in enumerate(truth.centers):
        coords = ",".join(repr(float(v)) for v in center)
        lines.append(f"center,{cid},{coords}\n")
    for i, (cid, flag) in enumerate(zip(class_ids, truth.outlier_flags)):
        lines.append(f"record,{i},{int(cid)},{int(flag)}\n")
    path.write_text("".join(lines), encoding="ascii")
    return path


def load_oracle(path) -> tuple[np.ndarray, np.ndarray]:
    """Read an oracle sidecar; returns (centers, outlier_flags)."""
    centers = {}
    flags = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        kind, rest = line.split(",", 1)
        if kind == "center":
            cid, coords = rest.split(",", 1)
            centers[int(cid)] = np.array([float(v) for v in coords.split(",")])
        elif kind == "record":
            _, _, flag = rest.split(",")
            flags.append(bool(int(flag)))
        else:
            raise ValueError(f"unknown oracle line kind {kind!r}")
    stack = np.vstack([centers[c] for c in sorted(centers)])
    return stack, np.array(flags, dtype=bool)
