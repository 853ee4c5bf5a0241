"""Deterministic vector math shared by every pipeline stage.

Everything here is ordinary numpy, but the contracts are strict: fixed
inputs give fixed output bytes, so any pipeline built on these helpers
can be replayed exactly from its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1

# SplitMix64 multipliers, used to derive well-dispersed child stream ids.
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB


def _mix64(a: int, b: int) -> int:
    x = ((a & _MASK64) * _GOLDEN + (b & _MASK64)) & _MASK64
    x ^= x >> 30
    x = (x * _MIX_A) & _MASK64
    x ^= x >> 27
    x = (x * _MIX_B) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Two streams built independently from the same key produce the same
    draw sequence on every platform, and `child` derives statistically
    independent sub-streams without sharing mutable state.  That makes
    parallel episode evaluation deterministic regardless of scheduling:
    each unit of work owns the stream derived from its index.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, label: int) -> "RngStream":
        """Derive the sub-stream for an integer label (e.g. an episode index)."""
        return RngStream(self.seed, _mix64(self.stream_id, label))


def sq_euclidean(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Euclidean distance between two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.dot(d, d))


def softmax(scores: np.ndarray) -> np.ndarray:
    """Numerically safe softmax over the last axis.

    The running maximum is subtracted before exponentiation, so scores
    around +-1e3 stay finite.  Output rows sum to 1 within 1e-9.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("softmax of an empty score vector")
    shifted = s - np.max(s, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def mean_vec(vectors: np.ndarray) -> np.ndarray:
    """Arithmetic mean of a nonempty stack of equal-length vectors."""
    m = np.asarray(vectors, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError("mean_vec needs a nonempty (n, dim) stack")
    return m.mean(axis=0)


def ci95(values: np.ndarray) -> tuple[float, float]:
    """Mean and 95% normal-approximation half-width of a sample.

    half_width = 1.96 * s / sqrt(n) with s the (n-1)-denominator sample
    standard deviation.  A single value has half-width 0.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("ci95 needs a nonempty 1-d sample")
    mean = float(v.mean())
    if v.size == 1:
        return mean, 0.0
    s = float(v.std(ddof=1))
    return mean, 1.96 * s / np.sqrt(v.size)


def format_mean_ci(mean_pct: float, half_pct: float) -> str:
    """Render an accuracy interval the way reports print it, e.g. 59.28+-0.20."""
    return f"{mean_pct:.2f}±{half_pct:.2f}"


def pca2d(vectors: np.ndarray) -> np.ndarray:
    """Project a stack of vectors onto its top two principal components.

    Components are orthonormal directions of maximal variance of the
    centered data.  Sign convention: the first nonzero loading of each
    component is positive, so repeated runs emit identical bytes.
    Raises ValueError when the data has no spread at all.
    """
    m = np.asarray(vectors, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ValueError("pca2d needs at least two vectors")
    centered = m - m.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if svals[0] <= 1e-12 * max(1.0, float(np.abs(m).max())):
        raise ValueError("degenerate input: all vectors identical, no principal directions")
    comps = vt[:2] if vt.shape[0] >= 2 else np.vstack([vt[0], np.zeros_like(vt[0])])
    for i in range(comps.shape[0]):
        nz = np.nonzero(np.abs(comps[i]) > 1e-12)[0]
        if nz.size and comps[i, nz[0]] < 0:
            comps[i] = -comps[i]
    return centered @ comps.T


def write_plot_points(path, xys: np.ndarray, class_ids, tags) -> None:
    """Write projected points as plot-data text: one `x,y,class_id,tag` line each."""
    xys = np.asarray(xys, dtype=np.float64)
    if xys.ndim != 2 or xys.shape[1] != 2:
        raise ValueError("expected (n, 2) projected points")
    if not (len(xys) == len(class_ids) == len(tags)):
        raise ValueError("points, class_ids and tags must align")
    lines = ["x,y,class_id,tag\n"]
    lines += [f"{float(x)!r},{float(y)!r},{int(c)},{t}\n"
              for (x, y), c, t in zip(xys, class_ids, tags)]
    with open(path, "w", encoding="ascii") as fh:
        fh.writelines(lines)
