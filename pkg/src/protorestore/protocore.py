"""Prototype construction and distance-based classification.

A prototype is the arithmetic mean of its support vectors.  Queries are
scored by squared Euclidean distance; class posteriors are the softmax
of the negated distances, so nearer prototypes get higher probability
and the hard argmax agrees with plain nearest-centroid classification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .featstore import FeatureRecord
from .numerics import mean_vec, softmax

SOURCES = ("raw", "restored", "refined", "refined_restored")


@dataclass(frozen=True)
class Prototype:
    """A class representative in feature space, tagged with how it was made."""

    class_id: int
    vector: np.ndarray
    source: str = "raw"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown prototype source {self.source!r}")


def compute_prototype(support: list[FeatureRecord]) -> Prototype:
    """Mean of a nonempty single-class support set."""
    if not support:
        raise ValueError("empty support set")
    cid = support[0].class_id
    if any(r.class_id != cid for r in support):
        raise ValueError("support set mixes classes")
    return Prototype(class_id=cid,
                     vector=mean_vec(np.stack([r.vector for r in support])),
                     source="raw")


def prototype_matrix(prototypes: list[Prototype]) -> tuple[np.ndarray, np.ndarray]:
    """Stack prototypes into (vectors, class_ids) arrays, preserving order."""
    if not prototypes:
        raise ValueError("no prototypes given")
    cids = np.array([p.class_id for p in prototypes])
    if len(set(cids.tolist())) != len(cids):
        raise ValueError("duplicate class among prototypes")
    return np.stack([np.asarray(p.vector, dtype=np.float64) for p in prototypes]), cids


def sq_distances(query: np.ndarray, proto_vecs: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from one query to each prototype row."""
    q = np.asarray(query, dtype=np.float64)
    diff = proto_vecs - q
    return np.einsum("ij,ij->i", diff, diff)


def class_posteriors(query: np.ndarray, prototypes: list[Prototype]) -> np.ndarray:
    """Posterior over prototypes: softmax of negated squared distances.

    Output order matches the prototype order and sums to 1 within 1e-9.
    """
    vecs, _ = prototype_matrix(prototypes)
    return softmax(-sq_distances(query, vecs))


def classify_nn(query: np.ndarray, prototypes: list[Prototype]) -> int:
    """Class of the nearest prototype; exact ties go to the lowest class id."""
    vecs, cids = prototype_matrix(prototypes)
    d = sq_distances(query, vecs)
    best = d == d.min()
    return int(cids[best].min())


def posterior_argmax(posteriors: np.ndarray, class_ids: np.ndarray) -> int:
    """Highest-posterior class, breaking exact ties by lowest class id.

    Matches classify_nn for every input because softmax is monotone in
    the negated distance.
    """
    p = np.asarray(posteriors, dtype=np.float64)
    best = p == p.max()
    return int(np.asarray(class_ids)[best].min())
