"""Self-training refinement of prototypes from unlabeled vectors.

Each initial prototype retrieves its gamma nearest unlabeled vectors and
is replaced by the mean of its support set plus the retrieved vectors.
Labels of the pool are never consulted; retrieval is purely geometric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import mean_vec
from .protocore import Prototype

POOL_MODES = ("leave_one_out_query", "external_pool")


@dataclass(frozen=True)
class UnlabeledPool:
    """Unlabeled vectors available for refinement, tagged with their origin.

    mode "leave_one_out_query": the pool is the episode's own query set,
    and the vector currently being classified must be excluded before
    refining (build a per-query pool with `without`).
    mode "external_pool": an extra unlabeled set, usable as-is.
    """

    vectors: np.ndarray
    mode: str

    def __post_init__(self):
        if self.mode not in POOL_MODES:
            raise ValueError(f"unknown pool mode {self.mode!r}")
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("pool vectors must be a (n, dim) stack")
        object.__setattr__(self, "vectors", v)

    def without(self, index: int) -> "UnlabeledPool":
        """Pool minus one row; the leave-one-out view for that query."""
        if not 0 <= index < len(self.vectors):
            raise IndexError(f"pool has no row {index}")
        keep = np.delete(self.vectors, index, axis=0)
        return UnlabeledPool(vectors=keep, mode=self.mode)


def refine_prototype(proto: Prototype, support: np.ndarray,
                     pool: UnlabeledPool, gamma: int) -> Prototype:
    """Mean of support plus the gamma pool vectors nearest to the prototype.

    gamma=0 degenerates to the plain support mean, which for a one-shot
    support is the original prototype bit for bit.  Distance ties break
    toward the lower pool index.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma > len(pool.vectors):
        raise ValueError(f"gamma={gamma} exceeds pool size {len(pool.vectors)}")
    support = np.asarray(support, dtype=np.float64)
    if support.ndim != 2 or support.shape[0] == 0:
        raise ValueError("support must be a nonempty (k, dim) stack")

    if gamma == 0:
        members = support
    else:
        diff = pool.vectors - np.asarray(proto.vector, dtype=np.float64)
        d = np.einsum("ij,ij->i", diff, diff)
        nearest = np.lexsort((np.arange(len(d)), d))[:gamma]
        members = np.vstack([support, pool.vectors[nearest]])
    return Prototype(class_id=proto.class_id, vector=mean_vec(members),
                     source="refined")
