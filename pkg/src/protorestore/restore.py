"""Learned prototype restoration.

A class-agnostic regressor is trained to pull feature vectors toward
their class centroid.  Training inputs are mined per class: the lam
samples farthest from the full-class centroid (the ones most likely to
be unrepresentative), each paired with that centroid as the regression
target.  At inference the restored prototype is the halfway point
between the regressor output and the original prototype, so a bad
correction can cost at most half the original information.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .featstore import FeatureBank
from .neural import (AdamState, DenseNet2, TrainConfig, adam_step, backward,
                     forward, init_net, load_net, save_net)
from .numerics import RngStream
from .protocore import Prototype

# Stream namespace labels under TrainConfig.seed.
_NS_INIT = 11
_NS_SHUFFLE = 12

DEFAULT_HIDDEN = 256


@dataclass(frozen=True)
class TargetPrototypes:
    """Full-class centroids, the regression targets for restoration."""

    targets: dict[int, np.ndarray]

    def vector_for(self, cid: int) -> np.ndarray:
        return self.targets[cid]


def compute_targets(view: FeatureBank) -> TargetPrototypes:
    """Centroid of every class that has records in the view."""
    targets = {}
    for cid in np.unique(view.class_ids):
        rows = view.vectors[view.class_ids == cid]
        targets[int(cid)] = rows.astype(np.float64).mean(axis=0)
    if not targets:
        raise ValueError("view has no records to build targets from")
    return TargetPrototypes(targets=targets)


@dataclass
class PairSet:
    """Mined (input -> target) training pairs, in per-class rank order."""

    inputs: np.ndarray        # (n_pairs, dim)
    targets: np.ndarray       # (n_pairs, dim)
    class_ids: np.ndarray     # (n_pairs,)
    ranks: np.ndarray         # (n_pairs,) 0 = farthest within its class
    distances: np.ndarray     # (n_pairs,) Euclidean distance to the target
    lam: int

    def dump(self, path) -> Path:
        """Write the mining table as `class_id,rank,distance` text lines."""
        path = Path(path)
        lines = [f"{int(c)},{int(r)},{float(d)!r}\n"
                 for c, r, d in zip(self.class_ids, self.ranks, self.distances)]
        path.write_text("".join(lines), encoding="ascii")
        return path


def collect_pairs(view: FeatureBank, targets: TargetPrototypes, lam: int) -> PairSet:
    """Per class, pair the lam farthest-from-centroid samples with the centroid.

    Distance ties break toward the lower record position in the view, and
    lam is clamped to the class size.  Pairs come out in class order,
    farthest first; shuffling happens later, at training time.
    """
    if lam < 1:
        raise ValueError("lam must be at least 1")
    ins, outs, cids, ranks, dists = [], [], [], [], []
    for cid in np.unique(view.class_ids):
        cid = int(cid)
        if cid not in targets.targets:
            raise KeyError(f"no target prototype for class {cid}")
        rows = view.vectors[view.class_ids == cid].astype(np.float64)
        t = targets.vector_for(cid)
        d = np.sqrt(np.einsum("ij,ij->i", rows - t, rows - t))
        take = min(lam, len(rows))
        # lexsort: primary key -d (farthest first), secondary the row position
        order = np.lexsort((np.arange(len(rows)), -d))[:take]
        ins.append(rows[order])
        outs.append(np.tile(t, (take, 1)))
        cids.append(np.full(take, cid))
        ranks.append(np.arange(take))
        dists.append(d[order])
    return PairSet(inputs=np.vstack(ins), targets=np.vstack(outs),
                   class_ids=np.concatenate(cids), ranks=np.concatenate(ranks),
                   distances=np.concatenate(dists), lam=lam)


@dataclass
class RestoreModel:
    """Trained restoration regressor plus a snapshot of how it was made."""

    net: DenseNet2
    lam: int
    seed: int
    epochs: int
    loss_log: list[float] = field(default_factory=list)


def train_restore(pairs: PairSet, hidden_dim: int = DEFAULT_HIDDEN,
                  train: TrainConfig | None = None) -> RestoreModel:
    """Fit the regressor with Adam on mean-per-batch squared Euclidean loss."""
    train = train or TrainConfig()
    dim = pairs.inputs.shape[1]
    net = init_net(dim, hidden_dim, dim, RngStream(train.seed).child(_NS_INIT))
    state = AdamState(lr=train.learning_rate)
    shuffle_root = RngStream(train.seed).child(_NS_SHUFFLE)
    n = len(pairs.inputs)

    log = []
    for epoch in range(train.epochs):
        state.lr = train.lr_at(epoch)
        order = shuffle_root.child(epoch).generator().permutation(n)
        running = 0.0
        for lo in range(0, n, train.batch_size):
            idx = order[lo:lo + train.batch_size]
            xb = pairs.inputs[idx]
            tb = pairs.targets[idx]
            yb, cache = forward(net, xb)
            diff = yb - tb
            loss = float(np.sum(diff * diff)) / len(idx)
            dy = 2.0 * diff / len(idx)
            grads, _ = backward(net, cache, dy)
            adam_step(state, net.params(), grads)
            running += loss * len(idx)
        epoch_loss = running / n
        if not np.isfinite(epoch_loss):
            raise FloatingPointError(
                f"training diverged at epoch {epoch}: loss={epoch_loss}")
        log.append(epoch_loss)
    return RestoreModel(net=net, lam=pairs.lam, seed=train.seed,
                        epochs=train.epochs, loss_log=log)


def transform(model: RestoreModel, vector: np.ndarray) -> np.ndarray:
    """Raw regressor output for one feature vector."""
    y, _ = forward(model.net, np.asarray(vector, dtype=np.float64))
    return y


_RESTORED_SOURCE = {"raw": "restored", "refined": "refined_restored"}


def restore(model: RestoreModel, proto: Prototype) -> Prototype:
    """Halfway point between the regressor output and the prototype itself."""
    vec = 0.5 * transform(model, proto.vector) + 0.5 * np.asarray(proto.vector,
                                                                  dtype=np.float64)
    source = _RESTORED_SOURCE.get(proto.source, "restored")
    return Prototype(class_id=proto.class_id, vector=vec, source=source)


def save_model(model: RestoreModel, path) -> Path:
    meta = {"kind": "restore", "lam": model.lam, "seed": model.seed,
            "epochs": model.epochs}
    return save_net(model.net, path, meta)


def load_model(path) -> RestoreModel:
    net, meta = load_net(path)
    if meta.get("kind") != "restore":
        raise ValueError(f"checkpoint at {path} is not a restoration model")
    return RestoreModel(net=net, lam=int(meta["lam"]), seed=int(meta["seed"]),
                        epochs=int(meta["epochs"]))
