"""Episodic embedding training with a dual objective.

Episodes are N-way K-shot draws from a bank view.  The embedding net is
trained so that (a) queries classify correctly against the episode's
prototype means, and (b) an auxiliary linear-softmax head can recover
every sample's global class.  Both terms are plain cross-entropy; their
weighted sum is backpropagated by hand, including the path through the
prototype means.  The auxiliary head is a training scaffold and is
discarded once the embedding is frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .featstore import FeatureBank
from .neural import (AdamState, DenseNet2, TrainConfig, adam_step, backward,
                     forward, init_net, save_net, load_net)
from .numerics import RngStream, softmax

_NS_EMBED_INIT = 21
_NS_HEAD_INIT = 22
_NS_EPISODES = 23

HEAD_HIDDEN = 256

# Full-scale episodic protocol (for real feature banks): 30-way 1-shot
# with 10 queries per class, 600 episodes per epoch, initial lr 1e-3
# halved every 20 epochs.  The desk-scale defaults below train in
# seconds on the synthetic benchmark instead.
FULL_SCALE = {"n_way": 30, "k_shot": 1, "q_queries": 10,
              "episodes_per_epoch": 600, "learning_rate": 1e-3,
              "schedule": "halve_every", "halve_every": 20}


@dataclass(frozen=True)
class EpisodeSpec:
    """Shape of one few-shot episode."""

    n_way: int = 5
    k_shot: int = 1
    q_queries: int = 10

    def __post_init__(self):
        if self.n_way < 2:
            raise ValueError("n_way must be at least 2")
        if self.k_shot < 1 or self.q_queries < 1:
            raise ValueError("k_shot and q_queries must be positive")

    def check_feasible(self, view: FeatureBank, extra_per_class: int = 0) -> None:
        classes = np.unique(view.class_ids)
        if len(classes) < self.n_way:
            raise ValueError(f"episode needs {self.n_way} classes, "
                             f"view has {len(classes)}")
        need = self.k_shot + self.q_queries + extra_per_class
        for cid in classes:
            have = int(np.sum(view.class_ids == cid))
            if have < need:
                raise ValueError(f"class {int(cid)} has {have} records, "
                                 f"episode needs {need} per class")


@dataclass(frozen=True)
class Episode:
    """Sampled row indices into a view: support and queries per class.

    Rows are grouped by class in sampled order; local class c occupies
    support rows [c*k_shot, (c+1)*k_shot) and query rows
    [c*q_queries, (c+1)*q_queries).
    """

    classes: np.ndarray          # (n_way,) global class ids, sampled order
    support_rows: np.ndarray     # (n_way * k_shot,) view row indices
    query_rows: np.ndarray       # (n_way * q_queries,) view row indices


def sample_episode(view: FeatureBank, spec: EpisodeSpec,
                   stream: RngStream) -> Episode:
    """Draw one episode: classes without replacement, then records without
    replacement per class, the first k_shot of them forming the support."""
    spec.check_feasible(view)
    gen = stream.generator()
    class_list = np.unique(view.class_ids)
    classes = gen.choice(class_list, size=spec.n_way, replace=False)
    sup, que = [], []
    for cid in classes:
        members = view.positions_of_class(int(cid))
        picked = gen.choice(members, size=spec.k_shot + spec.q_queries,
                            replace=False)
        sup.append(picked[:spec.k_shot])
        que.append(picked[spec.k_shot:])
    return Episode(classes=classes.astype(np.int64),
                   support_rows=np.concatenate(sup),
                   query_rows=np.concatenate(que))


@dataclass(frozen=True)
class DualLossConfig:
    """Weights of the two loss terms."""

    w_proto: float = 1.0
    w_cls: float = 1.0

    def __post_init__(self):
        if self.w_proto < 0 or self.w_cls < 0:
            raise ValueError("loss weights must be nonnegative")


def episode_loss(embed: DenseNet2, head: DenseNet2,
                 support_x: np.ndarray, query_x: np.ndarray,
                 spec: EpisodeSpec, head_labels: np.ndarray,
                 dual: DualLossConfig):
    """Dual loss and exact gradients for one episode.

    `head_labels` gives the auxiliary head's target index for every row
    of support_x followed by query_x.  Returns
    (loss, grads_embed, grads_head); gradients are invalid (error) if
    the loss is non-finite.
    """
    n, k, q = spec.n_way, spec.k_shot, spec.q_queries
    xs = np.vstack([support_x, query_x])
    emb, cache = forward(embed, xs)
    n_sup = n * k
    e_sup = emb[:n_sup]
    e_que = emb[n_sup:]

    protos = e_sup.reshape(n, k, -1).mean(axis=1)
    diff = e_que[:, None, :] - protos[None, :, :]          # (nq, n, dim)
    d2 = np.einsum("qcd,qcd->qc", diff, diff)
    post = softmax(-d2)
    local = np.repeat(np.arange(n), q)
    n_que = len(e_que)
    loss_proto = float(-np.log(np.maximum(post[np.arange(n_que), local],
                                          1e-300)).mean())

    d_scores = post.copy()
    d_scores[np.arange(n_que), local] -= 1.0
    d_scores *= dual.w_proto / n_que                        # dL/d(-d2)
    # scores are -d2: d(-d2)/de_q = -2*diff, d(-d2)/dproto = +2*diff
    de = np.zeros_like(emb)
    de[n_sup:] = -2.0 * np.einsum("qc,qcd->qd", d_scores, diff)
    d_protos = 2.0 * np.einsum("qc,qcd->cd", d_scores, diff)
    de[:n_sup] = np.repeat(d_protos / k, k, axis=0)

    logits, head_cache = forward(head, emb)
    probs = softmax(logits)
    rows = np.arange(len(emb))
    loss_cls = float(-np.log(np.maximum(probs[rows, head_labels],
                                        1e-300)).mean())
    d_logits = probs
    d_logits[rows, head_labels] -= 1.0
    d_logits *= dual.w_cls / len(emb)
    grads_head, d_emb_from_head = backward(head, head_cache, d_logits)
    de += d_emb_from_head

    grads_embed, _ = backward(embed, cache, de)
    loss = dual.w_proto * loss_proto + dual.w_cls * loss_cls
    if not np.isfinite(loss):
        raise FloatingPointError(f"episode loss is non-finite: {loss}")
    return loss, grads_embed, grads_head


@dataclass
class EmbedTrainResult:
    """Frozen embedding plus the training trace."""

    embed: DenseNet2
    config: dict
    loss_log: list[str] = field(default_factory=list)   # "epoch,episode,loss"
    epoch_means: list[float] = field(default_factory=list)


def train_embedding(view: FeatureBank, spec: EpisodeSpec,
                    dual: DualLossConfig, train: TrainConfig,
                    episodes_per_epoch: int = 100,
                    hidden_dim: int = 64, embed_dim: int = 64,
                    head_hidden: int = HEAD_HIDDEN) -> EmbedTrainResult:
    """Episodic training of the embedding on one view (normally base).

    The auxiliary head sees one output per class present in the view,
    indexed by sorted class id.  Episode sampling, both inits and
    nothing else consume randomness, all derived from train.seed.
    """
    spec.check_feasible(view)
    head_classes = [int(c) for c in np.unique(view.class_ids)]
    index_of = {cid: i for i, cid in enumerate(head_classes)}

    root = RngStream(train.seed)
    embed = init_net(view.dim, hidden_dim, embed_dim, root.child(_NS_EMBED_INIT))
    head = init_net(embed_dim, head_hidden, len(head_classes),
                    root.child(_NS_HEAD_INIT))
    st_embed = AdamState(lr=train.learning_rate)
    st_head = AdamState(lr=train.learning_rate)
    episodes_root = root.child(_NS_EPISODES)

    log, epoch_means = [], []
    for epoch in range(train.epochs):
        lr = train.lr_at(epoch)
        st_embed.lr = lr
        st_head.lr = lr
        total = 0.0
        epoch_stream = episodes_root.child(epoch)
        for i in range(episodes_per_epoch):
            ep = sample_episode(view, spec, epoch_stream.child(i))
            sup_x = view.vectors[ep.support_rows].astype(np.float64)
            que_x = view.vectors[ep.query_rows].astype(np.float64)
            labels = np.array(
                [index_of[int(c)] for c in np.repeat(ep.classes, spec.k_shot)]
                + [index_of[int(c)] for c in np.repeat(ep.classes, spec.q_queries)])
            loss, g_embed, g_head = episode_loss(embed, head, sup_x, que_x,
                                                 spec, labels, dual)
            adam_step(st_embed, embed.params(), g_embed)
            adam_step(st_head, head.params(), g_head)
            total += loss
            log.append(f"{epoch},{i},{loss!r}")
        epoch_means.append(total / episodes_per_epoch)

    config = {"kind": "embed", "seed": train.seed, "epochs": train.epochs,
              "episodes_per_epoch": episodes_per_epoch,
              "n_way": spec.n_way, "k_shot": spec.k_shot,
              "q_queries": spec.q_queries,
              "w_proto": dual.w_proto, "w_cls": dual.w_cls,
              "learning_rate": train.learning_rate, "schedule": train.schedule,
              "halve_every": train.halve_every,
              "hidden_dim": hidden_dim, "embed_dim": embed_dim,
              "head_hidden": head_hidden, "head_classes": head_classes}
    return EmbedTrainResult(embed=embed, config=config, loss_log=log,
                            epoch_means=epoch_means)


def apply_embedding(embed: DenseNet2, bank: FeatureBank) -> FeatureBank:
    """Map every bank vector through the embedding; manifest carries over."""
    if bank.dim != embed.in_dim:
        raise ValueError(f"bank dim {bank.dim} != embedding input {embed.in_dim}")
    out, _ = forward(embed, bank.vectors.astype(np.float64))
    from .featstore import SplitManifest
    manifest = SplitManifest(split_of=dict(bank.manifest.split_of),
                             names=dict(bank.manifest.names),
                             provenance=bank.manifest.provenance
                             + " | embedded")
    return FeatureBank(dim=embed.out_dim, class_ids=bank.class_ids.copy(),
                       vectors=out.astype(np.float32), manifest=manifest)


def save_embedding(result: EmbedTrainResult, path):
    return save_net(result.embed, path, result.config)


def load_embedding(path) -> tuple[DenseNet2, dict]:
    net, meta = load_net(path)
    if meta.get("kind") != "embed":
        raise ValueError(f"checkpoint at {path} is not an embedding")
    return net, meta
