"""Episodic evaluation of prototype pipelines.

Every episode derives its own random stream from (master seed, episode
index), so different pipeline variants, repeat runs and any degree of
worker parallelism all see byte-identical episode sequences.  Reports
carry per-episode accuracies plus a mean with a 95% interval.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .embedtrain import EpisodeSpec, sample_episode
from .featstore import FeatureBank, view_split
from .neural import TrainConfig, forward
from .numerics import RngStream, ci95, format_mean_ci, pca2d, write_plot_points
from .protocore import Prototype
from .restore import (RestoreModel, collect_pairs, compute_targets, restore,
                      train_restore, transform)
from .selftrain import UnlabeledPool, refine_prototype

_NS_EVAL = 31
_NS_POOL = 1          # child of an episode stream
_NS_PROJECT = 41

VARIANTS = ("baseline", "restore", "self", "self_restore")


@dataclass(frozen=True)
class EvalConfig:
    """Everything an evaluation run depends on, apart from the data view."""

    spec: EpisodeSpec = EpisodeSpec()
    n_episodes: int = 2000
    variant: str = "baseline"
    gamma: int = 4
    pool_mode: str = "external_pool"
    split: str = "novel"
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")

    @property
    def needs_model(self) -> bool:
        return self.variant in ("restore", "self_restore")

    @property
    def needs_pool(self) -> bool:
        return self.variant in ("self", "self_restore")


@dataclass
class EvalReport:
    """Outcome of one evaluation run; serialization is deterministic."""

    config: dict
    per_episode: np.ndarray   # accuracy fraction per episode
    mean_pct: float
    ci95_pct: float

    def summary(self) -> str:
        return format_mean_ci(self.mean_pct, self.ci95_pct)

    def to_text(self) -> str:
        lines = [f"{k}={self.config[k]}" for k in sorted(self.config)]
        lines.append(f"n_episodes={len(self.per_episode)}")
        lines.append(f"mean_pct={self.mean_pct!r}")
        lines.append(f"ci95_pct={self.ci95_pct!r}")
        lines.append(f"summary={self.summary()}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    def dump_csv(self, path) -> Path:
        path = Path(path)
        rows = [f"{i},{float(a)!r}\n" for i, a in enumerate(self.per_episode)]
        path.write_text("episode_index,accuracy\n" + "".join(rows),
                        encoding="ascii")
        return path


def _episode_prototypes(view: FeatureBank, episode) -> np.ndarray:
    k = len(episode.support_rows) // len(episode.classes)
    sup = view.vectors[episode.support_rows].astype(np.float64)
    return sup.reshape(len(episode.classes), k, -1).mean(axis=1)


def _classify_block(queries: np.ndarray, protos: np.ndarray,
                    order: np.ndarray) -> np.ndarray:
    """Predicted local class index per query; ties go to the lower class id.

    `order` sorts prototype columns by ascending class id so argmin's
    first-match rule implements the tie-break.
    """
    d = ((queries[:, None, :] - protos[None, order, :]) ** 2).sum(axis=2)
    return order[np.argmin(d, axis=1)]


def _apply_restore(model: RestoreModel, protos: np.ndarray) -> np.ndarray:
    out, _ = forward(model.net, protos)
    return 0.5 * out + 0.5 * protos


def _sample_external_pool(view: FeatureBank, episode, q_queries: int,
                          stream: RngStream) -> np.ndarray:
    """Unlabeled vectors matching the query distribution: the same classes
    and per-class count, drawn from records the episode does not touch."""
    gen = stream.generator()
    used = set(episode.support_rows.tolist()) | set(episode.query_rows.tolist())
    rows = []
    for cid in episode.classes:
        members = view.positions_of_class(int(cid))
        free = members[~np.isin(members, sorted(used))]
        if len(free) < q_queries:
            raise ValueError(f"class {int(cid)} has only {len(free)} records "
                             f"left for the external pool, {q_queries} needed")
        rows.append(gen.choice(free, size=q_queries, replace=False))
    return view.vectors[np.concatenate(rows)].astype(np.float64)


def _episode_accuracy(view: FeatureBank, cfg: EvalConfig,
                      model: RestoreModel | None, index: int) -> float:
    spec = cfg.spec
    ep_stream = RngStream(cfg.seed, 0).child(_NS_EVAL).child(index)
    episode = sample_episode(view, spec, ep_stream)
    protos = _episode_prototypes(view, episode)
    queries = view.vectors[episode.query_rows].astype(np.float64)
    true_local = np.repeat(np.arange(spec.n_way), spec.q_queries)
    order = np.argsort(episode.classes, kind="stable")

    if cfg.variant == "baseline":
        pred = _classify_block(queries, protos, order)
        return float(np.mean(pred == true_local))

    if cfg.variant == "restore":
        pred = _classify_block(queries, _apply_restore(model, protos), order)
        return float(np.mean(pred == true_local))

    # self and self_restore
    sup = view.vectors[episode.support_rows].astype(np.float64)
    sup = sup.reshape(spec.n_way, spec.k_shot, -1)

    def refined(pool: UnlabeledPool) -> np.ndarray:
        outs = []
        for c in range(spec.n_way):
            proto = Prototype(int(episode.classes[c]), protos[c])
            outs.append(refine_prototype(proto, sup[c], pool, cfg.gamma).vector)
        return np.stack(outs)

    def finish(p: np.ndarray) -> np.ndarray:
        return _apply_restore(model, p) if cfg.variant == "self_restore" else p

    if cfg.pool_mode == "external_pool":
        pool_vecs = _sample_external_pool(view, episode, spec.q_queries,
                                          ep_stream.child(_NS_POOL))
        pool = UnlabeledPool(pool_vecs, "external_pool")
        pred = _classify_block(queries, finish(refined(pool)), order)
        return float(np.mean(pred == true_local))

    if cfg.pool_mode == "leave_one_out_query":
        base_pool = UnlabeledPool(queries, "leave_one_out_query")
        correct = 0
        for j in range(len(queries)):
            p = finish(refined(base_pool.without(j)))
            pred = _classify_block(queries[j:j + 1], p, order)
            correct += int(pred[0] == true_local[j])
        return correct / len(queries)

    raise ValueError(f"unknown pool mode {cfg.pool_mode!r}")


def _episode_range(args) -> list[float]:
    view, cfg, model, lo, hi = args
    return [_episode_accuracy(view, cfg, model, i) for i in range(lo, hi)]


def run_eval(view: FeatureBank, cfg: EvalConfig,
             model: RestoreModel | None = None, jobs: int = 1) -> EvalReport:
    """Evaluate one pipeline variant over cfg.n_episodes episodes.

    Episode content depends only on (cfg.seed, episode index), never on
    the variant or on `jobs`, so reports from matching seeds are paired
    and repeat runs are byte-identical.
    """
    if cfg.needs_model and model is None:
        raise ValueError(f"variant {cfg.variant!r} requires a restoration model")
    extra = cfg.spec.q_queries if (cfg.needs_pool
                                   and cfg.pool_mode == "external_pool") else 0
    cfg.spec.check_feasible(view, extra_per_class=extra)
    if cfg.needs_pool and cfg.gamma > 0:
        pool_size = cfg.spec.q_queries * cfg.spec.n_way
        if cfg.pool_mode == "leave_one_out_query":
            pool_size -= 1
        if cfg.gamma > pool_size:
            raise ValueError(f"gamma={cfg.gamma} exceeds pool size {pool_size}")

    if jobs <= 1:
        accs = _episode_range((view, cfg, model, 0, cfg.n_episodes))
    else:
        step = -(-cfg.n_episodes // jobs)
        chunks = [(view, cfg, model, lo, min(lo + step, cfg.n_episodes))
                  for lo in range(0, cfg.n_episodes, step)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_episode_range, chunks))
        accs = [a for part in parts for a in part]

    per_episode = np.array(accs)
    mean, half = ci95(per_episode)
    config = {"variant": cfg.variant, "split": cfg.split,
              "n_way": cfg.spec.n_way, "k_shot": cfg.spec.k_shot,
              "q_queries": cfg.spec.q_queries, "gamma": cfg.gamma,
              "pool_mode": cfg.pool_mode, "seed": cfg.seed,
              "model_lam": model.lam if model else None,
              "model_hidden": model.net.hidden_dim if model else None}
    return EvalReport(config=config, per_episode=per_episode,
                      mean_pct=100.0 * mean, ci95_pct=100.0 * half)


def enhancement(base: EvalReport, other: EvalReport) -> float:
    """Accuracy-point gain of `other` over `base` (paired runs)."""
    return other.mean_pct - base.mean_pct


def paired_ci(base: EvalReport, other: EvalReport) -> tuple[float, float]:
    """Mean and 95% half-width (accuracy points) of per-episode differences."""
    if len(base.per_episode) != len(other.per_episode):
        raise ValueError("reports cover different episode counts")
    mean, half = ci95(other.per_episode - base.per_episode)
    return 100.0 * mean, 100.0 * half


def nway_sweep(view: FeatureBank, ways: list[int], cfg: EvalConfig,
               model: RestoreModel, jobs: int = 1) -> list[dict]:
    """Baseline vs restored accuracy as the episode width grows."""
    rows = []
    for way in ways:
        spec = replace(cfg.spec, n_way=way)
        base = run_eval(view, replace(cfg, spec=spec, variant="baseline"),
                        jobs=jobs)
        rest = run_eval(view, replace(cfg, spec=spec, variant="restore"),
                        model=model, jobs=jobs)
        rows.append({"n_way": way, "baseline": base, "restore": rest,
                     "enhancement": enhancement(base, rest)})
    return rows


def lambda_sweep(bank: FeatureBank, lambdas: list[int], cfg: EvalConfig,
                 hidden_dim: int = 256, train: TrainConfig | None = None,
                 jobs: int = 1) -> list[dict]:
    """Train one restoration model per mining budget and compare them.

    Models train on the bank's base split with identical seeds; every
    evaluation shares the episode sequence fixed by cfg.seed.
    """
    train = train or TrainConfig()
    base_view = view_split(bank, "base")
    eval_view = view_split(bank, cfg.split)
    targets = compute_targets(base_view)
    base = run_eval(eval_view, replace(cfg, variant="baseline"), jobs=jobs)
    rows = []
    for lam in lambdas:
        model = train_restore(collect_pairs(base_view, targets, lam),
                              hidden_dim=hidden_dim, train=train)
        rest = run_eval(eval_view, replace(cfg, variant="restore"),
                        model=model, jobs=jobs)
        rows.append({"lam": lam, "baseline": base, "restore": rest,
                     "enhancement": enhancement(base, rest)})
    return rows


@dataclass
class DistanceStats:
    """Mean distance to the class centroid before and after restoration."""

    mean_raw: float
    mean_transformed: float
    mean_restored: float
    per_class: dict[int, tuple[float, float, float]] = field(default_factory=dict)
    excluded: list[int] = field(default_factory=list)

    def to_text(self) -> str:
        lines = ["class,raw,transformed,restored"]
        for cid in sorted(self.per_class):
            r, t, s = self.per_class[cid]
            lines.append(f"{cid},{r!r},{t!r},{s!r}")
        lines.append(f"all,{self.mean_raw!r},{self.mean_transformed!r},"
                     f"{self.mean_restored!r}")
        return "\n".join(lines) + "\n"


def distance_stats(view: FeatureBank, model: RestoreModel) -> DistanceStats:
    """Treat every record as a one-shot prototype and measure how far the
    raw, transformed and restored versions sit from the class centroid."""
    per_class = {}
    sums = np.zeros(3)
    count = 0
    excluded = []
    for cid in np.unique(view.class_ids):
        cid = int(cid)
        rows = view.vectors[view.class_ids == cid].astype(np.float64)
        if len(rows) < 2:
            excluded.append(cid)
            warnings.warn(f"class {cid} has a single record; excluded from "
                          "distance statistics")
            continue
        center = rows.mean(axis=0)
        transformed, _ = forward(model.net, rows)
        restored = 0.5 * transformed + 0.5 * rows
        d_raw = np.linalg.norm(rows - center, axis=1)
        d_tra = np.linalg.norm(transformed - center, axis=1)
        d_res = np.linalg.norm(restored - center, axis=1)
        per_class[cid] = (float(d_raw.mean()), float(d_tra.mean()),
                          float(d_res.mean()))
        sums += (d_raw.sum(), d_tra.sum(), d_res.sum())
        count += len(rows)
    if count == 0:
        raise ValueError("no class with at least two records")
    return DistanceStats(mean_raw=float(sums[0] / count),
                         mean_transformed=float(sums[1] / count),
                         mean_restored=float(sums[2] / count),
                         per_class=per_class, excluded=excluded)


def projection_extras(view: FeatureBank, model: RestoreModel | None,
                      seed: int) -> list[tuple[np.ndarray, int, str]]:
    """One-shot scene per class: a sampled raw prototype, its restored
    version when a model is given, and the class centroid."""
    stream = RngStream(seed).child(_NS_PROJECT)
    extras = []
    for cid in np.unique(view.class_ids):
        cid = int(cid)
        members = view.positions_of_class(cid)
        pick = int(stream.child(cid).generator().choice(members))
        p = view.vectors[pick].astype(np.float64)
        extras.append((p, cid, "prototype"))
        if model is not None:
            extras.append((0.5 * transform(model, p) + 0.5 * p, cid, "restored"))
        center = view.vectors[view.class_ids == cid].astype(np.float64).mean(axis=0)
        extras.append((center, cid, "center"))
    return extras


def emit_projection(view: FeatureBank,
                    extras: list[tuple[np.ndarray, int, str]], path) -> Path:
    """Project samples plus tagged extras to 2-D and write plot-data text."""
    vecs = [view.vectors.astype(np.float64)]
    cids = list(view.class_ids.astype(int))
    tags = ["sample"] * view.n_records
    for vec, cid, tag in extras:
        vecs.append(np.asarray(vec, dtype=np.float64)[None, :])
        cids.append(int(cid))
        tags.append(tag)
    pts = pca2d(np.vstack(vecs))
    write_plot_points(path, pts, cids, tags)
    return Path(path)
