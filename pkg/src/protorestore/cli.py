"""Command-line front end.

Every subcommand is driven entirely by its flags plus --seed, so a
command line is a complete, replayable description of its output.
Relative output paths land in --out-dir, which falls back to the
PROTORESTORE_OUT environment variable and then the working directory.

Full-scale protocol values for real feature banks (30-way 1-shot
training episodes, 600 per epoch, lr 1e-3 halved every 20 epochs,
10,000 test episodes with 30 queries) are available through the same
flags; the defaults here are the desk-scale synthetic benchmark.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .embedtrain import (DualLossConfig, EpisodeSpec, apply_embedding,
                         load_embedding, save_embedding, train_embedding)
from .evalharness import (EvalConfig, distance_stats, emit_projection,
                          enhancement, lambda_sweep, nway_sweep,
                          projection_extras, run_eval)
from .featstore import load_bank, save_bank, view_split
from .neural import TrainConfig
from .restore import (collect_pairs, compute_targets, load_model, save_model,
                      train_restore)
from .synthgen import SynthSpec, generate, oracle_path, save_oracle


def _out_dir(args) -> Path:
    return Path(args.out_dir or os.environ.get("PROTORESTORE_OUT") or ".")


def _resolve(args, path) -> Path:
    p = Path(path)
    if not p.is_absolute():
        p = _out_dir(args) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _episode_spec(args) -> EpisodeSpec:
    return EpisodeSpec(n_way=args.n_way, k_shot=args.k_shot,
                       q_queries=args.queries)


def _train_config(args, **overrides) -> TrainConfig:
    fields = {"learning_rate": args.lr, "epochs": args.epochs,
              "batch_size": getattr(args, "batch_size", 32),
              "schedule": getattr(args, "schedule", "fixed"),
              "halve_every": getattr(args, "halve_every", 20),
              "seed": args.seed}
    fields.update(overrides)
    return TrainConfig(**fields)


def cmd_gen_synth(args) -> int:
    spec = SynthSpec(n_classes=args.classes, dim=args.dim,
                     per_class=args.per_class, cluster_std=args.cluster_std,
                     center_scale=args.center_scale,
                     outlier_frac=args.outlier_frac,
                     outlier_offset=args.outlier_offset, seed=args.seed,
                     split_counts=tuple(_int_list(args.splits)))
    bank, truth = generate(spec)
    path = _resolve(args, args.out)
    save_bank(bank, path)
    save_oracle(truth, bank.class_ids, oracle_path(path))
    print(f"wrote {bank.n_records} records x {bank.dim} dims to {path}")
    return 0


def cmd_train_restore(args) -> int:
    bank = load_bank(args.bank)
    base = view_split(bank, "base")
    pairs = collect_pairs(base, compute_targets(base), args.lam)
    model = train_restore(pairs, hidden_dim=args.hidden,
                          train=_train_config(args))
    if args.dump_pairs:
        pairs.dump(_resolve(args, args.dump_pairs))
    path = _resolve(args, args.out)
    save_model(model, path)
    print(f"trained lam={model.lam} hidden={args.hidden} "
          f"loss {model.loss_log[0]:.4f}->{model.loss_log[-1]:.4f}, saved {path}")
    return 0


def cmd_train_embed(args) -> int:
    bank = load_bank(args.bank)
    base = view_split(bank, "base")
    result = train_embedding(
        base, _episode_spec(args),
        DualLossConfig(w_proto=args.w_proto, w_cls=args.w_cls),
        _train_config(args),
        episodes_per_epoch=args.episodes_per_epoch,
        hidden_dim=args.hidden, embed_dim=args.embed_dim,
        head_hidden=args.head_hidden)
    path = _resolve(args, args.out)
    save_embedding(result, path)
    if args.log:
        _resolve(args, args.log).write_text(
            "\n".join(result.loss_log) + "\n", encoding="ascii")
    print(f"epoch mean loss {result.epoch_means[0]:.4f}->"
          f"{result.epoch_means[-1]:.4f}, saved {path}")
    return 0


def cmd_embed(args) -> int:
    bank = load_bank(args.bank)
    net, _ = load_embedding(args.model)
    out = apply_embedding(net, bank)
    path = _resolve(args, args.out)
    save_bank(out, path)
    print(f"embedded {out.n_records} records to dim {out.dim}, saved {path}")
    return 0


def _eval_config(args) -> EvalConfig:
    return EvalConfig(spec=_episode_spec(args), n_episodes=args.episodes,
                      variant=getattr(args, "variant", "baseline"),
                      gamma=args.gamma,
                      pool_mode=args.pool_mode, split=args.split,
                      seed=args.seed)


def cmd_eval(args) -> int:
    bank = load_bank(args.bank)
    view = view_split(bank, args.split)
    cfg = _eval_config(args)
    model = load_model(args.model) if args.model else None
    report = run_eval(view, cfg, model=model, jobs=args.jobs)
    if args.out:
        report.save(_resolve(args, args.out))
    if args.dump:
        report.dump_csv(_resolve(args, args.dump))
    print(f"{cfg.variant} {cfg.spec.n_way}-way {cfg.spec.k_shot}-shot: "
          f"{report.summary()}")
    return 0


def cmd_sweep_nway(args) -> int:
    bank = load_bank(args.bank)
    view = view_split(bank, args.split)
    model = load_model(args.model)
    rows = nway_sweep(view, _int_list(args.ways),
                      replace(_eval_config(args), variant="baseline"),
                      model, jobs=args.jobs)
    lines = ["n_way,baseline,restore,enhancement"]
    for row in rows:
        lines.append(f"{row['n_way']},{row['baseline'].summary()},"
                     f"{row['restore'].summary()},{row['enhancement']:.2f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _resolve(args, args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_sweep_lambda(args) -> int:
    bank = load_bank(args.bank)
    cfg = replace(_eval_config(args), variant="baseline")
    rows = lambda_sweep(bank, _int_list(args.lambdas), cfg,
                        hidden_dim=args.hidden,
                        train=_train_config(args, seed=args.train_seed),
                        jobs=args.jobs)
    lines = ["lambda,baseline,restore,enhancement"]
    for row in rows:
        lines.append(f"{row['lam']},{row['baseline'].summary()},"
                     f"{row['restore'].summary()},{row['enhancement']:.2f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _resolve(args, args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_stats(args) -> int:
    bank = load_bank(args.bank)
    view = view_split(bank, args.split)
    stats = distance_stats(view, load_model(args.model))
    if args.out:
        _resolve(args, args.out).write_text(stats.to_text(), encoding="utf-8")
    print(f"mean distance raw={stats.mean_raw:.4f} "
          f"transformed={stats.mean_transformed:.4f} "
          f"restored={stats.mean_restored:.4f}")
    return 0


def cmd_project(args) -> int:
    bank = load_bank(args.bank)
    view = view_split(bank, args.split)
    model = load_model(args.model) if args.model else None
    path = emit_projection(view, projection_extras(view, model, args.seed),
                           _resolve(args, args.out))
    print(f"wrote projection of {view.n_records} samples to {path}")
    return 0


def _add_eval_flags(p: argparse.ArgumentParser, episodes_default: int = 2000):
    p.add_argument("--split", default="novel", choices=("base", "val", "novel"))
    p.add_argument("--n-way", type=int, default=5)
    p.add_argument("--k-shot", type=int, default=1)
    p.add_argument("--queries", type=int, default=30)
    p.add_argument("--episodes", type=int, default=episodes_default)
    p.add_argument("--gamma", type=int, default=4)
    p.add_argument("--pool-mode", default="external_pool",
                   choices=("external_pool", "leave_one_out_query"))
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="protorestore",
        description="Feature-space few-shot classification with learned "
                    "prototype restoration.",
        epilog="Full-scale protocol: train-embed --n-way 30 --queries 10 "
               "--episodes-per-epoch 600 --schedule halve_every "
               "--halve-every 20; eval --episodes 10000 --queries 30.")
    top.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=None,
                        help="directory for relative output paths "
                             "(default: $PROTORESTORE_OUT or .)")
    common.add_argument("--seed", type=int, default=0)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", parents=[common],
                       help="generate a synthetic feature bank")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--cluster-std", type=float, default=0.6)
    p.add_argument("--center-scale", type=float, default=0.4)
    p.add_argument("--outlier-frac", type=float, default=0.3)
    p.add_argument("--outlier-offset", type=float, default=6.0)
    p.add_argument("--splits", default="10,1,9",
                   help="base,val,novel class counts")
    p.add_argument("--out", default="synth.fbank")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train-restore", parents=[common],
                       help="train the restoration regressor on the base split")
    p.add_argument("--bank", required=True)
    p.add_argument("--lambda", dest="lam", type=int, default=60,
                   help="per-class count of farthest samples to mine")
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--dump-pairs", default=None,
                   help="optional path for the mining table")
    p.add_argument("--out", default="restore.dnw1")
    p.set_defaults(func=cmd_train_restore)

    p = sub.add_parser("train-embed", parents=[common],
                       help="train the feature embedding on the base split")
    p.add_argument("--bank", required=True)
    p.add_argument("--n-way", type=int, default=5)
    p.add_argument("--k-shot", type=int, default=1)
    p.add_argument("--queries", type=int, default=10)
    p.add_argument("--episodes-per-epoch", type=int, default=100)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--head-hidden", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--schedule", default="fixed",
                   choices=("fixed", "halve_every"))
    p.add_argument("--halve-every", type=int, default=20)
    p.add_argument("--w-proto", type=float, default=1.0)
    p.add_argument("--w-cls", type=float, default=1.0)
    p.add_argument("--log", default=None,
                   help="optional path for epoch,episode,loss lines")
    p.add_argument("--out", default="embed.dnw1")
    p.set_defaults(func=cmd_train_embed)

    p = sub.add_parser("embed", parents=[common],
                       help="apply a trained embedding to a whole bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="embedded.fbank")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", parents=[common],
                       help="episodic evaluation of one pipeline variant")
    p.add_argument("--bank", required=True)
    p.add_argument("--variant", default="baseline",
                   choices=("baseline", "restore", "self", "self_restore"))
    p.add_argument("--model", default=None,
                   help="restoration checkpoint (restore variants)")
    _add_eval_flags(p)
    p.add_argument("--out", default=None, help="report file")
    p.add_argument("--dump", default=None, help="per-episode accuracy CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-nway", parents=[common],
                       help="baseline vs restore across episode widths")
    p.add_argument("--bank", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--ways", default="5,7,9")
    _add_eval_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep_nway)

    p = sub.add_parser("sweep-lambda", parents=[common],
                       help="restoration gain as the mining budget varies")
    p.add_argument("--bank", required=True)
    p.add_argument("--lambdas", default="60,200")
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--train-seed", type=int, default=0)
    _add_eval_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep_lambda)

    p = sub.add_parser("stats", parents=[common],
                       help="distance-to-centroid table for a trained model")
    p.add_argument("--bank", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="novel",
                   choices=("base", "val", "novel"))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("project", parents=[common],
                       help="2-D projection of a split with prototype overlays")
    p.add_argument("--bank", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--split", default="novel",
                   choices=("base", "val", "novel"))
    p.add_argument("--out", default="projection.csv")
    p.set_defaults(func=cmd_project)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
