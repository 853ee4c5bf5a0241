"""Command line entry point: one command, one bank out."""

from __future__ import annotations

import argparse
import sys

from .exporter import (ExportSpec, PreprocessProfile, _BACKBONES, __version__,
                       export_features)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="featexport",
        description="Extract backbone features from a class-per-directory "
                    "image tree into an FBANK bank + manifest.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--root", required=True, help="dataset root directory")
    p.add_argument("--splits", required=True,
                   help="text file of class_name,split lines (base/val/novel)")
    p.add_argument("--out", default="features.fbank")
    p.add_argument("--backbone", default="resnet18", choices=sorted(_BACKBONES))
    p.add_argument("--weights", default=None,
                   help="state-dict file; omitted = fixed-seed random init")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--resize", type=int, default=256, help="shorter side")
    p.add_argument("--crop", type=int, default=224, help="center crop")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ExportSpec(root=args.root, split_file=args.splits,
                          out_path=args.out, backbone=args.backbone,
                          weights_path=args.weights, batch_size=args.batch_size,
                          profile=PreprocessProfile(resize=args.resize,
                                                    crop=args.crop))
        result = export_features(spec)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path, reason in result.skipped:
        print(f"warning: skipped {path}: {reason}", file=sys.stderr)
    if result.skipped:
        print(f"warning: {len(result.skipped)} unreadable image(s) skipped",
              file=sys.stderr)
    print(f"wrote {result.n_records} records (dim {result.dim}, "
          f"{len(result.class_names)} classes) to {result.bank_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
