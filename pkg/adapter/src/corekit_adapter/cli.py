"""Batch export CLI.

Example:
    corekit-adapter probs --checkpoint model.pt --dataset train.csv --out exports/
    corekit-adapter embeddings --checkpoint model.pt --dataset train.csv --out exports/ --layer penultimate
    corekit-adapter dynamics --epoch-checkpoints ck_ep*.pt --dataset train.csv --out exports/
"""

from __future__ import annotations

import argparse
import sys

from .export import export_dynamics, export_embeddings, export_probs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corekit-adapter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    probs = sub.add_parser("probs", help="export softmax probabilities + labels")
    probs.add_argument("--checkpoint", required=True)
    probs.add_argument("--dataset", required=True, help="toolkit dataset CSV")
    probs.add_argument("--out", required=True, help="output directory")

    emb = sub.add_parser("embeddings", help="export per-sample embeddings")
    emb.add_argument("--checkpoint", required=True)
    emb.add_argument("--dataset", required=True)
    emb.add_argument("--out", required=True)
    emb.add_argument("--layer", default="penultimate")

    dyn = sub.add_parser("dynamics", help="export per-epoch correctness logs")
    dyn.add_argument("--epoch-checkpoints", nargs="+", required=True)
    dyn.add_argument("--dataset", required=True)
    dyn.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "probs":
            probs_path, labels_path, _ = export_probs(args.checkpoint, args.dataset, args.out)
            print(f"wrote {probs_path}")
            print(f"wrote {labels_path}")
        elif args.command == "embeddings":
            emb_path, _ = export_embeddings(
                args.checkpoint, args.dataset, args.out, layer=args.layer
            )
            print(f"wrote {emb_path}")
        else:
            dynamics_path, _ = export_dynamics(
                args.epoch_checkpoints, args.dataset, args.out
            )
            print(f"wrote {dynamics_path}")
    except (ValueError, OSError) as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
