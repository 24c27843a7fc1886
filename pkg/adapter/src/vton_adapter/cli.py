"""CLI mirroring the engine's verbs on the extraction side."""

from __future__ import annotations

import argparse
import json
import sys

from .encoder import Encoder
from .extract import extract_embeddings, extract_fid, extract_lpips, extract_masks


def _encoder_args(parser):
    parser.add_argument("--encoder", default="stub", choices=("stub", "torchscript"))
    parser.add_argument("--torchscript", help="scripted module for --encoder torchscript")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vton-adapter",
        description="Produce embeddings, masks, and metric features for the "
                    "VTON evaluation engine.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-embeddings",
                       help="full and masked-per-level embeddings (.vten)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--results")
    p.add_argument("--masks-dir", required=True,
                   help="engine-exported eroded masks (rep-eval --emit-masks)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--levels", type=int, default=4)
    _encoder_args(p)

    p = sub.add_parser("extract-masks", help="garment masks for gt and generated images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--results")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threshold", type=int, default=12)

    p = sub.add_parser("extract-lpips", help="layer feature stacks and weights")
    p.add_argument("--manifest", required=True)
    p.add_argument("--results")
    p.add_argument("--out-dir", required=True)
    _encoder_args(p)

    p = sub.add_parser("extract-fid", help="(N, D) feature matrices per set")
    p.add_argument("--manifest", required=True)
    p.add_argument("--results")
    p.add_argument("--out-dir", required=True)
    _encoder_args(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract-masks":
            summary = extract_masks(args.manifest, args.results, args.out_dir,
                                    threshold=args.threshold)
        else:
            encoder = Encoder(kind=args.encoder,
                              torchscript_path=getattr(args, "torchscript", None))
            if args.command == "extract-embeddings":
                summary = extract_embeddings(args.manifest, args.results,
                                             args.out_dir, args.masks_dir,
                                             encoder, levels=args.levels)
            elif args.command == "extract-lpips":
                summary = extract_lpips(args.manifest, args.results,
                                        args.out_dir, encoder)
            elif args.command == "extract-fid":
                summary = extract_fid(args.manifest, args.results,
                                      args.out_dir, encoder)
            else:
                raise AssertionError(args.command)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
