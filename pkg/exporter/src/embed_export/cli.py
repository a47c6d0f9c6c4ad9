"""embed-export command line: BIO corpora -> collection files."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .build import DEFAULT_SIZES, build_collections
from .errors import ExportError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Extract pretrained token embeddings from BIO-tagged slot "
                    "corpora into held-out-domain collection files.")
    parser.add_argument("--corpus-dir", required=True,
                        help="directory with one BIO file per domain")
    parser.add_argument("--embedder", required=True,
                        choices=["fasttext", "elmo", "bert"])
    parser.add_argument("--model-path", required=True,
                        help="fasttext .bin file, elmo hidden-state .h5 file, "
                             "or bert model directory")
    parser.add_argument("--sizes", default=",".join(str(s) for s in DEFAULT_SIZES),
                        help="comma-separated train collection sizes "
                             "(default: 50,100,200)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--qualify-labels", action="store_true",
                        help="prefix labels with their domain to resolve slots "
                             "shared across domains")
    return parser


def main(argv=None) -> int:
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(os.environ.get("FSL_LOG", "info"),
                                         logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("embed_export")
    root.handlers[:] = [handler]
    root.setLevel(level)
    args = build_parser().parse_args(argv)
    try:
        sizes = tuple(int(s) for s in args.sizes.split(",") if s)
    except ValueError:
        print(f"error: --sizes must be comma-separated integers, got "
              f"{args.sizes!r}", file=sys.stderr)
        return 2
    try:
        written = build_collections(args.corpus_dir, args.embedder,
                                    args.model_path, args.out_dir,
                                    sizes=sizes, seed=args.seed,
                                    qualify_labels=args.qualify_labels)
    except ExportError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"wrote {len(written)} splits to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
