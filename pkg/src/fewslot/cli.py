"""Command-line surface: validate, split, train, eval, grid, synth.

All artifact writes are atomic (temp file + rename) and byte-reproducible for
a fixed ``--seed``. Structured progress goes to stderr; the ``FSL_LOG``
environment variable (error, info, debug) controls verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .data import (Collection, CollectionManifest, build_domain_splits,
                   read_collection, subsample_collection, validate_collection,
                   write_collection)
from .episodes import derive_seed
from .errors import FewslotError
from .fileio import atomic_write_text, format_float
from .models import MODEL_KINDS, load_bundle, save_bundle
from .synth import make_synthetic_collection
from .training import (GridSpec, TrainConfig, aggregate_report, meta_test,
                       meta_train, run_experiment_grid)

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (50, 100, 200)
TEST_COLLECTION_SIZE = 200


def _configure_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(os.environ.get("FSL_LOG", "info"), logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("fewslot")
    root.handlers[:] = [handler]
    root.setLevel(level)


def _add_episode_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--c-way", type=int, default=5,
                        help="classes per episode (default: 5)")
    parser.add_argument("--k-shot", type=int, default=5,
                        help="support examples per class (default: 5)")
    parser.add_argument("--train-episodes", type=int, default=10000,
                        help="training episodes (default: 10000)")
    parser.add_argument("--eval-every", type=int, default=500,
                        help="evaluate every N training episodes (default: 500)")
    parser.add_argument("--eval-episodes", type=int, default=1000,
                        help="episodes per evaluation checkpoint (default: 1000)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fewslot",
        description="Metric-based few-shot learners for slot tagging over "
                    "precomputed word embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a collection file's invariants")
    p.add_argument("--collection", required=True, help="triplet file to validate")

    p = sub.add_parser("split", help="build held-out-domain splits from per-domain "
                                     "collections")
    p.add_argument("--corpus-dir", required=True,
                   help="directory of per-domain collections (<domain>.jsonl)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, action="append", dest="sizes",
                   help="train collection size; repeatable (default: 50 100 200)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed (default: 0)")

    p = sub.add_parser("train", help="meta-train one model on a collection")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--collection", required=True, help="training collection")
    p.add_argument("--test-collection",
                   help="evaluation collection for periodic checkpoints")
    p.add_argument("--seed", type=int, default=0, help="training seed (default: 0)")
    p.add_argument("--out", required=True, help="output directory")
    _add_episode_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test collection")
    p.add_argument("--checkpoint", required=True, help="checkpoint file from train")
    p.add_argument("--test-collection", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    _add_episode_flags(p)

    p = sub.add_parser("grid", help="run an experiment grid from a spec file")
    p.add_argument("--grid-spec", required=True, help="JSON grid specification")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel cells (default: 1; results identical)")

    p = sub.add_parser("synth", help="generate a synthetic collection")
    p.add_argument("--classes", type=int, default=10,
                   help="number of labels (default: 10)")
    p.add_argument("--dim", type=int, default=32,
                   help="vector dimension (default: 32)")
    p.add_argument("--separation", type=float, default=4.0,
                   help="radius of the class-mean sphere (default: 4.0)")
    p.add_argument("--values-per-class", type=int, default=200,
                   help="triplets per label (default: 200)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output triplet file (.jsonl)")
    return parser


def cmd_validate(args) -> int:
    collection = read_collection(args.collection)
    report = validate_collection(collection)
    print(report)
    return 0 if report.ok else 1


def _read_domain_collections(corpus_dir: Path) -> dict[str, Collection]:
    files = sorted(corpus_dir.glob("*.jsonl"))
    if not files:
        raise FewslotError(f"no *.jsonl collections found in {corpus_dir}")
    return {f.name[:-len(".jsonl")]: read_collection(f) for f in files}


def cmd_split(args) -> int:
    corpus_dir = Path(args.corpus_dir)
    out_dir = Path(args.out)
    sizes = tuple(args.sizes) if args.sizes else DEFAULT_SIZES
    by_domain = _read_domain_collections(corpus_dir)
    domains = sorted(by_domain)
    embedders = {c.manifest.embedder for c in by_domain.values()}
    dims = {c.manifest.dimension for c in by_domain.values()}
    if len(embedders) > 1 or len(dims) > 1:
        raise FewslotError(f"domain collections disagree: embedders={sorted(embedders)} "
                           f"dimensions={sorted(dims)}")
    labels_by_domain = {d: set(c.label_index) for d, c in by_domain.items()}
    splits = build_domain_splits(domains, labels_by_domain)
    embedder = embedders.pop()
    dimension = dims.pop()
    for split in splits:
        split_dir = out_dir / f"split_{split.test_domain}"
        entry = {"test_domain": split.test_domain,
                 "train_domains": list(split.train_domains),
                 "train_labels": sorted(split.train_labels),
                 "test_labels": sorted(split.test_labels),
                 "train": {}, "test": None}
        train_triplets = [t for d in split.train_domains
                          for t in by_domain[d].triplets]
        train_manifest = CollectionManifest(
            embedder=embedder, dimension=dimension,
            domains=list(split.train_domains), values_per_slot=max(sizes),
            policy=by_domain[split.train_domains[0]].manifest.policy)
        train_all = Collection(train_manifest, train_triplets)
        for size in sizes:
            sub = subsample_collection(
                train_all, size,
                seed=derive_seed(args.seed, f"split/{split.test_domain}/train", size))
            path = split_dir / f"train_{size}.jsonl"
            write_collection(sub, path)
            entry["train"][str(size)] = path.name
        test_sub = subsample_collection(
            by_domain[split.test_domain], TEST_COLLECTION_SIZE,
            seed=derive_seed(args.seed, f"split/{split.test_domain}/test", 0))
        test_path = split_dir / f"test_{TEST_COLLECTION_SIZE}.jsonl"
        write_collection(test_sub, test_path)
        entry["test"] = test_path.name
        atomic_write_text(split_dir / "split.json",
                          json.dumps(entry, indent=2, sort_keys=True) + "\n")
        logger.info("split %s: %d train labels, %d test labels",
                    split.test_domain, len(split.train_labels),
                    len(split.test_labels))
    print(f"wrote {len(splits)} splits to {out_dir}")
    return 0


def _loss_curve_csv(curve) -> str:
    lines = ["episode,loss"]
    lines += [f"{step},{format_float(loss)}" for step, loss in curve]
    return "\n".join(lines) + "\n"


def _eval_run_csv(eval_run) -> str:
    lines = ["step,accuracy"]
    lines += [f"{step},{format_float(acc)}" for step, acc in eval_run.checkpoints]
    lines.append(f"final,{format_float(eval_run.final_accuracy)}")
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    collection = read_collection(args.collection)
    eval_collection = (read_collection(args.test_collection)
                       if args.test_collection else None)
    config = TrainConfig(k_shot=args.k_shot, c_way=args.c_way,
                         train_episodes=args.train_episodes,
                         eval_every=args.eval_every,
                         eval_episodes=args.eval_episodes, seed=args.seed)
    result = meta_train(args.model, collection, config,
                        eval_collection=eval_collection)
    out_dir = Path(args.out)
    save_bundle(result.bundle, out_dir / "checkpoint.json")
    atomic_write_text(out_dir / "loss_curve.csv", _loss_curve_csv(result.loss_curve))
    if result.eval_run is not None:
        atomic_write_text(out_dir / "eval_run.csv", _eval_run_csv(result.eval_run))
        print(f"final_accuracy {result.eval_run.final_accuracy:.4f}")
    print(f"wrote checkpoint and curves to {out_dir}")
    return 0


def cmd_eval(args) -> int:
    bundle = load_bundle(args.checkpoint)
    collection = read_collection(args.test_collection)
    config = TrainConfig(k_shot=args.k_shot, c_way=args.c_way,
                         train_episodes=args.train_episodes,
                         eval_every=args.eval_every,
                         eval_episodes=args.eval_episodes, seed=args.seed)
    eval_run = meta_test(bundle, collection, config)
    out_dir = Path(args.out)
    atomic_write_text(out_dir / "eval_run.csv", _eval_run_csv(eval_run))
    print(f"final_accuracy {eval_run.final_accuracy:.4f}")
    return 0


def cmd_grid(args) -> int:
    raw = json.loads(Path(args.grid_spec).read_text("utf-8"))
    base = Path(args.grid_spec).parent
    spec = GridSpec(
        domains=tuple(raw["domains"]),
        embedders=tuple(raw["embedders"]),
        models=tuple(raw["models"]),
        k_shots=tuple(raw["k_shots"]),
        sizes=tuple(raw.get("sizes", DEFAULT_SIZES)),
        c_way=raw.get("c_way", 5),
        train_episodes=raw.get("train_episodes", 10000),
        eval_every=raw.get("eval_every", 500),
        eval_episodes=raw.get("eval_episodes", 1000),
        seed=raw.get("seed", 0),
        workers=args.workers,
    )

    def load(path_str: str) -> Collection | None:
        path = (base / path_str).resolve()
        if not path.exists():
            logger.warning("collection %s not found", path)
            return None
        return read_collection(path)

    train_collections = {}
    for key, path_str in raw["collections"]["train"].items():
        domain, embedder, size = key.split("|")
        loaded = load(path_str)
        if loaded is not None:
            train_collections[(domain, embedder, int(size))] = loaded
    test_collections = {}
    for key, path_str in raw["collections"]["test"].items():
        domain, embedder = key.split("|")
        loaded = load(path_str)
        if loaded is not None:
            test_collections[(domain, embedder)] = loaded

    result = run_experiment_grid(train_collections, test_collections, spec)
    out_dir = Path(args.out)
    atomic_write_text(out_dir / "grid.csv", aggregate_report(result, "csv"))
    atomic_write_text(out_dir / "grid.md", aggregate_report(result, "markdown"))
    if result.absent:
        logger.warning("%d cells absent (missing collections)", len(result.absent))
    print(f"wrote grid reports to {out_dir} ({len(result.rows)} cells, "
          f"{len(result.absent)} absent)")
    return 0


def cmd_synth(args) -> int:
    collection = make_synthetic_collection(
        classes=args.classes, dim=args.dim, separation=args.separation,
        values_per_class=args.values_per_class, seed=args.seed)
    write_collection(collection, args.out)
    print(f"wrote {len(collection)} triplets ({args.classes} labels) to {args.out}")
    return 0


_HANDLERS = {
    "validate": cmd_validate,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "grid": cmd_grid,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except FewslotError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
