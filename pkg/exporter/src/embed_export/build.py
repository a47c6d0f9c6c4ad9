"""Triplet extraction and held-out-domain collection construction.

One triplet is emitted per token of a slot-value span, carrying the span's
slot label and that token's embedding vector. For each held-out domain the
builder writes train collections (the other domains' labels) at every
requested size and one test collection, all seeded and deterministic.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .backends import make_backend
from .bio import TaggedSentence, read_corpus_dir, slot_spans
from .errors import AmbiguityError, SetupError
from .writer import Triplet, atomic_write_text, write_collection

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (50, 100, 200)
TEST_SIZE = 200

_MASK = (1 << 64) - 1


def _mix_seed(seed: int, tag: str) -> int:
    h = 0xCBF29CE484222325
    for byte in tag.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    z = ((seed & _MASK) ^ h ^ 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def extract_triplets(sentences: list[TaggedSentence], backend):
    """Yield one Triplet per slot-value token; skips unalignable sentences."""
    for index, sentence in enumerate(sentences):
        spans = slot_spans(sentence)
        if not spans:
            continue
        if not sentence.tokens:
            logger.warning("sentence %d: empty, skipped", index)
            continue
        vectors = backend.embed(index, sentence.tokens)
        if vectors is None:
            continue
        for span in spans:
            for position in range(span.start, span.end):
                yield Triplet(token=sentence.tokens[position], label=span.slot,
                              vector=np.asarray(vectors[position], dtype=np.float64))


def extract_fasttext(sentences, model_path):
    """Static subword vectors, one per slot-value token."""
    return extract_triplets(sentences, make_backend("fasttext", model_path))


def extract_elmo(sentences, model_path):
    """Contextual vectors from precomputed bidirectional-LM states."""
    return extract_triplets(sentences, make_backend("elmo", model_path))


def extract_bert(sentences, model_path):
    """Contextual vectors: first word-piece position, layers 10-13 mean."""
    return extract_triplets(sentences, make_backend("bert", model_path))


def _subsample_per_label(triplets: list[Triplet], size: int, seed: int,
                         ) -> list[Triplet]:
    by_label: dict[str, list[int]] = {}
    for i, t in enumerate(triplets):
        by_label.setdefault(t.label, []).append(i)
    rng = np.random.default_rng(seed)
    kept: list[int] = []
    for label in sorted(by_label):
        indices = by_label[label]
        take = min(size, len(indices))
        if take < size:
            logger.warning("label %r has only %d values, requested %d; truncating",
                            label, len(indices), size)
        chosen = rng.choice(len(indices), size=take, replace=False)
        kept.extend(indices[j] for j in sorted(chosen))
    return [triplets[i] for i in kept]


def build_collections(corpus_dir: str | Path, embedder: str,
                      model_path: str | Path, out_dir: str | Path,
                      sizes=DEFAULT_SIZES, seed: int = 0,
                      qualify_labels: bool = False,
                      test_size: int = TEST_SIZE) -> list[Path]:
    """Extract, split by held-out domain, subsample, and write collections.

    Returns the list of split directories written. Raises AmbiguityError when
    a slot name occurs in more than one domain and ``qualify_labels`` is off
    (with it, labels become ``domain/slot``).
    """
    corpus = read_corpus_dir(corpus_dir)
    domains = sorted(corpus)
    if len(domains) < 2:
        raise SetupError(f"need at least 2 domain files, found {len(domains)}")
    backend = make_backend(embedder, model_path)

    triplets_by_domain: dict[str, list[Triplet]] = {}
    owner: dict[str, str] = {}
    for domain in domains:
        extracted = []
        for t in extract_triplets(corpus[domain], backend):
            label = f"{domain}/{t.label}" if qualify_labels else t.label
            if not qualify_labels:
                if label in owner and owner[label] != domain:
                    raise AmbiguityError(
                        f"slot {label!r} appears in domains {owner[label]!r} and "
                        f"{domain!r}; rerun with label qualification")
                owner[label] = domain
            extracted.append(Triplet(t.token, label, t.vector))
        if not extracted:
            logger.warning("domain %r produced no slot values, excluded", domain)
            continue
        triplets_by_domain[domain] = extracted
    if len(triplets_by_domain) < 2:
        raise SetupError("fewer than 2 domains produced slot values")

    kept_domains = sorted(triplets_by_domain)
    out_dir = Path(out_dir)
    written = []
    for test_domain in kept_domains:
        train_domains = [d for d in kept_domains if d != test_domain]
        split_dir = out_dir / f"split_{test_domain}"
        entry = {"embedder": embedder, "test_domain": test_domain,
                 "train_domains": train_domains, "train": {}, "test": None}
        train_pool = [t for d in train_domains for t in triplets_by_domain[d]]
        for size in sizes:
            sampled = _subsample_per_label(
                train_pool, size,
                seed=_mix_seed(seed, f"{test_domain}/train/{size}"))
            path = split_dir / f"train_{size}.jsonl"
            write_collection(sampled, path, embedder=embedder,
                             dimension=backend.dimension, domains=train_domains,
                             values_per_slot=size, policy=backend.policy)
            entry["train"][str(size)] = path.name
        test_sampled = _subsample_per_label(
            triplets_by_domain[test_domain], test_size,
            seed=_mix_seed(seed, f"{test_domain}/test"))
        test_path = split_dir / f"test_{test_size}.jsonl"
        write_collection(test_sampled, test_path, embedder=embedder,
                         dimension=backend.dimension, domains=[test_domain],
                         values_per_slot=test_size, policy=backend.policy)
        entry["test"] = test_path.name
        atomic_write_text(split_dir / "split.json",
                          json.dumps(entry, indent=2, sort_keys=True) + "\n")
        written.append(split_dir)
        logger.info("split %s: %d train triplet pool, %d test triplets",
                    test_domain, len(train_pool), len(test_sampled))
    return written
