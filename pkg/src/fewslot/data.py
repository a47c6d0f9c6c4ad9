"""Triplet collections: file format, validation, domain splits, subsampling.

A collection on disk is a pair of files: a UTF-8 JSON-lines triplet file
(one record per line with keys ``token``, ``label``, ``vector``) plus a JSON
manifest alongside it (keys ``embedder``, ``dimension``, ``domains``,
``values_per_slot``, ``format_version``, optional ``policy``). Vector floats
are written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (AmbiguityError, CollectionFormatError, ContractError,
                     ValidationError)
from .fileio import atomic_write_text, format_float_list

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class Triplet:
    """One labeled slot value: token string, slot label, embedding vector."""

    __slots__ = ("token", "label", "vector")

    def __init__(self, token: str, label: str, vector):
        self.token = token
        self.label = label
        self.vector = np.asarray(vector, dtype=np.float64).reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, Triplet):
            return NotImplemented
        return (self.token == other.token and self.label == other.label
                and self.vector.shape == other.vector.shape
                and bool(np.array_equal(self.vector, other.vector)))

    def __repr__(self):
        return f"Triplet(token={self.token!r}, label={self.label!r}, dim={self.vector.size})"


@dataclass
class CollectionManifest:
    embedder: str
    dimension: int
    domains: list[str]
    values_per_slot: int
    format_version: int = FORMAT_VERSION
    policy: str | None = None

    def to_dict(self) -> dict:
        out = {
            "embedder": self.embedder,
            "dimension": self.dimension,
            "domains": list(self.domains),
            "values_per_slot": self.values_per_slot,
            "format_version": self.format_version,
        }
        if self.policy is not None:
            out["policy"] = self.policy
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "CollectionManifest":
        required = ("embedder", "dimension", "domains", "values_per_slot", "format_version")
        missing = [key for key in required if key not in raw]
        if missing:
            raise CollectionFormatError(f"manifest missing keys: {missing}")
        return cls(embedder=raw["embedder"], dimension=int(raw["dimension"]),
                   domains=list(raw["domains"]), values_per_slot=int(raw["values_per_slot"]),
                   format_version=int(raw["format_version"]), policy=raw.get("policy"))


class Collection:
    """Immutable set of triplets plus a label -> triplet-indices index."""

    def __init__(self, manifest: CollectionManifest, triplets: list[Triplet]):
        self.manifest = manifest
        self.triplets = list(triplets)
        index: dict[str, list[int]] = {}
        for i, t in enumerate(self.triplets):
            index.setdefault(t.label, []).append(i)
        self.label_index = index

    def labels(self) -> list[str]:
        return sorted(self.label_index)

    def __len__(self):
        return len(self.triplets)

    def __eq__(self, other):
        if not isinstance(other, Collection):
            return NotImplemented
        return (self.manifest == other.manifest and self.triplets == other.triplets)


def manifest_path_for(path: str | Path) -> Path:
    """Manifest file that belongs to a triplet file path."""
    path = Path(path)
    stem = path.name[: -len(".jsonl")] if path.name.endswith(".jsonl") else path.name
    return path.with_name(stem + ".manifest.json")


def write_collection(collection: Collection, path: str | Path) -> None:
    """Write triplets to ``path`` and the manifest alongside, atomically."""
    path = Path(path)
    dim = collection.manifest.dimension
    lines = []
    for i, t in enumerate(collection.triplets):
        if t.vector.size != dim:
            raise ValidationError(f"triplet {i}: vector dimension {t.vector.size} "
                                  f"does not match manifest dimension {dim}")
        if not np.isfinite(t.vector).all():
            raise ValidationError(f"triplet {i}: non-finite vector values")
        lines.append('{"token": %s, "label": %s, "vector": %s}' % (
            json.dumps(t.token, ensure_ascii=False),
            json.dumps(t.label, ensure_ascii=False),
            format_float_list(t.vector),
        ))
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    manifest_text = json.dumps(collection.manifest.to_dict(), indent=2,
                               ensure_ascii=False, sort_keys=True) + "\n"
    atomic_write_text(manifest_path_for(path), manifest_text)


def read_collection(path: str | Path) -> Collection:
    """Read a collection, validating each record against the manifest."""
    path = Path(path)
    mpath = manifest_path_for(path)
    if not path.exists():
        raise CollectionFormatError(f"triplet file not found: {path}")
    if not mpath.exists():
        raise CollectionFormatError(f"manifest file not found: {mpath}")
    try:
        manifest = CollectionManifest.from_dict(json.loads(mpath.read_text("utf-8")))
    except json.JSONDecodeError as err:
        raise CollectionFormatError(f"manifest is not valid JSON: {err}") from err
    triplets = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise CollectionFormatError(f"not valid JSON: {err}", line=lineno) from err
            if not isinstance(record, dict):
                raise CollectionFormatError("record is not an object", line=lineno)
            missing = [key for key in ("token", "label", "vector") if key not in record]
            if missing:
                raise CollectionFormatError(f"record missing keys: {missing}", line=lineno)
            vector = np.asarray(record["vector"], dtype=np.float64)
            if vector.ndim != 1 or vector.size != manifest.dimension:
                raise CollectionFormatError(
                    f"vector has dimension {vector.size}, manifest says "
                    f"{manifest.dimension}", line=lineno)
            triplets.append(Triplet(str(record["token"]), str(record["label"]), vector))
    return Collection(manifest, triplets)


@dataclass(frozen=True)
class DomainSplit:
    """One held-out-domain split with disjoint train/test label spaces."""

    test_domain: str
    train_domains: tuple[str, ...]
    train_labels: frozenset[str]
    test_labels: frozenset[str]


def build_domain_splits(domains: list[str],
                        labels_by_domain: dict[str, set[str] | list[str]],
                        ) -> list[DomainSplit]:
    """One split per held-out domain; labels must be owned by a single domain."""
    if len(domains) < 2:
        raise ContractError(f"need at least 2 domains, got {len(domains)}")
    owner: dict[str, str] = {}
    for domain in domains:
        labels = labels_by_domain.get(domain, ())
        if not labels:
            raise ContractError(f"domain {domain!r} has no labels")
        for label in labels:
            if label in owner and owner[label] != domain:
                raise AmbiguityError(
                    f"label {label!r} appears in domains {owner[label]!r} and "
                    f"{domain!r}; labels must be resolved upstream")
            owner[label] = domain
    splits = []
    for test_domain in domains:
        train_domains = tuple(d for d in domains if d != test_domain)
        train_labels = frozenset(
            label for d in train_domains for label in labels_by_domain[d])
        test_labels = frozenset(labels_by_domain[test_domain])
        splits.append(DomainSplit(test_domain=test_domain, train_domains=train_domains,
                                  train_labels=train_labels, test_labels=test_labels))
    return splits


def subsample_collection(collection: Collection, n: int, seed: int) -> Collection:
    """Uniformly sample up to ``n`` triplets per label, without replacement.

    Labels with fewer than ``n`` triplets are truncated to what is available,
    with a warning. Deterministic given (collection order, seed).
    """
    if n <= 0:
        raise ContractError(f"subsample size must be positive, got {n}")
    rng = np.random.default_rng(seed)
    kept: list[int] = []
    for label in sorted(collection.label_index):
        indices = collection.label_index[label]
        take = min(n, len(indices))
        if take < n:
            logger.warning("label %r has only %d triplets, requested %d; truncating",
                           label, len(indices), n)
        chosen = rng.choice(len(indices), size=take, replace=False)
        kept.extend(indices[j] for j in sorted(chosen))
    manifest = CollectionManifest(
        embedder=collection.manifest.embedder,
        dimension=collection.manifest.dimension,
        domains=list(collection.manifest.domains),
        values_per_slot=n,
        format_version=collection.manifest.format_version,
        policy=collection.manifest.policy,
    )
    return Collection(manifest, [collection.triplets[i] for i in kept])


def subset_by_labels(collection: Collection, labels) -> Collection:
    """New collection containing only the triplets of the given labels."""
    wanted = set(labels)
    unknown = wanted - set(collection.label_index)
    if unknown:
        raise ContractError(f"labels not present in collection: {sorted(unknown)}")
    triplets = [t for t in collection.triplets if t.label in wanted]
    manifest = CollectionManifest(**{**collection.manifest.to_dict()})
    return Collection(manifest, triplets)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        lines = [f"violations: {len(self.violations)}, warnings: {len(self.warnings)}"]
        lines += [f"  VIOLATION {v}" for v in self.violations]
        lines += [f"  warning {w}" for w in self.warnings]
        return "\n".join(lines)


def validate_collection(collection: Collection,
                        labels_by_domain: dict[str, set[str]] | None = None,
                        ) -> ValidationReport:
    """Check collection invariants; returns a report, never raises."""
    report = ValidationReport()
    manifest = collection.manifest
    if manifest.dimension <= 0:
        report.violations.append(f"manifest: dimension {manifest.dimension} not positive")
    if manifest.values_per_slot <= 0:
        report.violations.append(
            f"manifest: values_per_slot {manifest.values_per_slot} not positive")
    if not manifest.domains:
        report.violations.append("manifest: empty domain list")
    if not manifest.embedder:
        report.violations.append("manifest: empty embedder name")
    seen_pairs: set[tuple[str, str]] = set()
    domain_of: dict[str, str] = {}
    if labels_by_domain:
        for domain, labels in labels_by_domain.items():
            for label in labels:
                domain_of[label] = domain
    for i, t in enumerate(collection.triplets):
        where = f"triplet {i} (token={t.token!r}, label={t.label!r})"
        if not t.token:
            report.violations.append(f"{where}: empty token")
        if not t.label:
            report.violations.append(f"{where}: empty label")
        if t.vector.size != manifest.dimension:
            report.violations.append(
                f"{where}: vector dimension {t.vector.size} != manifest "
                f"dimension {manifest.dimension}")
        if not np.isfinite(t.vector).all():
            report.violations.append(f"{where}: non-finite vector values")
        if (t.token, t.label) in seen_pairs:
            report.warnings.append(f"{where}: duplicate (token, label) pair")
        seen_pairs.add((t.token, t.label))
        if domain_of:
            domain = domain_of.get(t.label)
            if domain is None:
                report.violations.append(f"{where}: label not owned by any known domain")
            elif domain not in manifest.domains:
                report.violations.append(
                    f"{where}: label belongs to domain {domain!r} outside manifest "
                    f"domains {manifest.domains}")
    # index consistency (the constructor builds it, but files may be patched)
    rebuilt: dict[str, list[int]] = {}
    for i, t in enumerate(collection.triplets):
        rebuilt.setdefault(t.label, []).append(i)
    if rebuilt != collection.label_index:
        report.violations.append("label_index is inconsistent with triplet list")
    for label, indices in collection.label_index.items():
        if not indices:
            report.violations.append(f"label {label!r} has no triplets")
    return report
