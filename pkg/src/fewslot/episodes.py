"""Seeded C-way K-shot episode sampling over a collection.

Episode streams derive one 64-bit seed per episode index with a
splitmix-style mix, so episode i is reproducible without materializing
episodes 0..i-1, and train/eval streams can be kept disjoint via a tag.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Collection, Triplet
from .errors import CapacityError, ContractError

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def derive_seed(seed: int, tag: str, index: int) -> int:
    """Mix (seed, tag, index) into an independent 64-bit stream seed."""
    z = (seed & _MASK) ^ _fnv1a64(tag)
    return _splitmix64((_splitmix64(z) + index) & _MASK)


@dataclass(frozen=True)
class EpisodeSpec:
    """Episode geometry: C classes, K support and Q query examples per class."""

    c_way: int
    k_shot: int
    query_per_class: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.c_way < 1:
            raise ContractError(f"c_way must be >= 1, got {self.c_way}")
        if self.k_shot < 1:
            raise ContractError(f"k_shot must be >= 1, got {self.k_shot}")
        if self.query_per_class is not None and self.query_per_class < 1:
            raise ContractError(f"query_per_class must be >= 1, got {self.query_per_class}")

    @property
    def queries(self) -> int:
        return self.k_shot if self.query_per_class is None else self.query_per_class


@dataclass(frozen=True)
class Episode:
    """Support and query sets; entries are (triplet, class index) pairs."""

    labels: tuple[str, ...]
    support: tuple[tuple[Triplet, int], ...]
    query: tuple[tuple[Triplet, int], ...]


def sample_episode(collection: Collection, spec: EpisodeSpec) -> Episode:
    """Draw one episode: C labels, then K+Q distinct triplets per label.

    Deterministic given (collection order, spec.seed). Support and query
    triplets are disjoint within the episode.
    """
    labels = sorted(collection.label_index)
    if len(labels) < spec.c_way:
        raise CapacityError(f"collection has {len(labels)} labels, "
                            f"episode needs C={spec.c_way}")
    rng = np.random.default_rng(spec.seed)
    chosen = rng.choice(len(labels), size=spec.c_way, replace=False)
    need = spec.k_shot + spec.queries
    support: list[tuple[Triplet, int]] = []
    query: list[tuple[Triplet, int]] = []
    episode_labels = []
    for class_index, label_pos in enumerate(chosen):
        label = labels[label_pos]
        episode_labels.append(label)
        indices = collection.label_index[label]
        if len(indices) < need:
            raise CapacityError(f"label {label!r} has {len(indices)} triplets, "
                                f"episode needs K+Q={need}")
        picked = rng.choice(len(indices), size=need, replace=False)
        for j in picked[: spec.k_shot]:
            support.append((collection.triplets[indices[j]], class_index))
        for j in picked[spec.k_shot:]:
            query.append((collection.triplets[indices[j]], class_index))
    return Episode(labels=tuple(episode_labels), support=tuple(support),
                   query=tuple(query))


def episode_stream(collection: Collection, spec: EpisodeSpec, count: int):
    """Yield ``count`` episodes; episode i is seeded by derive_seed(seed, i).

    Random-access reproducible: the i-th episode does not depend on whether
    earlier episodes were materialized.
    """
    if count < 0:
        raise ContractError(f"count must be >= 0, got {count}")
    for i in range(count):
        yield sample_episode(
            collection, replace(spec, seed=derive_seed(spec.seed, "episode", i)))
