"""Synthetic triplet collections with controllable class separation.

Class means are drawn uniformly on a sphere of radius ``separation``; values
are unit-variance isotropic Gaussians around their mean. separation=0 makes
all classes coincide, so any classifier performs at chance.
"""

from __future__ import annotations

import numpy as np

from .data import Collection, CollectionManifest, Triplet
from .errors import ContractError


def make_synthetic_collection(classes: int, dim: int, separation: float,
                              values_per_class: int, seed: int) -> Collection:
    if classes < 1:
        raise ContractError(f"classes must be >= 1, got {classes}")
    if dim < 1:
        raise ContractError(f"dim must be >= 1, got {dim}")
    if values_per_class < 1:
        raise ContractError(f"values_per_class must be >= 1, got {values_per_class}")
    if separation < 0:
        raise ContractError(f"separation must be >= 0, got {separation}")
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(classes, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    means = directions / norms * separation
    triplets = []
    for class_index in range(classes):
        label = f"class_{class_index:02d}"
        samples = means[class_index] + rng.normal(size=(values_per_class, dim))
        for j in range(values_per_class):
            triplets.append(Triplet(f"value_{class_index:02d}_{j:03d}", label,
                                    samples[j]))
    manifest = CollectionManifest(embedder="synthetic", dimension=dim,
                                  domains=["synthetic"],
                                  values_per_slot=values_per_class)
    return Collection(manifest, triplets)
