"""Collection file writer implementing the fewslot on-disk contract.

A collection is ``<name>.jsonl`` (one JSON object per triplet with exactly
the keys ``token``, ``label``, ``vector``) plus ``<name>.manifest.json``
(keys ``embedder``, ``dimension``, ``domains``, ``values_per_slot``,
``format_version``, optional ``policy``). Vector floats carry 17 significant
digits for exact round-trips. Writes are atomic.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Triplet:
    token: str
    label: str
    vector: np.ndarray


def format_float(x: float) -> str:
    text = "%.17g" % x
    if "." not in text and "e" not in text and "n" not in text:
        text += ".0"
    return text


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def manifest_path_for(path: str | Path) -> Path:
    path = Path(path)
    stem = path.name[: -len(".jsonl")] if path.name.endswith(".jsonl") else path.name
    return path.with_name(stem + ".manifest.json")


def write_collection(triplets: list[Triplet], path: str | Path, *, embedder: str,
                     dimension: int, domains: list[str], values_per_slot: int,
                     policy: str | None = None) -> None:
    lines = []
    for i, t in enumerate(triplets):
        vector = np.asarray(t.vector, dtype=np.float64).reshape(-1)
        if vector.size != dimension:
            raise ValueError(f"triplet {i}: vector dimension {vector.size} != "
                             f"{dimension}")
        if not np.isfinite(vector).all():
            raise ValueError(f"triplet {i}: non-finite vector values")
        body = "[" + ",".join(format_float(v) for v in vector) + "]"
        lines.append('{"token": %s, "label": %s, "vector": %s}' % (
            json.dumps(t.token, ensure_ascii=False),
            json.dumps(t.label, ensure_ascii=False), body))
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    manifest = {
        "embedder": embedder,
        "dimension": dimension,
        "domains": list(domains),
        "values_per_slot": values_per_slot,
        "format_version": FORMAT_VERSION,
    }
    if policy is not None:
        manifest["policy"] = policy
    atomic_write_text(manifest_path_for(path),
                      json.dumps(manifest, indent=2, ensure_ascii=False,
                                 sort_keys=True) + "\n")
