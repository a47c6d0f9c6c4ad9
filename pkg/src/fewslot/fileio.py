"""Atomic file writes and exact decimal float serialization."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path


def format_float(x: float) -> str:
    """Serialize a float64 with 17 significant digits (exact round-trip).

    Integral values keep a trailing ``.0`` so they parse back as floats
    (otherwise ``-0.0`` would lose its sign through JSON).
    """
    text = "%.17g" % x
    if "." not in text and "e" not in text and "n" not in text:
        text += ".0"
    return text


def format_float_list(values) -> str:
    return "[" + ",".join(format_float(v) for v in values) + "]"


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
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
