"""Reader for the official fastText ``.bin`` model format (dense subset).

Implements exactly what token-vector extraction needs: the header, args,
dictionary, and the dense input matrix, plus the subword machinery (FNV-1a
hashing over character n-grams between ``minn`` and ``maxn``, with the word
wrapped in '<' and '>'). A word's vector is the mean of its input-matrix
rows: the word row plus its n-gram rows for vocabulary words, n-gram rows
only for out-of-vocabulary words, so OOV tokens always compose a vector.

Quantized models and unsupported format versions are rejected.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SetupError

MAGIC = 793712314
SUPPORTED_VERSION = 12
BOW = "<"
EOW = ">"
EOS = "</s>"

_UINT32 = (1 << 32) - 1


def fnv1a_hash(data: bytes) -> int:
    """fastText's FNV-1a variant: bytes are sign-extended before xor."""
    h = 2166136261
    for byte in data:
        if byte >= 128:
            byte |= 0xFFFFFF00
        h = ((h ^ byte) * 16777619) & _UINT32
    return h


def character_ngrams(word: str, minn: int, maxn: int) -> list[str]:
    """UTF-8-aware character n-grams of BOW+word+EOW, lengths minn..maxn.

    Mirrors the reference implementation: iterates bytes, treats each
    codepoint (lead byte plus continuations) as one character, and skips the
    length-1 grams that are just the boundary markers.
    """
    data = (BOW + word + EOW).encode("utf-8")
    ngrams = []
    size = len(data)
    for i in range(size):
        if (data[i] & 0xC0) == 0x80:
            continue
        gram = bytearray()
        j, n = i, 1
        while j < size and n <= maxn:
            gram.append(data[j])
            j += 1
            while j < size and (data[j] & 0xC0) == 0x80:
                gram.append(data[j])
                j += 1
            if n >= minn and not (n == 1 and (i == 0 or j == size)):
                ngrams.append(gram.decode("utf-8"))
            n += 1
    return ngrams


@dataclass
class FastTextModel:
    dim: int
    bucket: int
    minn: int
    maxn: int
    nwords: int
    vocab: dict[str, int]
    input_matrix: np.ndarray  # [nwords + bucket, dim] float32

    def subword_ids(self, word: str) -> list[int]:
        ids = []
        word_id = self.vocab.get(word)
        if word_id is not None:
            ids.append(word_id)
        if word != EOS and self.maxn > 0:
            for gram in character_ngrams(word, self.minn, self.maxn):
                ids.append(self.nwords +
                           fnv1a_hash(gram.encode("utf-8")) % self.bucket)
        return ids

    def word_vector(self, word: str) -> np.ndarray:
        ids = self.subword_ids(word)
        if not ids:
            return np.zeros(self.dim)
        return np.asarray(self.input_matrix[ids], dtype=np.float64).mean(axis=0)


def _read_null_terminated(handle) -> bytes:
    out = bytearray()
    while True:
        byte = handle.read(1)
        if not byte:
            raise SetupError("unexpected end of file inside dictionary")
        if byte == b"\x00":
            return bytes(out)
        out += byte


def load_model(path: str | Path) -> FastTextModel:
    path = Path(path)
    if not path.exists():
        raise SetupError(f"fasttext model not found: {path}")
    with open(path, "rb") as handle:
        magic, version = struct.unpack("<ii", handle.read(8))
        if magic != MAGIC:
            raise SetupError(f"{path} is not a fasttext .bin model "
                             f"(magic {magic} != {MAGIC})")
        if version > SUPPORTED_VERSION:
            raise SetupError(f"unsupported fasttext format version {version}")
        (dim, _ws, _epoch, _min_count, _neg, _word_ngrams, _loss, _model,
         bucket, minn, maxn, _lr_update_rate) = struct.unpack("<12i", handle.read(48))
        (_t,) = struct.unpack("<d", handle.read(8))
        size, nwords, nlabels = struct.unpack("<3i", handle.read(12))
        _ntokens, pruneidx_size = struct.unpack("<2q", handle.read(16))
        vocab: dict[str, int] = {}
        for entry_id in range(size):
            word = _read_null_terminated(handle).decode("utf-8")
            _count, entry_type = struct.unpack("<qb", handle.read(9))
            if entry_type == 0:
                vocab[word] = entry_id
        if pruneidx_size > 0:
            handle.read(8 * pruneidx_size)
        (quant,) = struct.unpack("<b", handle.read(1))
        if quant:
            raise SetupError("quantized fasttext models are not supported")
        rows, cols = struct.unpack("<2q", handle.read(16))
        if cols != dim:
            raise SetupError(f"input matrix width {cols} != dim {dim}")
        matrix = np.fromfile(handle, dtype="<f4", count=rows * cols)
        if matrix.size != rows * cols:
            raise SetupError("truncated input matrix")
        matrix = matrix.reshape(rows, cols)
    if rows != nwords + bucket:
        raise SetupError(f"input matrix has {rows} rows, expected "
                         f"nwords+bucket = {nwords + bucket}")
    return FastTextModel(dim=dim, bucket=bucket, minn=minn, maxn=maxn,
                         nwords=nwords, vocab=vocab, input_matrix=matrix)
