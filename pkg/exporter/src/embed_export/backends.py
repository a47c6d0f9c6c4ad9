"""Embedding backends: one vector per token of a sentence.

Each backend exposes ``dimension``, an optional ``policy`` string recorded in
collection manifests, and ``embed(sentence_index, tokens) -> list of vectors
or None`` (None marks an alignment failure; the caller logs and skips the
sentence). Extraction is deterministic for a fixed model.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import fasttext_bin
from .errors import SetupError

logger = logging.getLogger(__name__)

BERT_FOCUS_LAYERS = (10, 11, 12, 13)  # 1-based hidden-state indices; 0 = embeddings
BERT_POLICY = "bert-L10-13-mean"
ELMO_POLICY = "elmo-3layer-mean"


class FastTextBackend:
    """Static subword vectors from an official .bin model; OOV composes."""

    name = "fasttext"
    policy = None

    def __init__(self, model_path: str | Path):
        self.model = fasttext_bin.load_model(model_path)
        self.dimension = self.model.dim

    def embed(self, sentence_index: int, tokens) -> list[np.ndarray] | None:
        return [self.model.word_vector(token) for token in tokens]


class ElmoBackend:
    """Precomputed bidirectional-LM hidden states from an HDF5 export.

    The file holds one dataset per sentence keyed by its corpus index ("0",
    "1", ...), each shaped (3, sentence_length, dim); the three layers are
    combined by elementwise mean.
    """

    name = "elmo"
    policy = ELMO_POLICY

    def __init__(self, model_path: str | Path):
        try:
            import h5py
        except ImportError as err:
            raise SetupError("elmo extraction needs the h5py package") from err
        path = Path(model_path)
        if not path.exists():
            raise SetupError(f"elmo hidden-state file not found: {path}")
        self._file = h5py.File(path, "r")
        keys = [k for k in self._file.keys() if k.isdigit()]
        if not keys:
            raise SetupError(f"{path} contains no sentence datasets")
        self.dimension = int(self._file[keys[0]].shape[-1])

    def embed(self, sentence_index: int, tokens) -> list[np.ndarray] | None:
        key = str(sentence_index)
        if key not in self._file:
            logger.warning("sentence %d: no dataset in hidden-state file, skipped",
                           sentence_index)
            return None
        states = np.asarray(self._file[key], dtype=np.float64)
        if states.ndim != 3 or states.shape[1] != len(tokens):
            logger.warning("sentence %d: dataset shape %s does not align with %d "
                           "tokens, skipped", sentence_index, states.shape,
                           len(tokens))
            return None
        combined = states.mean(axis=0)
        return [combined[i] for i in range(len(tokens))]

    def close(self):
        self._file.close()


class BertBackend:
    """Masked-LM transformer states: first word-piece, layers 10-13 mean."""

    name = "bert"
    policy = BERT_POLICY

    def __init__(self, model_path: str | Path):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as err:
            raise SetupError("bert extraction needs torch and transformers") from err
        path = Path(model_path)
        if not path.exists():
            raise SetupError(f"bert model directory not found: {path}")
        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(str(path))
        if not getattr(self.tokenizer, "is_fast", False):
            raise SetupError("bert extraction needs a fast tokenizer "
                             "(word alignment requires word_ids)")
        self.model = AutoModel.from_pretrained(str(path))
        self.model.eval()
        layers = getattr(self.model.config, "num_hidden_layers", 0)
        if layers < max(BERT_FOCUS_LAYERS):
            raise SetupError(f"model has {layers} hidden layers; extraction needs "
                             f"at least {max(BERT_FOCUS_LAYERS)}")
        self.dimension = int(self.model.config.hidden_size)

    def embed(self, sentence_index: int, tokens) -> list[np.ndarray] | None:
        encoded = self.tokenizer(list(tokens), is_split_into_words=True,
                                 return_tensors="pt", truncation=True)
        word_ids = encoded.word_ids()
        first_piece: dict[int, int] = {}
        for position, word_id in enumerate(word_ids):
            if word_id is not None and word_id not in first_piece:
                first_piece[word_id] = position
        if len(first_piece) != len(tokens):
            logger.warning("sentence %d: word-piece alignment failed "
                           "(%d of %d words aligned), skipped",
                           sentence_index, len(first_piece), len(tokens))
            return None
        with self._torch.no_grad():
            out = self.model(**encoded, output_hidden_states=True)
        stack = np.stack([out.hidden_states[layer][0].numpy()
                          for layer in BERT_FOCUS_LAYERS])
        combined = stack.mean(axis=0).astype(np.float64)
        return [combined[first_piece[i]] for i in range(len(tokens))]


BACKENDS = {
    "fasttext": FastTextBackend,
    "elmo": ElmoBackend,
    "bert": BertBackend,
}


def make_backend(embedder: str, model_path: str | Path):
    if embedder not in BACKENDS:
        raise SetupError(f"unknown embedder {embedder!r}; expected one of "
                         f"{sorted(BACKENDS)}")
    return BACKENDS[embedder](model_path)
