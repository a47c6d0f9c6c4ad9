"""Offline extraction of pretrained token embeddings into collection files."""

from .bio import SlotSpan, TaggedSentence, read_bio_file, read_corpus_dir, slot_spans
from .build import (build_collections, extract_bert, extract_elmo,
                    extract_fasttext, extract_triplets)
from .errors import AmbiguityError, BioFormatError, ExportError, SetupError
from .writer import Triplet, write_collection

__version__ = "0.1.0"
