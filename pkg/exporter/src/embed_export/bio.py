"""BIO-tagged corpus reading and slot-value span extraction.

Corpus layout: one file per domain (the file stem is the domain name), each
line ``token<TAB>tag``, blank line between sentences. Tags are strict BIO:
``I-slot`` may only continue a ``B-slot``/``I-slot`` of the same slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import BioFormatError

CORPUS_SUFFIXES = (".bio", ".txt", ".tsv")


@dataclass(frozen=True)
class TaggedSentence:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    domain: str


@dataclass(frozen=True)
class SlotSpan:
    """One labeled slot value: token positions [start, end) with their slot."""

    slot: str
    start: int
    end: int


def _check_tag(tag: str, previous: str | None, path, line: int) -> None:
    if tag == "O":
        return
    if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
        raise BioFormatError(f"malformed tag {tag!r}", path, line)
    if tag[0] == "I":
        slot = tag[2:]
        if previous is None or previous == "O" or previous[2:] != slot:
            raise BioFormatError(
                f"tag {tag!r} does not continue a span of the same slot",
                path, line)


def read_bio_file(path: str | Path, domain: str | None = None) -> list[TaggedSentence]:
    path = Path(path)
    if domain is None:
        domain = path.stem
    sentences: list[TaggedSentence] = []
    tokens: list[str] = []
    tags: list[str] = []

    def flush():
        if tokens:
            sentences.append(TaggedSentence(tuple(tokens), tuple(tags), domain))
            tokens.clear()
            tags.clear()

    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                flush()
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise BioFormatError(f"expected 'token<TAB>tag', got {line!r}",
                                     path, lineno)
            token, tag = parts
            _check_tag(tag, tags[-1] if tags else None, path, lineno)
            tokens.append(token)
            tags.append(tag)
    flush()
    return sentences


def read_corpus_dir(corpus_dir: str | Path) -> dict[str, list[TaggedSentence]]:
    """All domain files of a corpus directory, keyed by domain name."""
    corpus_dir = Path(corpus_dir)
    files = sorted(p for p in corpus_dir.iterdir()
                   if p.is_file() and p.suffix in CORPUS_SUFFIXES)
    if not files:
        raise BioFormatError(f"no corpus files ({'/'.join(CORPUS_SUFFIXES)}) in "
                             f"{corpus_dir}")
    return {p.stem: read_bio_file(p) for p in files}


def slot_spans(sentence: TaggedSentence) -> list[SlotSpan]:
    """Contiguous B-/I- runs of one slot, in sentence order."""
    spans: list[SlotSpan] = []
    start = None
    slot = None
    for i, tag in enumerate(sentence.tags):
        if tag.startswith("B-"):
            if start is not None:
                spans.append(SlotSpan(slot, start, i))
            start, slot = i, tag[2:]
        elif tag.startswith("I-"):
            continue
        else:
            if start is not None:
                spans.append(SlotSpan(slot, start, i))
                start, slot = None, None
    if start is not None:
        spans.append(SlotSpan(slot, start, len(sentence.tags)))
    return spans
