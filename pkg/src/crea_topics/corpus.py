"""Document ingestion, minimal cleaning, lemma/POS annotations and corpus statistics.

Annotations are produced by an external tagger (TreeTagger-style output) and
read from a TSV stream::

    #doc d1
    cats<TAB>cat<TAB>NNS
    run<TAB>run<TAB>VV
    #doc d2
    ...
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, TextIO

from .errors import ConfigError, DomainError, ParseError, UnknownReferenceError

# English TreeTagger (Penn-derived) tags for nouns, proper nouns, adjectives
# and lexical verbs. Only a default: the original French run used the
# equivalent NOM/NAM/ADJ/VER classes and the English set is a judgement call.
DEFAULT_ALLOWED_POS = frozenset(
    {
        "NN", "NNS", "NP", "NPS",
        "JJ", "JJR", "JJS",
        "VV", "VVD", "VVG", "VVN", "VVP", "VVZ",
    }
)

_REPLACEMENT_CHAR = "\ufffd"


@dataclass(frozen=True)
class AnnotatedToken:
    surface: str
    lemma: str
    pos: str

    def __post_init__(self):
        if not self.surface or not self.lemma:
            raise DomainError(f"empty surface or lemma in token {self!r}")


@dataclass(frozen=True)
class Document:
    id: str
    raw_text: str
    tokens: tuple[AnnotatedToken, ...] = ()


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ids = [d.id for d in self.documents]
        if len(ids) != len(set(ids)):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DomainError(f"duplicate document ids: {dup}")

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self.documents]

    def get(self, doc_id: str) -> Document:
        for doc in self.documents:
            if doc.id == doc_id:
                return doc
        raise UnknownReferenceError(f"unknown document id {doc_id!r}")


@dataclass(frozen=True)
class CorpusStats:
    total_tokens: int
    total_unique_tokens: int
    avg_tokens_per_doc: float
    avg_unique_tokens_per_doc: float
    unique_token_ratio: float
    hapax_ratio: float

    def as_row(self) -> dict[str, float]:
        return {
            "total_tokens": self.total_tokens,
            "total_unique_tokens": self.total_unique_tokens,
            "avg_tokens_per_doc": self.avg_tokens_per_doc,
            "avg_unique_tokens_per_doc": self.avg_unique_tokens_per_doc,
            "unique_token_ratio": self.unique_token_ratio,
            "hapax_ratio": self.hapax_ratio,
        }


def _is_non_printable(ch: str) -> bool:
    if ch == _REPLACEMENT_CHAR:
        return True
    return unicodedata.category(ch) in ("Cc", "Cf") and not ch.isspace()


def clean_text(raw: str) -> str:
    """Drop control/format characters and collapse whitespace runs.

    Deliberately nothing else: no case folding, no stop-word removal.
    """
    kept = "".join(ch for ch in raw if not _is_non_printable(ch))
    return " ".join(kept.split())


def load_documents(directory: str | Path, clean: bool = True) -> dict[str, str]:
    """Read every ``*.txt`` file of a directory; the filename stem is the doc id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"document directory not found: {directory}")
    texts = {}
    for path in sorted(directory.glob("*.txt")):
        text = path.read_text(encoding="utf-8")
        texts[path.stem] = clean_text(text) if clean else text
    return texts


def parse_annotations(stream: TextIO | Iterable[str]) -> dict[str, list[AnnotatedToken]]:
    groups: dict[str, list[AnnotatedToken]] = {}
    current = None
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if line.startswith("#doc"):
            doc_id = line[4:].strip()
            if not doc_id:
                raise ParseError("'#doc' header without an id", lineno)
            if doc_id in groups:
                raise ParseError(f"document {doc_id!r} annotated twice", lineno)
            current = groups[doc_id] = []
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise ParseError(f"expected 3 tab-separated columns, got {len(cols)}", lineno)
        if current is None:
            raise ParseError("token row before any '#doc' header", lineno)
        surface, lemma, pos = (c.strip() for c in cols)
        if not surface or not lemma:
            raise ParseError("empty surface or lemma", lineno)
        current.append(AnnotatedToken(surface, lemma, pos))
    return groups


def load_annotated_corpus(
    doc_texts: Mapping[str, str],
    annotation_stream: TextIO | Iterable[str],
    tagset: frozenset[str] | None = None,
) -> Corpus:
    """Attach the annotation rows of each ``#doc`` group to its document.

    Documents without an annotation group keep an empty token list.
    """
    groups = parse_annotations(annotation_stream)
    unknown = sorted(set(groups) - set(doc_texts))
    if unknown:
        raise UnknownReferenceError(f"annotations reference unknown document ids: {unknown}")
    if tagset is not None:
        for doc_id, toks in groups.items():
            bad = sorted({t.pos for t in toks} - tagset)
            if bad:
                raise DomainError(f"document {doc_id!r} uses tags outside the tagset: {bad}")
    docs = tuple(
        Document(doc_id, text, tuple(groups.get(doc_id, ())))
        for doc_id, text in doc_texts.items()
    )
    return Corpus(docs)


def apply_pos_filter(corpus: Corpus, allowed_pos: Iterable[str]) -> Corpus:
    allowed = frozenset(allowed_pos)
    if not allowed:
        raise ConfigError("allowed POS set is empty; the filter would erase the corpus")
    return Corpus(
        tuple(
            replace(doc, tokens=tuple(t for t in doc.tokens if t.pos in allowed))
            for doc in corpus
        )
    )


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Lemma-level statistics of an annotated (and usually POS-filtered) corpus."""
    counts: Counter[str] = Counter()
    per_doc_unique = []
    for doc in corpus:
        lemmas = [t.lemma for t in doc.tokens]
        counts.update(lemmas)
        per_doc_unique.append(len(set(lemmas)))

    total = sum(counts.values())
    unique = len(counts)
    n_docs = len(corpus)
    if total == 0:
        return CorpusStats(0, 0, 0.0, 0.0, 0.0, 0.0)
    hapax = sum(1 for c in counts.values() if c == 1)
    return CorpusStats(
        total_tokens=total,
        total_unique_tokens=unique,
        avg_tokens_per_doc=total / n_docs,
        avg_unique_tokens_per_doc=sum(per_doc_unique) / n_docs,
        unique_token_ratio=unique / total,
        hapax_ratio=hapax / unique,
    )
