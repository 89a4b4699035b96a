"""Disambiguated terms from an entity-linking service and the document x term matrix.

The service (a BabelFy-style API) is reached over HTTP JSON, or
replaced by an offline fixture file holding the same record schema::

    [{"docId": "d1", "surface": "base de données", "lemmaKey": "bn:00025314n",
      "coherence": 0.31, "start": 10, "end": 25}, ...]
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np
import requests

from .corpus import Corpus
from .errors import ConfigError, DomainError, ParseError, ServiceError, UnknownReferenceError

log = logging.getLogger(__name__)

MATCHING_MODE = "EXACT_MATCHING"
CANDIDATE_MODE = "TOP"
DEFAULT_COHERENCE_THRESHOLD = 0.05


@dataclass(frozen=True)
class DisambiguatedTerm:
    doc_id: str
    surface: str
    lemma_key: str
    coherence: float
    start: int = 0
    end: int = 0

    def __post_init__(self):
        if not 0.0 <= self.coherence <= 1.0:
            raise DomainError(f"coherence {self.coherence} outside [0, 1] for {self.surface!r}")
        if not self.lemma_key:
            raise DomainError(f"empty lemma key for {self.surface!r}")

    @classmethod
    def from_record(cls, rec: dict) -> "DisambiguatedTerm":
        try:
            surface = str(rec["surface"])
            key = rec.get("lemmaKey") or surface.lower()
            return cls(
                doc_id=str(rec["docId"]),
                surface=surface,
                lemma_key=str(key),
                coherence=float(rec["coherence"]),
                start=int(rec.get("start", 0)),
                end=int(rec.get("end", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed term record {rec!r}: {exc}") from exc

    def to_record(self) -> dict:
        return {
            "docId": self.doc_id,
            "surface": self.surface,
            "lemmaKey": self.lemma_key,
            "coherence": self.coherence,
            "start": self.start,
            "end": self.end,
        }


@dataclass(frozen=True, eq=False)
class TermFrequencyMatrix:
    doc_ids: tuple[str, ...]
    term_keys: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            counts = counts.reshape(len(self.doc_ids), len(self.term_keys))
        if counts.shape != (len(self.doc_ids), len(self.term_keys)):
            raise DomainError(
                f"count shape {counts.shape} does not match "
                f"{len(self.doc_ids)} docs x {len(self.term_keys)} terms"
            )
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise DomainError("duplicate document ids in term matrix")
        if len(set(self.term_keys)) != len(self.term_keys):
            raise DomainError("duplicate term keys in term matrix")
        if (counts < 0).any():
            raise DomainError("term frequencies must be nonnegative")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TermFrequencyMatrix)
            and self.doc_ids == other.doc_ids
            and self.term_keys == other.term_keys
            and np.array_equal(self.counts, other.counts)
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def column(self, term: str) -> np.ndarray:
        try:
            j = self.term_keys.index(term)
        except ValueError:
            raise UnknownReferenceError(f"unknown term {term!r}") from None
        return self.counts[:, j]

    def drop_empty_columns(self) -> "TermFrequencyMatrix":
        keep = (self.counts != 0).any(axis=0)
        return TermFrequencyMatrix(
            self.doc_ids,
            tuple(t for t, k in zip(self.term_keys, keep) if k),
            self.counts[:, keep],
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["doc_id", *self.term_keys])
            for doc_id, row in zip(self.doc_ids, self.counts):
                w.writerow([doc_id, *(_fmt_count(v) for v in row)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "TermFrequencyMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ParseError(f"{path}: empty matrix file")
        header, body = rows[0], rows[1:]
        terms = tuple(header[1:])
        doc_ids, values = [], []
        for lineno, row in enumerate(body, start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}: expected {len(header)} cells, got {len(row)}", lineno)
            doc_ids.append(row[0])
            try:
                values.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", lineno) from exc
        counts = np.array(values, dtype=float).reshape(len(doc_ids), len(terms))
        if np.all(counts == np.round(counts)):
            counts = counts.astype(np.int64)
        return cls(tuple(doc_ids), terms, counts)


def _fmt_count(v) -> str:
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


class TermSource(Protocol):
    request_params: dict

    def annotate(self, doc_id: str, text: str) -> list[DisambiguatedTerm]: ...


@dataclass
class DisambiguationConfig:
    base_url: str | None = None
    api_key_env: str = "CREA_EL_API_KEY"
    base_url_env: str = "CREA_EL_URL"
    lang: str = "EN"
    fixture: str | None = None
    max_retries: int = 3
    backoff: float = 0.5
    timeout: float = 30.0
    jobs: int = 1


class OfflineFixture:
    """Replays service records from a JSON file (same schema as the live response)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.is_file():
            raise ConfigError(f"disambiguation fixture not found: {self.path}")
        with open(self.path, encoding="utf-8") as fh:
            records = json.load(fh)
        if not isinstance(records, list):
            raise ParseError(f"{self.path}: expected a JSON array of term records")
        self._by_doc: dict[str, list[DisambiguatedTerm]] = {}
        for rec in records:
            term = DisambiguatedTerm.from_record(rec)
            self._by_doc.setdefault(term.doc_id, []).append(term)
        self.request_params = {
            "source": "fixture",
            "fixture": str(self.path),
            "matching": MATCHING_MODE,
            "candidates": CANDIDATE_MODE,
        }

    @property
    def doc_ids(self) -> set[str]:
        return set(self._by_doc)

    def annotate(self, doc_id: str, text: str) -> list[DisambiguatedTerm]:
        if doc_id not in self._by_doc:
            raise UnknownReferenceError(f"fixture {self.path} has no records for document {doc_id!r}")
        return list(self._by_doc[doc_id])


class HttpDisambiguationClient:
    """POSTs one document per request and retries transient failures.

    Retries apply to connection errors, timeouts, HTTP 429 and 5xx; any other
    HTTP error is raised immediately.
    """

    def __init__(
        self,
        config: DisambiguationConfig,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        base_url = config.base_url or os.environ.get(config.base_url_env)
        if not base_url:
            raise ConfigError(
                f"no entity-linking endpoint: set base_url or ${config.base_url_env}"
            )
        self.base_url = base_url
        self.config = config
        self.api_key = os.environ.get(config.api_key_env, "")
        self.session = session or requests.Session()
        self.sleep = sleep
        self.request_params = {
            "source": "http",
            "url": self.base_url,
            "lang": config.lang,
            "matching": MATCHING_MODE,
            "candidates": CANDIDATE_MODE,
        }

    def _payload(self, doc_id: str, text: str) -> dict:
        return {
            "docId": doc_id,
            "text": text,
            "lang": self.config.lang,
            "matching": MATCHING_MODE,
            "candidates": CANDIDATE_MODE,
        }

    def annotate(self, doc_id: str, text: str) -> list[DisambiguatedTerm]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error = "no attempt made"
        attempts = self.config.max_retries
        for attempt in range(attempts):
            try:
                resp = self.session.post(
                    self.base_url,
                    json=self._payload(doc_id, text),
                    headers=headers,
                    timeout=self.config.timeout,
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        records = resp.json()
                    except ValueError as exc:
                        raise ServiceError(f"invalid JSON from {self.base_url}: {exc}", doc_id) from exc
                    if not isinstance(records, list):
                        raise ServiceError("response is not a JSON array", doc_id)
                    return [
                        DisambiguatedTerm.from_record({"docId": doc_id, **rec}) for rec in records
                    ]
                last_error = f"HTTP {resp.status_code}"
                if resp.status_code != 429 and resp.status_code < 500:
                    raise ServiceError(f"entity-linking request rejected: {last_error}", doc_id)
            if attempt + 1 < attempts:
                delay = self.config.backoff * 2**attempt
                log.warning("entity linking %s for %s, retrying in %.2fs", last_error, doc_id, delay)
                self.sleep(delay)
        raise ServiceError(f"entity linking failed after {attempts} attempts: {last_error}", doc_id)


def make_term_source(config: DisambiguationConfig, offline: bool = False) -> TermSource:
    if config.fixture:
        return OfflineFixture(config.fixture)
    if offline:
        raise ConfigError("offline run requested but no disambiguation fixture configured")
    return HttpDisambiguationClient(config)


def fetch_disambiguation(corpus: Corpus, source: TermSource, jobs: int = 1) -> list[DisambiguatedTerm]:
    """Disambiguate every document; output sorted by (doc id, start offset)."""

    def one(doc):
        return source.annotate(doc.id, doc.raw_text)

    docs = list(corpus)
    if jobs > 1 and len(docs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, docs))
    else:
        results = [one(d) for d in docs]
    terms = [t for batch in results for t in batch]
    # stable sort keeps service order for equal offsets
    return sorted(terms, key=lambda t: (t.doc_id, t.start))


def filter_coherence(
    terms: Iterable[DisambiguatedTerm], threshold: float = DEFAULT_COHERENCE_THRESHOLD
) -> list[DisambiguatedTerm]:
    """Keep terms whose coherence is strictly above ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise DomainError(f"coherence threshold {threshold} outside [0, 1]")
    return [t for t in terms if t.coherence > threshold]


def build_term_matrix(
    terms: Iterable[DisambiguatedTerm],
    doc_ids: Sequence[str] | Corpus,
    unit: str = "occurrence",
) -> TermFrequencyMatrix:
    """Count term occurrences per document.

    ``unit="occurrence"`` counts every mention; ``unit="presence"`` counts a
    term at most once per document. Rows follow ``doc_ids``; columns are the
    sorted term keys, so only terms with at least one mention appear.
    """
    if isinstance(doc_ids, Corpus):
        doc_ids = doc_ids.ids
    if unit not in ("occurrence", "presence"):
        raise ConfigError(f"unknown counting unit {unit!r}")
    row_of = {d: i for i, d in enumerate(doc_ids)}
    terms = list(terms)
    keys = sorted({t.lemma_key for t in terms})
    col_of = {k: j for j, k in enumerate(keys)}
    counts = np.zeros((len(doc_ids), len(keys)), dtype=np.int64)
    for t in terms:
        if t.doc_id not in row_of:
            raise UnknownReferenceError(f"term {t.surface!r} references unknown document {t.doc_id!r}")
        counts[row_of[t.doc_id], col_of[t.lemma_key]] += 1
    if unit == "presence":
        counts = (counts > 0).astype(np.int64)
    return TermFrequencyMatrix(tuple(doc_ids), tuple(keys), counts)


def write_terms_jsonl(terms: Iterable[DisambiguatedTerm], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in terms:
            fh.write(json.dumps(t.to_record(), ensure_ascii=False, sort_keys=True) + "\n")
