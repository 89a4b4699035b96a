"""Zero-shot LLM topic extraction: batch -> generate -> merge -> label.

Every prompt asks for a fixed line grammar and nothing else::

    Topic 1: keyword, keyword, keyword, keyword, keyword
    Topic 1 : Label - One sentence description.

Completion backends only need a ``complete(messages) -> str`` method. Two ship
here: :class:`ChatCompletionClient` (OpenAI-compatible HTTP endpoint) and
:class:`MockClient` (replays fixture files keyed by a hash of the request).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import requests

from .corpus import Corpus
from .errors import (
    ConfigError,
    CreaError,
    DomainError,
    ParseError,
    PipelineError,
    ServiceError,
    TopicValidationError,
    UnknownReferenceError,
)

log = logging.getLogger(__name__)

N_TOPICS = 5
N_KEYWORDS = 5
MAX_BATCH_SIZE = 10

GENERATION_TEMPLATE = """\
You are simulating a topic modeling system.
Analyze the following set of documents and identify 5 topics.
[DOCUMENTS]
Each topic must be represented only by 5 keywords (1–2 words each).
Return solely the results in the following format and nothing else:
Topic k: word, word, word, word, word
..."""

MERGE_TEMPLATE = """\
You are consolidating topic modeling results from multiple document batches.
Each batch produced topics in the format "Topic k: word, word, word, word, word".
Here are the topics:
[BATCH RESULTS]
Merge these results into exactly 5 final topics.
- Each topic must contain exactly 5 keywords.
- Keywords must be 1–2 words each.
- Merge duplicates and synonyms into a single topic.
- Favor topics that appear in multiple batches.
- Discard topics that appear rarely.
Return solely the final topics in the following format and nothing else:
Topic k: word, word, word, word, word
..."""

LABEL_TEMPLATE = """\
You are labeling the final topics obtained from topic modeling.
Here are the topics:
[TOPICS]
For each topic:
- Assign a concise label (1–2 words).
- Provide a one-sentence description that summarizes the topic.
- Do not add explanations or commentary.
Return solely the final labels in the following format and nothing else:
Topic k : Label - Description
..."""

TEMPLATES = {
    "generation": (GENERATION_TEMPLATE, "[DOCUMENTS]"),
    "merge": (MERGE_TEMPLATE, "[BATCH RESULTS]"),
    "label": (LABEL_TEMPLATE, "[TOPICS]"),
}

_TOPIC_RE = re.compile(r"^\s*topic\s*(\d+)\s*:\s*(.*?)\s*$", re.IGNORECASE)
_SENTENCE_BREAK_RE = re.compile(r"[.!?]\s+\S")


@dataclass(frozen=True)
class Topic:
    index: int
    keywords: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "keywords", tuple(self.keywords))
        if self.index < 1:
            raise DomainError(f"topic index must be positive, got {self.index}")

    def line(self) -> str:
        return f"Topic {self.index}: {', '.join(self.keywords)}"


@dataclass(frozen=True)
class LabeledTopic:
    topic: Topic
    label: str
    description: str


@dataclass(frozen=True)
class BatchPlan:
    batches: tuple[tuple[str, ...], ...]
    batch_size: int


def make_batches(docs: Corpus | Sequence[str], batch_size: int) -> BatchPlan:
    """Contiguous, order-preserving batches of document ids."""
    if not 1 <= batch_size <= MAX_BATCH_SIZE:
        raise DomainError(f"batch size must be in [1, {MAX_BATCH_SIZE}], got {batch_size}")
    ids = docs.ids if isinstance(docs, Corpus) else list(docs)
    batches = tuple(tuple(ids[i : i + batch_size]) for i in range(0, len(ids), batch_size))
    return BatchPlan(batches, batch_size)


def format_topics(topics: Iterable[Topic]) -> str:
    return "\n".join(t.line() for t in topics)


def format_documents(documents: Sequence[str]) -> str:
    return "\n\n".join(f"Document {i}:\n{text}" for i, text in enumerate(documents, start=1))


def render_prompt(kind: str, payload) -> str:
    """Fill one of the three templates.

    ``payload`` is a list of document texts (generation), of raw batch
    replies (merge) or of :class:`Topic` (label).
    """
    if kind not in TEMPLATES:
        raise DomainError(f"unknown prompt kind {kind!r}")
    items = list(payload)
    if not items:
        raise DomainError(f"{kind} prompt needs a nonempty payload")
    template, placeholder = TEMPLATES[kind]
    if kind == "generation":
        body = format_documents(items)
    elif kind == "merge":
        body = "\n\n".join(str(r).strip() for r in items)
    else:
        body = format_topics(items)
    return template.replace(placeholder, body)


def _check_keywords(topic: Topic, strict: bool, n_keywords: int, lineno: int) -> None:
    if strict and len(topic.keywords) != n_keywords:
        raise TopicValidationError(
            f"line {lineno}: topic {topic.index} has {len(topic.keywords)} keywords, "
            f"expected {n_keywords}",
            topic.index,
        )
    long = [kw for kw in topic.keywords if not 1 <= len(kw.split()) <= 2]
    if long:
        log.warning("topic %d has keywords outside 1-2 words: %s", topic.index, long)


def parse_topic_lines(text: str, strict: bool = False, n_keywords: int = N_KEYWORDS) -> list[Topic]:
    """Extract ``Topic <n>: kw, kw, ...`` lines.

    Lenient mode skips any other line. Strict mode rejects any non-blank line
    outside the grammar and any topic without exactly ``n_keywords`` keywords.
    """
    topics = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        m = _TOPIC_RE.match(line)
        keywords = [kw.strip() for kw in m.group(2).split(",")] if m else []
        if not m or not all(keywords):
            if strict:
                raise ParseError(f"not a topic line: {line.strip()!r}", lineno)
            continue
        topic = Topic(int(m.group(1)), tuple(keywords))
        _check_keywords(topic, strict, n_keywords, lineno)
        topics.append(topic)
    return topics


def parse_label_lines(text: str, topics: Sequence[Topic], strict: bool = False) -> list[LabeledTopic]:
    """Extract ``Topic <n> : Label - Description`` lines for already known topics.

    The label ends at the first ``" - "``; later dashes stay in the description.
    """
    by_index = {t.index: t for t in topics}
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        m = _TOPIC_RE.match(line)
        if not m:
            if strict:
                raise ParseError(f"not a label line: {line.strip()!r}", lineno)
            continue
        rest = m.group(2)
        label, sep, description = rest.partition(" - ")
        label, description = label.strip(), description.strip()
        if not sep or not label or not description:
            raise ParseError(f"expected 'Label - Description', got {rest!r}", lineno)
        index = int(m.group(1))
        if index not in by_index:
            raise UnknownReferenceError(f"line {lineno}: label for unknown topic {index}")
        if _SENTENCE_BREAK_RE.search(description.rstrip(".!? ")):
            if strict:
                raise TopicValidationError(
                    f"line {lineno}: description of topic {index} is not a single sentence", index
                )
            log.warning("description of topic %d spans several sentences", index)
        out.append(LabeledTopic(by_index[index], label, description))
    if strict:
        got = sorted(lt.topic.index for lt in out)
        if got != sorted(by_index):
            raise TopicValidationError(
                f"labels cover topics {got}, expected {sorted(by_index)}"
            )
    return out


# --- completion backends -------------------------------------------------


class CompletionClient(Protocol):
    def complete(self, messages: list[dict]) -> str: ...


def request_hash(messages: list[dict]) -> str:
    canon = json.dumps(messages, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


class MockClient:
    """Replays ``<request hash>.txt`` files from a fixture directory."""

    def __init__(self, fixture_dir: str | Path):
        self.fixture_dir = Path(fixture_dir)
        if not self.fixture_dir.is_dir():
            raise ConfigError(f"mock fixture directory not found: {self.fixture_dir}")
        self.calls = 0

    def complete(self, messages: list[dict]) -> str:
        self.calls += 1
        key = request_hash(messages)
        path = self.fixture_dir / f"{key}.txt"
        if not path.is_file():
            raise UnknownReferenceError(f"no mock response for request {key} in {self.fixture_dir}")
        return path.read_text(encoding="utf-8")


class RecordingClient:
    """Wraps a client and stores every reply under its request hash (builds mock fixtures)."""

    def __init__(self, inner: CompletionClient, fixture_dir: str | Path):
        self.inner = inner
        self.fixture_dir = Path(fixture_dir)
        self.fixture_dir.mkdir(parents=True, exist_ok=True)

    def complete(self, messages: list[dict]) -> str:
        reply = self.inner.complete(messages)
        (self.fixture_dir / f"{request_hash(messages)}.txt").write_text(reply, encoding="utf-8")
        return reply


@dataclass
class ChatClientConfig:
    base_url: str | None = None
    model: str | None = None
    temperature: float = 0.0
    max_retries: int = 4
    backoff: float = 1.0
    timeout: float = 120.0
    base_url_env: str = "CREA_LLM_URL"
    api_key_env: str = "CREA_LLM_API_KEY"
    model_env: str = "CREA_LLM_MODEL"


class ChatCompletionClient:
    """POST ``{base_url}/chat/completions`` with bounded exponential backoff."""

    def __init__(
        self,
        config: ChatClientConfig | None = None,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config = config or ChatClientConfig()
        self.base_url = (config.base_url or os.environ.get(config.base_url_env, "")).rstrip("/")
        self.model = config.model or os.environ.get(config.model_env, "")
        if not self.base_url:
            raise ConfigError(f"no completion endpoint: set base_url or ${config.base_url_env}")
        if not self.model:
            raise ConfigError(f"no model name: set model or ${config.model_env}")
        self.api_key = os.environ.get(config.api_key_env, "")
        self.session = session or requests.Session()
        self.sleep = sleep

    def complete(self, messages: list[dict]) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"model": self.model, "messages": messages, "temperature": self.config.temperature}
        last = "no attempt made"
        for attempt in range(self.config.max_retries):
            try:
                resp = self.session.post(
                    f"{self.base_url}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=self.config.timeout,
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise ServiceError(f"unexpected completion payload: {exc}") from exc
                last = f"HTTP {resp.status_code}"
                if resp.status_code != 429 and resp.status_code < 500:
                    raise ServiceError(f"completion request rejected: {last}")
            if attempt + 1 < self.config.max_retries:
                delay = self.config.backoff * 2**attempt
                log.warning("completion call failed (%s); retrying in %.1fs", last, delay)
                self.sleep(delay)
        raise ServiceError(f"completion failed after {self.config.max_retries} attempts: {last}")


# --- pipeline ------------------------------------------------------------


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = (
        datetime.fromtimestamp(int(epoch), tz=timezone.utc)
        if epoch
        else datetime.now(tz=timezone.utc)
    )
    return moment.isoformat(timespec="seconds")


@dataclass
class LLMConfig:
    batch_size: int = 5
    strict: bool = False
    jobs: int = 1


@dataclass
class TranscriptEntry:
    stage: str
    batch: int | None
    request_hash: str
    prompt: str
    response: str | None
    timestamp: str
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, ensure_ascii=False, sort_keys=True)


@dataclass
class LLMRun:
    topics: list[LabeledTopic]
    plan: BatchPlan
    transcript: list[TranscriptEntry] = field(default_factory=list)

    def write_transcript(self, path: str | Path) -> None:
        write_transcript(self.transcript, path)


def write_transcript(entries: Iterable[TranscriptEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(e.to_json() + "\n")


def _call(client, stage, batch, prompt, transcript) -> str:
    messages = [{"role": "user", "content": prompt}]
    entry = TranscriptEntry(stage, batch, request_hash(messages), prompt, None, _timestamp())
    try:
        entry.response = client.complete(messages)
    except Exception as exc:
        entry.error = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        transcript.append(entry)
    return entry.response


def run_llm_pipeline(
    documents: Corpus | Mapping[str, str],
    client: CompletionClient,
    config: LLMConfig | None = None,
) -> LLMRun:
    """Generation per batch, one merge call, one label call: ceil(n/batch) + 2 calls."""
    config = config or LLMConfig()
    texts = {d.id: d.raw_text for d in documents} if isinstance(documents, Corpus) else dict(documents)
    plan = make_batches(list(texts), config.batch_size)
    transcript: list[TranscriptEntry] = []
    stage = "generation"
    try:
        prompts = [render_prompt("generation", [texts[i] for i in batch]) for batch in plan.batches]
        per_batch: list[list[TranscriptEntry]] = [[] for _ in prompts]

        def generate(b):
            reply = _call(client, "generation", b, prompts[b], per_batch[b])
            found = parse_topic_lines(reply, strict=config.strict)
            if config.strict and len(found) != N_TOPICS:
                raise TopicValidationError(f"batch {b + 1}: expected {N_TOPICS} topics, got {len(found)}")
            return reply

        try:
            if config.jobs > 1 and len(prompts) > 1:
                with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                    replies = list(pool.map(generate, range(len(prompts))))
            else:
                replies = [generate(b) for b in range(len(prompts))]
        finally:
            for entries in per_batch:
                transcript.extend(entries)

        stage = "merge"
        merged_text = _call(client, "merge", None, render_prompt("merge", replies), transcript)
        final = parse_topic_lines(merged_text, strict=config.strict)
        if len(final) != N_TOPICS:
            raise TopicValidationError(f"expected {N_TOPICS} final topics, got {len(final)}")

        stage = "label"
        label_text = _call(client, "label", None, render_prompt("label", final), transcript)
        labeled = parse_label_lines(label_text, final, strict=config.strict)
        if len(labeled) != N_TOPICS:
            raise TopicValidationError(f"expected {N_TOPICS} labels, got {len(labeled)}")
    except CreaError as exc:
        raise PipelineError(stage, exc, transcript) from exc
    return LLMRun(labeled, plan, transcript)


def topics_report(topics: Sequence[LabeledTopic], title: str = "LLM topics") -> str:
    lines = [f"## {title}", "", "| Topic | Label / Terms |", "|---|---|"]
    for lt in topics:
        lines.append(f"| {lt.topic.index} | **{lt.label}** - {lt.description} |")
        lines.append(f"| | *{', '.join(lt.topic.keywords)}* |")
    return "\n".join(lines) + "\n"


def expected_calls(n_docs: int, batch_size: int) -> int:
    return math.ceil(n_docs / batch_size) + 2
