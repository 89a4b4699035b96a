"""Regenerate the bundled test fixtures under tests/data/.

    python scripts/make_fixtures.py

* synthetic/: 10 documents over a 30-term vocabulary (three topical groups),
  a TreeTagger-style annotation TSV and an offline disambiguation fixture.
* llm8/: 8 short documents and mock completion replies for batch size 3.

Everything is seeded; rerunning produces identical files.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np

from crea_topics.binarize import BinarizationSpec, binarize_matrix, retained_terms
from crea_topics.corpus import load_documents
from crea_topics.fca import enumerate_concepts
from crea_topics.llm_topics import (
    LLMConfig,
    RecordingClient,
    Topic,
    parse_topic_lines,
    render_prompt,
    request_hash,
    run_llm_pipeline,
)
from crea_topics.simcluster import cluster_terms
from crea_topics.term_extraction import OfflineFixture, build_term_matrix, filter_coherence

ROOT = Path(__file__).resolve().parents[1] / "tests" / "data"

GROUPS = {
    "web": ["server", "browser", "session", "cookie", "request",
            "url", "header", "form", "page", "client"],
    "database": ["table", "query", "index", "transaction", "schema",
                 "row", "column", "join", "database", "key"],
    "oop": ["class", "object", "method", "inheritance", "interface",
            "attribute", "constructor", "instance", "namespace", "trait"],
}
DOC_TOPICS = ["web", "web", "web", "web", "database", "database", "database", "oop", "oop", "oop"]
VERBS = [("uses", "use", "VVZ"), ("stores", "store", "VVZ"), ("returns", "return", "VVZ"),
         ("defines", "define", "VVZ"), ("updates", "update", "VVZ")]
ADJS = [("simple", "simple", "JJ"), ("large", "large", "JJ"), ("secure", "secure", "JJ")]


def make_synthetic(rng: np.random.Generator) -> None:
    out = ROOT / "synthetic"
    # goldens/ is owned by update_goldens.py
    for child in out.glob("*") if out.exists() else []:
        if child.name != "goldens":
            shutil.rmtree(child) if child.is_dir() else child.unlink()
    (out / "docs").mkdir(parents=True)
    annotation_lines = []
    records = []
    vocab = [t for g in GROUPS.values() for t in g]
    for d, topic in enumerate(DOC_TOPICS, start=1):
        doc_id = f"d{d:02d}"
        own = GROUPS[topic]
        text_parts: list[str] = []
        rows: list[tuple[str, str, str]] = []
        offset = 0

        def emit(surface, lemma, pos, is_term=False, glue=False):
            nonlocal offset
            if text_parts and not glue:
                text_parts.append(" ")
                offset += 1
            start = offset
            text_parts.append(surface)
            offset += len(surface)
            rows.append((surface, lemma, pos))
            if is_term:
                coherence = float(np.round(rng.uniform(0.0, 0.6), 3))
                records.append({"docId": doc_id, "surface": surface, "lemmaKey": lemma,
                                "coherence": coherence, "start": start, "end": offset})

        for _ in range(int(rng.integers(8, 13))):
            pick = lambda: own[int(rng.integers(len(own)))] if rng.random() < 0.8 else vocab[int(rng.integers(len(vocab)))]
            subj, obj = pick(), pick()
            verb = VERBS[int(rng.integers(len(VERBS)))]
            emit("The", "the", "DT")
            if rng.random() < 0.3:
                emit(*ADJS[int(rng.integers(len(ADJS)))])
            emit(subj, subj, "NN", is_term=True)
            emit(*verb)
            emit("the", "the", "DT")
            emit(obj, obj, "NN", is_term=True)
            emit(".", ".", "SENT", glue=True)
        (out / "docs" / f"{doc_id}.txt").write_text("".join(text_parts) + "\n", encoding="utf-8")
        annotation_lines.append(f"#doc {doc_id}")
        annotation_lines += ["\t".join(r) for r in rows]
    (out / "annotations.tsv").write_text("\n".join(annotation_lines) + "\n", encoding="utf-8")
    (out / "terms.json").write_text(json.dumps(records, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    (out / "config.yaml").write_text(
        "name: synthetic\n"
        "dataset: docs\n"
        "annotations: annotations.tsv\n"
        "disambiguation:\n  fixture: terms.json\n"
        "coherence_threshold: 0.05\n"
        "strategies: [High]\n"
        "betas: [0.0, 1.0]\n"
        "ks: [2, 4]\n"
        "llm:\n  batch_size: 5\n  mock_dir: mock\n"
        "label_clusters: true\n"
        "strict: true\n"
        "offline: true\n",
        encoding="utf-8",
    )
    record_synthetic_llm(out)


SYNTHETIC_REPLIES = [
    "Topic 1: session, cookie, browser, server, request\n"
    "Topic 2: page, url, header, form, client\n"
    "Topic 3: database, table, query, row, column\n"
    "Topic 4: transaction, index, schema, join, key\n"
    "Topic 5: web, http, state, login, page\n",
    "Topic 1: database, query, table, schema, index\n"
    "Topic 2: class, object, method, attribute, instance\n"
    "Topic 3: inheritance, interface, trait, namespace, constructor\n"
    "Topic 4: transaction, row, column, join, key\n"
    "Topic 5: code, design, reuse, type, structure\n",
    "Topic 1: session, cookie, browser, server, request\n"
    "Topic 2: page, url, header, form, client\n"
    "Topic 3: database, table, query, schema, index\n"
    "Topic 4: transaction, row, column, join, key\n"
    "Topic 5: class, object, method, inheritance, interface\n",
    "Topic 1 : Sessions - Browser sessions, cookies and server requests\n"
    "Topic 2 : Web Pages - Pages, URLs, headers and forms seen by the client\n"
    "Topic 3 : Databases - Tables, queries, schemas and indexes\n"
    "Topic 4 : Transactions - Transactions over rows, columns, joins and keys\n"
    "Topic 5 : Objects - Classes, objects, methods, inheritance and interfaces\n",
]


def record_synthetic_llm(out: Path) -> None:
    texts = load_documents(out / "docs")
    client = RecordingClient(_Scripted(SYNTHETIC_REPLIES), out / "mock")
    run_llm_pipeline(texts, client, LLMConfig(batch_size=5, strict=True))

    # labels for the first configured clustering (High, beta 0, k 2), as used by `compare`
    terms = filter_coherence(
        [t for d in texts for t in OfflineFixture(out / "terms.json").annotate(d, texts[d])], 0.05
    )
    matrix = build_term_matrix(terms, list(texts))
    _, ctx = retained_terms(binarize_matrix(matrix, BinarizationSpec("High", 0.0)))
    _, _, assignments = cluster_terms(ctx, enumerate_concepts(ctx), [2])
    topics = [
        Topic(lab, tuple(ctx.attributes[i] for i in members))
        for lab, members in assignments[2].clusters().items()
    ]
    messages = [{"role": "user", "content": render_prompt("label", topics)}]
    reply = "".join(
        f"Topic {t.index} : Cluster {t.index} - Terms grouped around {t.keywords[0]}\n" for t in topics
    )
    (out / "mock" / f"{request_hash(messages)}.txt").write_text(reply, encoding="utf-8")


LLM_DOCS = [
    "PHP scripts run on the web server and produce HTML pages for the browser.",
    "Variables in PHP start with a dollar sign; arrays store ordered values.",
    "Loops such as for and foreach repeat a block; switch selects a branch.",
    "Forms send user input with GET or POST and must be validated on the server.",
    "Sessions and cookies keep a user logged in between two requests.",
    "Classes define objects with methods and attributes; inheritance reuses code.",
    "PDO opens a MySQL connection and runs prepared SQL queries in transactions.",
    "Symfony applies the MVC pattern and renders templates with Twig.",
]

BATCH_REPLIES = [
    "Topic 1: php, web server, html, browser, script\n"
    "Topic 2: variables, arrays, dollar sign, values, types\n"
    "Topic 3: loops, foreach, switch, control flow, branch\n"
    "Topic 4: syntax, echo, output, pages, code\n"
    "Topic 5: basics, installation, configuration, runtime, interpreter\n",
    "Topic 1: forms, user input, get, post, validation\n"
    "Topic 2: sessions, cookies, login, requests, state\n"
    "Topic 3: classes, objects, methods, attributes, inheritance\n"
    "Topic 4: server, security, persistence, csrf, tokens\n"
    "Topic 5: code reuse, oop, design, structure, modules\n",
    "Topic 1: database, mysql, pdo, queries, transactions\n"
    "Topic 2: sql, prepared statements, connection, tables, rows\n"
    "Topic 3: mvc, symfony, twig, templates, framework\n"
    "Topic 4: routing, controllers, views, models, rest\n"
    "Topic 5: tools, composer, packages, dependencies, config\n",
]

MERGE_REPLY = (
    "Topic 1: php, syntax, variables, arrays, loops\n"
    "Topic 2: forms, input, get, post, validation\n"
    "Topic 3: sessions, cookies, login, persistence, csrf\n"
    "Topic 4: database, mysql, pdo, queries, transactions\n"
    "Topic 5: mvc, symfony, twig, rest, framework\n"
)

LABEL_REPLY = (
    "Topic 1 : Basics - PHP syntax, variables, arrays and loops\n"
    "Topic 2 : Forms - User input handling with GET/POST and validation\n"
    "Topic 3 : Sessions - Session handling, cookies, login, and security persistence\n"
    "Topic 4 : Database - SQL queries, PDO, MySQL connections, and transactions\n"
    "Topic 5 : Frameworks - MVC architecture with Symfony, Twig, REST, and related tools\n"
)


class _Scripted:
    def __init__(self, replies):
        self.replies = list(replies)

    def complete(self, messages):
        return self.replies.pop(0)


def make_llm8() -> None:
    out = ROOT / "llm8"
    if out.exists():
        shutil.rmtree(out)
    (out / "docs").mkdir(parents=True)
    texts = {}
    for i, text in enumerate(LLM_DOCS, start=1):
        doc_id = f"p{i}"
        texts[doc_id] = text
        (out / "docs" / f"{doc_id}.txt").write_text(text + "\n", encoding="utf-8")
    for reply in BATCH_REPLIES + [MERGE_REPLY]:
        assert len(parse_topic_lines(reply, strict=True)) == 5
    client = RecordingClient(_Scripted(BATCH_REPLIES + [MERGE_REPLY, LABEL_REPLY]), out / "mock")
    run_llm_pipeline(texts, client, LLMConfig(batch_size=3, strict=True))
    (out / "config.yaml").write_text(
        "name: llm8\n"
        "dataset: docs\n"
        "llm:\n  batch_size: 3\n  mock_dir: mock\n"
        "strict: true\n"
        "offline: true\n",
        encoding="utf-8",
    )


def main() -> None:
    make_synthetic(np.random.default_rng(20250101))
    make_llm8()
    print(f"fixtures written under {ROOT}")


if __name__ == "__main__":
    main()
