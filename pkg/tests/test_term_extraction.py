import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crea_topics.corpus import Corpus, Document
from crea_topics.errors import ConfigError, DomainError, ParseError, ServiceError, UnknownReferenceError
from crea_topics.term_extraction import (
    DisambiguatedTerm,
    DisambiguationConfig,
    HttpDisambiguationClient,
    OfflineFixture,
    TermFrequencyMatrix,
    build_term_matrix,
    fetch_disambiguation,
    filter_coherence,
    make_term_source,
    write_terms_jsonl,
)

from httpstub import StubServer


def _term(doc, key, coherence=0.5, start=0):
    return DisambiguatedTerm(doc, key, key, coherence, start, start + len(key))


def test_record_round_trip():
    rec = {"docId": "d1", "surface": "Base", "lemmaKey": "bn:1n", "coherence": 0.3, "start": 2, "end": 6}
    assert DisambiguatedTerm.from_record(rec).to_record() == rec


def test_record_defaults_and_errors():
    t = DisambiguatedTerm.from_record({"docId": "d", "surface": "Cookie", "coherence": 0.2})
    assert t.lemma_key == "cookie"
    with pytest.raises(ParseError):
        DisambiguatedTerm.from_record({"docId": "d", "surface": "x"})
    with pytest.raises(DomainError):
        _term("d", "x", coherence=1.5)


def test_filter_coherence_is_strict():
    terms = [_term("d", "a", 0.05), _term("d", "b", 0.051), _term("d", "c", 0.0)]
    assert [t.lemma_key for t in filter_coherence(terms, 0.05)] == ["b"]
    assert len(filter_coherence(terms, 0.0)) == 2
    with pytest.raises(DomainError):
        filter_coherence(terms, 2.0)


def test_matrix_hand_example():
    terms = [_term("d1", "php"), _term("d1", "php", start=5), _term("d2", "sql"), _term("d2", "php")]
    m = build_term_matrix(terms, ["d1", "d2", "d3"])
    assert m.term_keys == ("php", "sql")
    assert m.counts.tolist() == [[2, 0], [1, 1], [0, 0]]
    p = build_term_matrix(terms, ["d1", "d2", "d3"], unit="presence")
    assert p.counts.tolist() == [[1, 0], [1, 1], [0, 0]]
    with pytest.raises(ConfigError):
        build_term_matrix(terms, ["d1", "d2"], unit="sentence")


def test_matrix_unknown_doc():
    with pytest.raises(UnknownReferenceError):
        build_term_matrix([_term("zz", "a")], ["d1"])


def test_matrix_is_read_only():
    m = build_term_matrix([_term("d1", "a")], ["d1"])
    with pytest.raises(ValueError):
        m.counts[0, 0] = 7


terms_strategy = st.lists(
    st.builds(_term, st.sampled_from(["d1", "d2", "d3"]), st.sampled_from("abcde"), st.floats(0, 1)),
    max_size=30,
)


@given(terms_strategy, st.floats(0, 1))
def test_matrix_properties(terms, threshold):
    kept = filter_coherence(terms, threshold)
    m = build_term_matrix(kept, ["d1", "d2", "d3"])
    assert int(m.counts.sum()) == len(kept)
    assert list(m.term_keys) == sorted(m.term_keys)
    assert (m.counts.sum(axis=0) > 0).all()
    p = build_term_matrix(kept, ["d1", "d2", "d3"], unit="presence")
    assert np.array_equal(p.counts, (m.counts > 0).astype(int))


def test_csv_round_trip(tmp_path):
    m = TermFrequencyMatrix(("d1", "d2"), ("a", "b,c"), np.array([[1, 0], [0, 3]]))
    m.to_csv(tmp_path / "m.csv")
    assert TermFrequencyMatrix.from_csv(tmp_path / "m.csv") == m
    (tmp_path / "bad.csv").write_text("doc_id,a\nd1,1,2\n")
    with pytest.raises(ParseError) as err:
        TermFrequencyMatrix.from_csv(tmp_path / "bad.csv")
    assert err.value.line == 2


def _corpus(*ids):
    return Corpus(tuple(Document(i, f"text of {i}", ()) for i in ids))


def test_offline_fixture(tmp_path):
    path = tmp_path / "terms.json"
    path.write_text(json.dumps([
        {"docId": "d2", "surface": "b", "lemmaKey": "b", "coherence": 0.4, "start": 9},
        {"docId": "d1", "surface": "a", "lemmaKey": "a", "coherence": 0.4, "start": 3},
        {"docId": "d2", "surface": "c", "lemmaKey": "c", "coherence": 0.4, "start": 1},
    ]))
    source = OfflineFixture(path)
    terms = fetch_disambiguation(_corpus("d1", "d2"), source, jobs=2)
    assert [(t.doc_id, t.lemma_key) for t in terms] == [("d1", "a"), ("d2", "c"), ("d2", "b")]
    with pytest.raises(UnknownReferenceError):
        fetch_disambiguation(_corpus("d1", "d9"), source)
    assert source.request_params["matching"] == "EXACT_MATCHING"
    assert source.request_params["candidates"] == "TOP"


def test_make_term_source(tmp_path):
    with pytest.raises(ConfigError):
        make_term_source(DisambiguationConfig(), offline=True)
    with pytest.raises(ConfigError):
        make_term_source(DisambiguationConfig(fixture=str(tmp_path / "missing.json")))


def test_http_needs_endpoint(monkeypatch):
    monkeypatch.delenv("CREA_EL_URL", raising=False)
    with pytest.raises(ConfigError):
        HttpDisambiguationClient(DisambiguationConfig())


def test_http_success_sends_modes(monkeypatch):
    monkeypatch.setenv("CREA_EL_API_KEY", "secret")
    reply = [{"surface": "PHP", "lemmaKey": "bn:php", "coherence": 0.2, "start": 0, "end": 3}]
    with StubServer([(200, reply)]) as srv:
        client = HttpDisambiguationClient(DisambiguationConfig(base_url=srv.url))
        terms = client.annotate("d1", "PHP rocks")
    assert terms == [DisambiguatedTerm("d1", "PHP", "bn:php", 0.2, 0, 3)]
    sent = srv.requests[0]
    assert sent["json"]["matching"] == "EXACT_MATCHING"
    assert sent["json"]["candidates"] == "TOP"
    assert sent["json"]["text"] == "PHP rocks"
    assert sent["headers"]["Authorization"] == "Bearer secret"


def test_http_retries_transient_errors():
    delays = []
    reply = [{"surface": "x", "coherence": 0.3}]
    with StubServer([(500, {}), (429, {}), (200, reply)]) as srv:
        client = HttpDisambiguationClient(
            DisambiguationConfig(base_url=srv.url, max_retries=3, backoff=0.1), sleep=delays.append
        )
        assert len(client.annotate("d1", "x")) == 1
    assert delays == [0.1, 0.2]
    assert len(srv.requests) == 3


def test_http_gives_up_with_doc_id():
    with StubServer([(503, {})] * 3) as srv:
        client = HttpDisambiguationClient(DisambiguationConfig(base_url=srv.url), sleep=lambda s: None)
        with pytest.raises(ServiceError) as err:
            client.annotate("d7", "x")
    assert err.value.doc_id == "d7"
    assert "3 attempts" in str(err.value)


def test_http_client_error_not_retried():
    with StubServer([(400, {}), (200, [])]) as srv:
        client = HttpDisambiguationClient(DisambiguationConfig(base_url=srv.url), sleep=lambda s: None)
        with pytest.raises(ServiceError):
            client.annotate("d1", "x")
    assert len(srv.requests) == 1


def test_http_connection_refused():
    client = HttpDisambiguationClient(
        DisambiguationConfig(base_url="http://127.0.0.1:9", max_retries=2, timeout=1), sleep=lambda s: None
    )
    with pytest.raises(ServiceError):
        client.annotate("d1", "x")


def test_http_bad_json():
    with StubServer([(200, b"not json")]) as srv:
        client = HttpDisambiguationClient(DisambiguationConfig(base_url=srv.url))
        with pytest.raises(ServiceError):
            client.annotate("d1", "x")


def test_write_terms_jsonl(tmp_path):
    write_terms_jsonl([_term("d1", "a")], tmp_path / "t.jsonl")
    rec = json.loads((tmp_path / "t.jsonl").read_text())
    assert rec["lemmaKey"] == "a" and rec["docId"] == "d1"
