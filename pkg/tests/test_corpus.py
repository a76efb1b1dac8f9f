import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radlabel import corpus
from radlabel.corpus import (
    Document,
    NormalizationRules,
    RawReport,
    apply_corrections,
    build_vocabulary,
    filter_documents,
    preprocess_documents,
    preprocess_text,
    report_document,
    scrub_report,
    split_sentences,
)
from radlabel.errors import DataError, ValidationError
from radlabel.stemmer import NullStemmer
from conftest import make_reports


def _report(text, report_id="r1", anatomy="wrist"):
    return RawReport(report_id=report_id, exam_id="e1", anatomy=anatomy, text=text)


# ---------------------------------------------------------------------------
# Scrubbing


def test_scrub_replaces_dates():
    out = scrub_report(_report("se us 2014-03-01"))
    assert out.text == "se us <DATE_REMOVED>"


def test_scrub_replaces_exam_ids():
    out = scrub_report(_report("jämför med us1234567"))
    assert out.text == "jämför med <EXAM_ID_REMOVED>"


def test_scrub_is_identity_without_ids_or_dates():
    text = "Ingen fraktur kan påvisas."
    assert scrub_report(_report(text)).text == text


def test_scrub_idempotent_on_synthetic_corpus():
    reports = make_reports(100)
    # salt some reports with dates/ids
    salted = []
    for i, r in enumerate(reports):
        extra = " kontroll 2014-03-01 id us1234567" if i % 3 == 0 else ""
        salted.append(_report(r.text + extra, r.report_id, r.anatomy))
    for r in salted:
        once = scrub_report(r)
        assert scrub_report(once).text == once.text


# ---------------------------------------------------------------------------
# Preprocessing


def test_preserved_negations_survive(rules, stemmer):
    assert preprocess_text("Ingen fraktur.", rules, stemmer) == ["ingen", "fraktur"]


def test_all_stop_words_removed(rules, stemmer):
    assert preprocess_text("och i på", rules, stemmer) == []


def test_stemming_merges_inflections(rules, stemmer):
    assert preprocess_text("frakturer, frakturen", rules, stemmer) == ["fraktur", "fraktur"]


def test_character_filter_keeps_dash_and_underscore(rules, stemmer):
    # digits and punctuation vanish; dash/underscore survive (stemming then
    # strips the -en inflection from "st-ben")
    tokens = preprocess_text("<DATE_REMOVED> x4 st-ben 25%", rules, stemmer)
    assert tokens == ["date_removed", "x", "st-b"]


def test_corrections_applied_before_stemming(rules, stemmer):
    assert preprocess_text("rtg frakur", rules, stemmer) == ["röntg", "fraktur"]


def test_missing_stemmer_rejected(rules):
    with pytest.raises(ValidationError):
        preprocess_text("fraktur", rules, None)


def test_multi_token_correction_longest_first():
    rules = NormalizationRules(
        corrections={("u", "a"): ("ua",), ("u",): ("uu",)},
        stop_words=set(),
    )
    assert apply_corrections(["u", "a"], rules) == ["ua"]
    assert apply_corrections(["u", "b"], rules) == ["uu", "b"]


def test_non_idempotent_corrections_rejected():
    with pytest.raises(ValidationError):
        NormalizationRules(corrections={("a",): ("b",), ("b",): ("c",)})


def test_stop_list_never_contains_preserved_negations():
    rules = NormalizationRules(stop_words={"ingen", "och"})
    assert "ingen" not in rules.stop_words
    assert "och" in rules.stop_words


word_strategy = st.text(alphabet="abdefgiklmnoprstuvåäö", min_size=1, max_size=12)
text_strategy = st.lists(word_strategy, min_size=0, max_size=25).map(" ".join)


@settings(max_examples=60)
@given(text_strategy)
def test_preprocess_idempotent(rules, stemmer, text):
    once = preprocess_text(text, rules, stemmer)
    again = preprocess_text(" ".join(once), rules, stemmer)
    assert again == once


@settings(max_examples=40)
@given(st.text(max_size=120))
def test_preprocess_output_alphabet(rules, stemmer, text):
    for token in preprocess_text(text, rules, stemmer):
        assert token
        assert all(ch.isalpha() or ch in "-_" for ch in token)


@given(text_strategy)
def test_negation_always_kept(rules, stemmer, text):
    tokens = preprocess_text(text + " ingen", rules, stemmer)
    assert "ingen" in tokens


# ---------------------------------------------------------------------------
# Sentence splitting


def test_split_two_sentences():
    docs = split_sentences(_report("A. B."))
    assert [d.text for d in docs] == ["A.", "B."]
    assert [d.granularity for d in docs] == ["sentence", "sentence"]
    assert all(d.source_report_id == "r1" for d in docs)


def test_split_without_terminator():
    docs = split_sentences(_report("No fracture"))
    assert [d.text for d in docs] == ["No fracture"]


def test_split_handles_abbreviations():
    docs = split_sentences(_report("t.ex. fraktur."))
    assert [d.text for d in docs] == ["t.ex. fraktur."]


SENTENCE_CASES = [
    ("En mening.", ["En mening."]),
    ("En mening", ["En mening"]),
    ("Två. Meningar.", ["Två.", "Meningar."]),
    ("Fråga? Svar!", ["Fråga?", "Svar!"]),
    ("t.ex. fraktur.", ["t.ex. fraktur."]),
    ("bl.a. radius och ulna.", ["bl.a. radius och ulna."]),
    ("Kontroll p.g.a. smärta. Ny bild.", ["Kontroll p.g.a. smärta.", "Ny bild."]),
    ("Värde 2.5 mm.", ["Värde 2.5 mm."]),
    ("ca. 3 veckor sedan.", ["ca. 3 veckor sedan."]),
    ("Utan anmärkning...", ["Utan anmärkning..."]),
    ("Fraktur! Opereras?", ["Fraktur!", "Opereras?"]),
    ("Se us 2014-03-01. Kontroll.", ["Se us 2014-03-01.", "Kontroll."]),
    ("", []),
    ("   ", []),
    # initials are not in the abbreviation list, so they do terminate
    ("A.B. är oklart.", ["A.B.", "är oklart."]),
    ("Slutet. ", ["Slutet."]),
    ("Ingen fraktur. Ingen luxation. Inget hematom.",
     ["Ingen fraktur.", "Ingen luxation.", "Inget hematom."]),
]


@pytest.mark.parametrize("text,expected", SENTENCE_CASES)
def test_sentence_fixture(text, expected):
    assert [d.text for d in split_sentences(_report(text))] == expected


@settings(max_examples=60)
@given(st.lists(word_strategy, min_size=1, max_size=8).map(lambda ws: " ".join(ws)))
def test_sentence_partition_reconstructs_text(body):
    text = body + ". Andra meningen. Tredje"
    docs = split_sentences(_report(text))
    rebuilt = " ".join(d.text for d in docs)
    assert "".join(rebuilt.split()) == "".join(text.split())


def test_sentence_ids_are_ordered():
    docs = split_sentences(_report("A. B. C."))
    assert [d.doc_id for d in docs] == ["r1:s0", "r1:s1", "r1:s2"]


# ---------------------------------------------------------------------------
# Filtering and vocabulary


def test_short_report_excluded(rules, stemmer):
    reports = {"r1": _report("ua"), "r2": _report("Tydlig fraktur i distala radius.", "r2")}
    docs = preprocess_documents(
        [report_document(r) for r in reports.values()], rules, stemmer
    )
    kept, stats = filter_documents(docs, reports)
    assert [d.source_report_id for d in kept] == ["r2"]
    assert stats.short_report_removed == 1


def test_short_document_excluded(rules, stemmer):
    doc = Document("d1", "r9", "sentence", tokens=["fraktur"])
    kept, stats = filter_documents([doc], None, min_tokens=2)
    assert kept == []
    assert stats.short_tokens_removed == 1


def test_filter_identity_when_all_pass():
    docs = [Document(f"d{i}", "r", "sentence", tokens=["a", "b"]) for i in range(5)]
    kept, stats = filter_documents(docs, None)
    assert kept == docs
    assert stats.short_report_removed == 0 and stats.short_tokens_removed == 0


def test_vocabulary_prunes_rare_terms():
    docs = [Document("d", "r", "report", tokens=["a"] * 5 + ["b"])]
    vocab, new_docs = build_vocabulary(docs, min_count=2)
    assert vocab.terms == ["a"]
    assert new_docs[0].tokens == ["a"] * 5


def test_vocabulary_min_count_one_keeps_everything():
    docs = [Document("d", "r", "report", tokens=["b", "a", "b"])]
    vocab, _ = build_vocabulary(docs, min_count=1)
    assert vocab.terms == ["b", "a"]  # count desc, then lexicographic
    assert vocab.counts == [2, 1]


def test_vocabulary_empty_error():
    docs = [Document("d", "r", "report", tokens=["a"])]
    with pytest.raises(DataError):
        build_vocabulary(docs, min_count=10)


def test_vocabulary_matches_brute_force_recount():
    # Zipf-ish synthetic corpus; oracle is a direct Counter over all tokens
    rng = np.random.default_rng(3)
    vocab_pool = [f"w{i}" for i in range(200)]
    weights = 1.0 / np.arange(1, 201)
    weights /= weights.sum()
    docs = []
    for d in range(150):
        tokens = list(rng.choice(vocab_pool, size=30, p=weights))
        docs.append(Document(f"d{d}", f"r{d}", "report", tokens=tokens))
    oracle = Counter(t for d in docs for t in d.tokens)
    expected_terms = {t for t, c in oracle.items() if c >= 5}
    vocab, new_docs = build_vocabulary(docs, min_count=5)
    assert set(vocab.terms) == expected_terms
    assert all(vocab.counts[vocab.term_index[t]] == oracle[t] for t in vocab.terms)
    for doc in new_docs:
        assert all(t in vocab.term_index for t in doc.tokens)


def test_no_out_of_vocabulary_tokens_after_build(rules, stemmer):
    reports = make_reports(60)
    docs = preprocess_documents(
        [d for r in reports for d in split_sentences(scrub_report(r))], rules, stemmer
    )
    docs, _ = filter_documents(docs, {r.report_id: r for r in reports})
    vocab, docs = build_vocabulary(docs, min_count=2)
    for doc in docs:
        assert doc.tokens
        assert all(t in vocab.term_index for t in doc.tokens)


# ---------------------------------------------------------------------------
# File formats


def test_reports_jsonl_round_trip(tmp_path):
    reports = make_reports(10)
    path = tmp_path / "corpus.jsonl"
    corpus.write_reports_jsonl(reports, path, header_lines=["config_hash=abc"])
    assert corpus.read_reports_jsonl(path) == reports


def test_reports_jsonl_duplicate_id(tmp_path):
    path = tmp_path / "corpus.jsonl"
    row = json.dumps({"report_id": "r1", "exam_id": "e", "anatomy": "wrist",
                      "text": "x", "image_ids": []})
    path.write_text(row + "\n" + row + "\n", encoding="utf-8")
    with pytest.raises(DataError, match="duplicate"):
        corpus.read_reports_jsonl(path)


def test_reports_jsonl_bad_anatomy(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(json.dumps({"report_id": "r1", "exam_id": "e", "anatomy": "knee",
                                "text": "x", "image_ids": []}) + "\n", encoding="utf-8")
    with pytest.raises(DataError, match="anatomy"):
        corpus.read_reports_jsonl(path)


def test_documents_jsonl_round_trip(tmp_path):
    docs = [Document("d1", "r1", "sentence", ["fraktur", "radius"], text="Fraktur i radius.")]
    path = tmp_path / "docs.jsonl"
    corpus.write_documents_jsonl(docs, path)
    assert corpus.read_documents_jsonl(path) == docs


def test_vocabulary_tsv_round_trip(tmp_path):
    docs = [Document("d", "r", "report", tokens=["b", "a", "b"])]
    vocab, _ = build_vocabulary(docs, min_count=1)
    path = tmp_path / "vocab.tsv"
    corpus.write_vocabulary_tsv(vocab, path, header_lines=["seed=1"])
    loaded = corpus.read_vocabulary_tsv(path)
    assert loaded.terms == vocab.terms and loaded.counts == vocab.counts


def test_null_stemmer_mode(rules):
    assert preprocess_text("frakturer", rules, NullStemmer()) == ["frakturer"]
