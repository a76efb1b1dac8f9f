"""Report ingestion and text normalization.

Raw reports arrive as JSON lines (report_id, exam_id, anatomy, text,
image_ids). The pipeline scrubs exam references and dates to placeholder
tokens, splits reports into sentences, normalizes text (case folding,
correction list, stemming, stop-word removal with preserved negations,
character filter), and builds a count-pruned vocabulary. All steps are
pure functions over immutable inputs; per-document work is order-free.
"""

from __future__ import annotations

import functools
import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from radlabel.errors import DataError, ValidationError
from radlabel.stemmer import NullStemmer, SuffixStemmer

ANATOMIES = ("wrist", "ankle")
REPORT = "report"
SENTENCE = "sentence"

# Keep letters (incl. non-ASCII), whitespace, dash, underscore; everything
# else (digits, punctuation) becomes a token separator.
_DISALLOWED_RE = re.compile(r"\d|[^\w\s\-]")

_TERMINATORS = ".!?"


@dataclass(frozen=True)
class RawReport:
    report_id: str
    exam_id: str
    anatomy: str
    text: str
    image_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.anatomy not in ANATOMIES:
            raise ValidationError(
                f"report {self.report_id!r}: anatomy {self.anatomy!r} not in {ANATOMIES}"
            )


@dataclass
class Document:
    """A report or single sentence, with provenance to its report.

    ``text`` holds the raw (scrubbed) string until preprocessing fills
    ``tokens``; serialized corpora carry tokens only.
    """

    doc_id: str
    source_report_id: str
    granularity: str
    tokens: list[str]
    text: str | None = None


@dataclass
class Vocabulary:
    terms: list[str]
    counts: list[int]
    term_index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.term_index = {t: i for i, t in enumerate(self.terms)}
        if len(self.term_index) != len(self.terms):
            raise ValidationError("vocabulary terms are not distinct")

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.term_index

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.term_index[t] for t in tokens]


# ---------------------------------------------------------------------------
# Scrubbing


@dataclass(frozen=True)
class PlaceholderRule:
    pattern: re.Pattern
    token: str


def default_placeholder_rules() -> list[PlaceholderRule]:
    """Replace dates and exam-reference IDs with fixed placeholder tokens.

    Placeholders contain no digits, so scrubbing is idempotent; the
    underscore survives the downstream character filter, so placeholders
    remain ordinary corpus tokens.
    """
    return [
        PlaceholderRule(re.compile(r"\b\d{4}-\d{2}-\d{2}\b"), "<DATE_REMOVED>"),
        PlaceholderRule(re.compile(r"\b\d{1,2}/\d{1,2}[-/]\d{2,4}\b"), "<DATE_REMOVED>"),
        PlaceholderRule(re.compile(r"\b[a-zA-Z]{0,4}\d{6,}\b"), "<EXAM_ID_REMOVED>"),
    ]


def scrub_report(report: RawReport, placeholder_rules: Sequence[PlaceholderRule] | None = None) -> RawReport:
    rules = default_placeholder_rules() if placeholder_rules is None else placeholder_rules
    text = report.text
    for rule in rules:
        text = rule.pattern.sub(rule.token, text)
    return replace(report, text=text)


# ---------------------------------------------------------------------------
# Normalization rules


@dataclass
class NormalizationRules:
    """Correction list, stop words, and negations that must never be dropped.

    Correction patterns and replacements are token sequences; matching is
    whole-token and longest-pattern-first. Preserved negations are exempt
    from stop-word removal and from stemming (they pass through verbatim).
    """

    corrections: dict[tuple[str, ...], tuple[str, ...]] = field(default_factory=dict)
    stop_words: set[str] = field(default_factory=set)
    preserved_negations: set[str] = field(default_factory=lambda: {"ingen", "inget"})
    _max_pattern_len: int = field(init=False, repr=False, default=0)

    def __post_init__(self):
        self.stop_words = set(self.stop_words) - set(self.preserved_negations)
        self._max_pattern_len = max((len(p) for p in self.corrections), default=0)
        for pattern, replacement in self.corrections.items():
            if not pattern or not all(pattern):
                raise ValidationError(f"empty correction pattern: {pattern!r}")
            again = apply_corrections(list(replacement), self)
            if tuple(again) != tuple(replacement):
                raise ValidationError(
                    f"correction {' '.join(pattern)!r} -> {' '.join(replacement)!r} is not "
                    f"idempotent (replacement rewrites to {' '.join(again)!r})"
                )

    @classmethod
    def load(
        cls,
        corrections_path: str | Path | None = None,
        stopwords_path: str | Path | None = None,
        preserved_negations: Iterable[str] = ("ingen", "inget"),
    ) -> "NormalizationRules":
        corrections = load_corrections(corrections_path) if corrections_path else {}
        stop_words = load_wordlist(stopwords_path) if stopwords_path else set()
        return cls(corrections=corrections, stop_words=stop_words,
                   preserved_negations=set(preserved_negations))


def load_corrections(path: str | Path) -> dict[tuple[str, ...], tuple[str, ...]]:
    """Two-column TSV: misspelling/synonym pattern -> canonical replacement."""
    corrections: dict[tuple[str, ...], tuple[str, ...]] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 tab-separated columns")
        pattern = tuple(parts[0].lower().split())
        replacement = tuple(parts[1].lower().split())
        if pattern in corrections and corrections[pattern] != replacement:
            raise DataError(f"{path}:{lineno}: conflicting correction for {parts[0]!r}")
        corrections[pattern] = replacement
    return corrections


def load_wordlist(path: str | Path) -> set[str]:
    words = set()
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        word = raw.split("#", 1)[0].strip().lower()
        if word:
            words.add(word)
    return words


def apply_corrections(tokens: Sequence[str], rules: NormalizationRules) -> list[str]:
    """Rewrite token runs through the correction table, longest match first."""
    if not rules.corrections:
        return list(tokens)
    out: list[str] = []
    i = 0
    n = len(tokens)
    max_len = rules._max_pattern_len
    while i < n:
        matched = False
        for length in range(min(max_len, n - i), 0, -1):
            window = tuple(tokens[i : i + length])
            replacement = rules.corrections.get(window)
            if replacement is not None:
                out.extend(replacement)
                i += length
                matched = True
                break
        if not matched:
            out.append(tokens[i])
            i += 1
    return out


# ---------------------------------------------------------------------------
# Preprocessing


def preprocess_text(
    text: str,
    rules: NormalizationRules,
    stemmer: SuffixStemmer | NullStemmer,
) -> list[str]:
    """Normalize one text into its token sequence.

    Case folding first (correction matching requires it), then the
    character filter, correction list, stemming, and stop-word removal.
    Preserved negations pass through untouched. Applying the function to
    its own (re-joined) output is a fixed point.
    """
    if stemmer is None:
        raise ValidationError("no stemmer configured for the selected language mode")
    cleaned = _DISALLOWED_RE.sub(" ", text.lower())
    raw_tokens = []
    for token in cleaned.split():
        # the regex keeps \w; scrub the rare non-letter word chars (e.g. ²)
        if not token.isalpha():
            token = "".join(ch for ch in token if ch.isalpha() or ch in "-_")
            if not token:
                continue
        raw_tokens.append(token)
    tokens = apply_corrections(raw_tokens, rules)
    out = []
    for token in tokens:
        if token in rules.preserved_negations:
            out.append(token)
            continue
        stemmed = stemmer.stem(token)
        if token in rules.stop_words or stemmed in rules.stop_words:
            continue
        out.append(stemmed)
    return out


def _abbreviation_before(text: str, dot_index: int, abbreviations: frozenset[str] | set[str]) -> bool:
    j = dot_index
    while j > 0 and not text[j - 1].isspace():
        j -= 1
    token = text[j:dot_index].lower().rstrip(".")
    return token in abbreviations


def split_sentences(report: RawReport, abbreviations: Iterable[str] | None = None) -> list[Document]:
    """Split a scrubbed report into sentence documents.

    Boundaries are ``. ! ?`` followed by whitespace or end of text, except
    after a known abbreviation. Every character lands in exactly one
    sentence, in order; empty slices are dropped.
    """
    abbrevs = frozenset(a.lower().rstrip(".") for a in (abbreviations or default_abbreviations()))
    text = report.text
    pieces: list[str] = []
    start = 0
    for i, ch in enumerate(text):
        if ch not in _TERMINATORS:
            continue
        at_end = i + 1 == len(text)
        if not at_end and not text[i + 1].isspace():
            continue
        if ch == "." and _abbreviation_before(text, i, abbrevs):
            continue
        piece = text[start : i + 1].strip()
        if piece:
            pieces.append(piece)
        start = i + 1
    tail = text[start:].strip()
    if tail:
        pieces.append(tail)
    return [
        Document(
            doc_id=f"{report.report_id}:s{k}",
            source_report_id=report.report_id,
            granularity=SENTENCE,
            tokens=[],
            text=piece,
        )
        for k, piece in enumerate(pieces)
    ]


def report_document(report: RawReport) -> Document:
    return Document(
        doc_id=report.report_id,
        source_report_id=report.report_id,
        granularity=REPORT,
        tokens=[],
        text=report.text,
    )


def preprocess_documents(
    docs: Iterable[Document],
    rules: NormalizationRules,
    stemmer: SuffixStemmer | NullStemmer,
) -> list[Document]:
    out = []
    for doc in docs:
        if doc.text is None:
            raise ValidationError(f"document {doc.doc_id!r} has no raw text to preprocess")
        out.append(replace_tokens(doc, preprocess_text(doc.text, rules, stemmer)))
    return out


def replace_tokens(doc: Document, tokens: list[str]) -> Document:
    return Document(
        doc_id=doc.doc_id,
        source_report_id=doc.source_report_id,
        granularity=doc.granularity,
        tokens=tokens,
        text=doc.text,
    )


@dataclass
class FilterStats:
    short_report_removed: int = 0
    short_tokens_removed: int = 0


def filter_documents(
    docs: Iterable[Document],
    reports: Mapping[str, RawReport] | None = None,
    min_report_chars: int = 6,
    min_tokens: int = 2,
) -> tuple[list[Document], FilterStats]:
    """Drop documents from too-short reports and token-poor documents.

    Reports whose raw text is under ``min_report_chars`` characters cannot
    carry diagnostic information; documents that end up with fewer than
    ``min_tokens`` tokens are preprocessing debris.
    """
    stats = FilterStats()
    kept = []
    for doc in docs:
        if reports is not None:
            report = reports.get(doc.source_report_id)
            if report is not None and len(report.text.strip()) < min_report_chars:
                stats.short_report_removed += 1
                continue
        if len(doc.tokens) < min_tokens:
            stats.short_tokens_removed += 1
            continue
        kept.append(doc)
    return kept, stats


def build_vocabulary(docs: Iterable[Document], min_count: int = 5) -> tuple[Vocabulary, list[Document]]:
    """Count-prune the vocabulary and re-filter documents against it.

    Terms below ``min_count`` are dropped; documents are rewritten so no
    out-of-vocabulary token survives, and documents left empty disappear.
    Term order is count-descending, ties lexicographic.
    """
    docs = list(docs)
    counts = Counter()
    for doc in docs:
        counts.update(doc.tokens)
    kept_terms = {t: c for t, c in counts.items() if c >= min_count}
    if not kept_terms:
        raise DataError(
            f"vocabulary is empty after pruning at min_count={min_count} "
            f"({len(counts)} candidate terms)"
        )
    ordered = sorted(kept_terms.items(), key=lambda item: (-item[1], item[0]))
    vocab = Vocabulary(terms=[t for t, _ in ordered], counts=[c for _, c in ordered])
    filtered_docs = []
    for doc in docs:
        tokens = [t for t in doc.tokens if t in vocab.term_index]
        if tokens:
            filtered_docs.append(replace_tokens(doc, tokens))
    return vocab, filtered_docs


@functools.lru_cache(maxsize=1)
def default_abbreviations() -> frozenset[str]:
    import importlib.resources

    ref = importlib.resources.files("radlabel.data") / "abbreviations_sv.txt"
    return frozenset(w.rstrip(".") for w in load_wordlist(str(ref)))


@functools.lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    import importlib.resources

    ref = importlib.resources.files("radlabel.data") / "stopwords_sv.txt"
    return frozenset(load_wordlist(str(ref)))


# ---------------------------------------------------------------------------
# File formats


def read_reports_jsonl(path: str | Path) -> list[RawReport]:
    reports = []
    seen = set()
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
        try:
            report = RawReport(
                report_id=str(obj["report_id"]),
                exam_id=str(obj["exam_id"]),
                anatomy=str(obj["anatomy"]),
                text=str(obj["text"]),
                image_ids=tuple(str(i) for i in obj.get("image_ids", [])),
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc}") from exc
        except ValidationError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        if report.report_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate report_id {report.report_id!r}")
        seen.add(report.report_id)
        reports.append(report)
    return reports


def write_reports_jsonl(reports: Iterable[RawReport], path: str | Path,
                        header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for r in reports:
            fh.write(json.dumps({
                "report_id": r.report_id,
                "exam_id": r.exam_id,
                "anatomy": r.anatomy,
                "text": r.text,
                "image_ids": list(r.image_ids),
            }, ensure_ascii=False) + "\n")


def write_documents_jsonl(docs: Iterable[Document], path: str | Path,
                          header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for d in docs:
            record = {
                "doc_id": d.doc_id,
                "source_report_id": d.source_report_id,
                "granularity": d.granularity,
                "tokens": d.tokens,
            }
            if d.text is not None:
                record["text"] = d.text
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_documents_jsonl(path: str | Path) -> list[Document]:
    docs = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
            docs.append(Document(
                doc_id=str(obj["doc_id"]),
                source_report_id=str(obj["source_report_id"]),
                granularity=str(obj["granularity"]),
                tokens=[str(t) for t in obj["tokens"]],
                text=obj.get("text"),
            ))
        except (json.JSONDecodeError, KeyError) as exc:
            raise DataError(f"{path}:{lineno}: bad document record ({exc})") from exc
    return docs


def write_vocabulary_tsv(vocab: Vocabulary, path: str | Path,
                         header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for term, count in zip(vocab.terms, vocab.counts):
            fh.write(f"{term}\t{count}\n")


def read_vocabulary_tsv(path: str | Path) -> Vocabulary:
    terms, counts = [], []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected term<TAB>count")
        terms.append(parts[0])
        counts.append(int(parts[1]))
    return Vocabulary(terms=terms, counts=counts)
