"""Topic presentation for blinded human review, score ingestion, and
per-model summaries.

A fitted model is rendered one topic per sheet row in one of three views
(top words, top documents, or both), in a seeded random order. The
reviewer file carries no topic ids or model parameters; the permutation
lives in a separate blinding-map file. Imported scores join back through
the map and roll up into median/mean/sd/sem plus the count of unique
topic descriptions, which drive the model ranking.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from radlabel.errors import DataError, ValidationError
from radlabel.fileio import read_tsv, write_tsv
from radlabel.lda import TopicDistributions

VIEW_MODES = ("words", "docs", "both")

# Scaling-factor names and the alpha multipliers they conventionally mean.
SCALING_VALUES = {"Tiny": 0.01, "Small": 0.1, "Normal": 1.0, "Large": 10.0}


@dataclass(frozen=True)
class TopicView:
    topic_id: int
    top_words: tuple[tuple[str, float], ...]  # (term, probability), descending
    top_docs: tuple[str, ...]  # doc ids by descending topic weight


@dataclass(frozen=True)
class TopicScore:
    sheet_position: int
    description: str
    score: int


@dataclass
class ReviewSheet:
    model_id: str
    view_mode: str
    entries: list[tuple[int, str]]  # (sheet_position, content)
    blinding_map: dict[int, int]  # sheet_position -> topic_id
    seed: int


@dataclass
class ModelSummary:
    model_id: str
    scaling_label: str
    document_type: str
    view_mode: str
    median: float
    mean: float
    sd: float
    sem: float
    unique_topic_labels: int

    @property
    def scaling_group(self) -> str:
        """Name part of the scaling label ('Small (0.1)' -> 'Small')."""
        return self.scaling_label.split()[0]


def build_topic_view(
    dists: TopicDistributions,
    terms: Sequence[str],
    doc_ids: Sequence[str],
    topic_id: int,
    min_word_prob: float = 0.03,
    max_docs: int = 15,
) -> TopicView:
    """Render one topic: words at or above the probability floor, and the
    documents that weight the topic most."""
    num_topics = dists.topic_word.shape[0]
    if not 0 <= topic_id < num_topics:
        raise IndexError(f"topic_id {topic_id} out of range [0, {num_topics})")
    word_probs = dists.topic_word[topic_id]
    top_words = sorted(
        ((terms[w], float(word_probs[w])) for w in range(len(terms))
         if word_probs[w] >= min_word_prob),
        key=lambda item: (-item[1], item[0]),
    )
    weights = dists.doc_topic[:, topic_id]
    ranked_docs = sorted(zip(doc_ids, weights), key=lambda item: (-item[1], item[0]))
    return TopicView(
        topic_id=topic_id,
        top_words=tuple(top_words),
        top_docs=tuple(doc_id for doc_id, _ in ranked_docs[:max_docs]),
    )


def _flatten(text: str) -> str:
    # free text must stay on one TSV row
    return re.sub(r"[\t\r\n]+", " ", text)


def _render_entry(view: TopicView, doc_texts: Mapping[str, str], view_mode: str) -> str:
    words = ", ".join(f"{term} ({prob * 100:.1f}%)" for term, prob in view.top_words)
    docs = " | ".join(_flatten(doc_texts[d]) for d in view.top_docs)
    if view_mode == "words":
        return words
    if view_mode == "docs":
        return docs
    return f"{words} || {docs}"


def export_review_sheet(
    views: Sequence[TopicView],
    doc_texts: Mapping[str, str],
    model_id: str,
    view_mode: str,
    seed: int,
) -> ReviewSheet:
    """Lay out all topics in seeded random order, one entry per topic.

    The content of each entry is limited to the selected view; topic ids
    exist only in the blinding map.
    """
    if view_mode not in VIEW_MODES:
        raise ValidationError(f"view_mode must be one of {VIEW_MODES}, got {view_mode!r}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(views))
    entries = []
    blinding_map = {}
    for position, view_index in enumerate(order, start=1):
        view = views[view_index]
        entries.append((position, _render_entry(view, doc_texts, view_mode)))
        blinding_map[position] = view.topic_id
    return ReviewSheet(
        model_id=model_id, view_mode=view_mode, entries=entries,
        blinding_map=blinding_map, seed=seed,
    )


REVIEWER_COLUMNS = ["sheet_position", "content", "description", "score"]


def write_review_sheet(
    sheet: ReviewSheet,
    reviewer_path: str | Path,
    map_path: str | Path,
    header_lines: Sequence[str] = (),
) -> None:
    write_tsv(
        reviewer_path,
        REVIEWER_COLUMNS,
        ([pos, _flatten(content), "", ""] for pos, content in sheet.entries),
        header_lines,
    )
    write_tsv(
        map_path,
        ["sheet_position", "topic_id"],
        ([pos, tid] for pos, tid in sorted(sheet.blinding_map.items())),
        list(header_lines) + [f"model_id={sheet.model_id}", f"view_mode={sheet.view_mode}"],
    )


def import_scores(
    reviewer_path: str | Path, map_path: str | Path
) -> list[tuple[int, TopicScore]]:
    """Join reviewer scores back to topic ids through the blinding map."""
    map_rows = read_tsv(map_path, ["sheet_position", "topic_id"])
    blinding = {}
    for row in map_rows:
        position = int(row["sheet_position"])
        if position in blinding:
            raise DataError(f"{map_path}: duplicate sheet position {position}")
        blinding[position] = int(row["topic_id"])
    rows = read_tsv(reviewer_path, REVIEWER_COLUMNS)
    seen = set()
    joined = []
    for row in rows:
        position = int(row["sheet_position"])
        if position in seen:
            raise DataError(f"{reviewer_path}: duplicate sheet position {position}")
        seen.add(position)
        if position not in blinding:
            raise DataError(f"{reviewer_path}: position {position} not in blinding map")
        try:
            score = int(row["score"])
        except ValueError as exc:
            raise DataError(
                f"{reviewer_path}: position {position}: score {row['score']!r} is not an integer"
            ) from exc
        if not 0 <= score <= 10:
            raise DataError(
                f"{reviewer_path}: position {position}: score {score} outside 0..10"
            )
        joined.append(
            (blinding[position], TopicScore(position, row["description"].strip(), score))
        )
    missing = set(blinding) - seen
    if missing:
        raise DataError(f"{reviewer_path}: positions missing scores: {sorted(missing)}")
    return joined


def normalize_description(description: str) -> str:
    return re.sub(r"\s+", " ", description.strip().lower())


def summarize_model(
    scores: Sequence[TopicScore],
    *,
    model_id: str,
    scaling_label: str,
    document_type: str,
    view_mode: str,
) -> ModelSummary:
    """Score statistics plus the number of distinct topic descriptions.

    Uninterpretable topics (score 0) contribute to the score statistics
    but have no description to count as unique.
    """
    if not scores:
        raise ValidationError("cannot summarize a model with no topic scores")
    values = np.array([s.score for s in scores], dtype=float)
    n = len(values)
    sd = float(np.std(values, ddof=1)) if n > 1 else 0.0
    unique = {
        normalize_description(s.description)
        for s in scores
        if s.score >= 1 and normalize_description(s.description)
    }
    return ModelSummary(
        model_id=model_id,
        scaling_label=scaling_label,
        document_type=document_type,
        view_mode=view_mode,
        median=float(np.median(values)),
        mean=float(np.mean(values)),
        sd=sd,
        sem=sd / np.sqrt(n),
        unique_topic_labels=len(unique),
    )


def rank_models(summaries: Sequence[ModelSummary]) -> list[ModelSummary]:
    """Descending by mean score, then unique descriptions, then median;
    full ties keep input order."""
    return sorted(
        summaries,
        key=lambda s: (-s.mean, -s.unique_topic_labels, -s.median),
    )


SUMMARY_COLUMNS = [
    "model_id", "scaling_factor", "document_type", "view",
    "median", "mean", "sd", "sem", "unique_topic_labels",
]

_LABEL_VALUE_RE = re.compile(r"^(?P<name>\S+)\s*\((?P<value>[0-9.]+)\)$")


def write_summaries_tsv(
    summaries: Sequence[ModelSummary], path: str | Path, header_lines: Sequence[str] = ()
) -> None:
    write_tsv(
        path,
        SUMMARY_COLUMNS,
        (
            [
                s.model_id, s.scaling_label, s.document_type, s.view_mode,
                f"{s.median:.1f}", f"{s.mean:.1f}", f"{s.sd:.1f}", f"{s.sem:.1f}",
                s.unique_topic_labels,
            ]
            for s in summaries
        ),
        header_lines,
    )


def read_summaries_tsv(path: str | Path) -> list[ModelSummary]:
    """Read model summaries, flagging scaling labels whose printed value
    disagrees with their name (kept verbatim; grouping uses the name)."""
    summaries = []
    for row in read_tsv(path, SUMMARY_COLUMNS):
        label = row["scaling_factor"]
        match = _LABEL_VALUE_RE.match(label)
        if match:
            name, value = match.group("name"), float(match.group("value"))
            expected = SCALING_VALUES.get(name)
            if expected is not None and not np.isclose(value, expected):
                warnings.warn(
                    f"{path}: scaling label {label!r} carries value {value} but the name "
                    f"{name!r} conventionally means {expected}; grouping by name",
                    stacklevel=2,
                )
        summaries.append(
            ModelSummary(
                model_id=row["model_id"],
                scaling_label=label,
                document_type=row["document_type"],
                view_mode=row["view"],
                median=float(row["median"]),
                mean=float(row["mean"]),
                sd=float(row["sd"]),
                sem=float(row["sem"]),
                unique_topic_labels=int(row["unique_topic_labels"]),
            )
        )
    return summaries


def load_review_benchmark() -> list[ModelSummary]:
    """Bundled reference summaries: 24 wrist-report topic models scored in
    a blinded review (4 scaling factors x 2 corpus granularities x 3
    views). Two rows carry a known name/value mismatch in their scaling
    label, which the reader flags."""
    import importlib.resources

    ref = importlib.resources.files("radlabel.data") / "review_benchmark.tsv"
    with importlib.resources.as_file(ref) as path:
        return read_summaries_tsv(path)
