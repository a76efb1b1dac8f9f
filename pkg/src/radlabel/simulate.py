"""Synthetic report corpora for desk-scale pipeline runs.

Generates exam records whose report text mentions, denies, or omits a
small set of clinical concepts per anatomy, plus image feature vectors
whose signal follows the concept ground truth. The text side feeds the
corpus/LDA/labeling stages; the feature side feeds the reference
classifier; the gold truths feed the review machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from radlabel.classify import FeatureTable
from radlabel.corpus import RawReport
from radlabel.errors import ValidationError
from radlabel.labels import LabelDef
from radlabel.lda import TopicDistributions


@dataclass(frozen=True)
class Concept:
    """A reportable image feature with assertion/denial phrasing."""

    name: str
    anatomies: tuple[str, ...]
    positive_sentences: tuple[str, ...]
    negative_sentences: tuple[str, ...]
    positive_markers: frozenset[str]  # post-stemming terms marking assertion topics
    negative_markers: frozenset[str]  # post-stemming terms marking denial topics
    prevalence: float = 0.5
    mention_rate: float = 0.8  # chance the report mentions the concept at all


def default_concepts() -> list[Concept]:
    return [
        Concept(
            name="fracture",
            anatomies=("wrist", "ankle"),
            positive_sentences=(
                "Tydlig fraktur med dislokation av fragmenten.",
                "Fraktur med felställning och kompression.",
                "Komminut fraktur med tydlig felställning.",
            ),
            negative_sentences=(
                "Ingen fraktur kan påvisas.",
                "Ingen fraktur eller luxation påvisas.",
            ),
            positive_markers=frozenset({"fraktur"}),
            negative_markers=frozenset({"ingen"}),
            prevalence=0.55,
        ),
        Concept(
            name="implant",
            anatomies=("wrist", "ankle"),
            positive_sentences=(
                "Osteosyntesmaterial med stift och platta ses.",
                "Platta och skruvar i oförändrat läge.",
            ),
            negative_sentences=(
                "Inget osteosyntesmaterial ses.",
            ),
            positive_markers=frozenset({"platt", "osteosyntesmaterial"}),
            negative_markers=frozenset({"inget"}),
            prevalence=0.35,
        ),
        Concept(
            name="arthrosis",
            anatomies=("wrist",),
            positive_sentences=(
                "Uttalad artros med sänkt ledspringa.",
                "Artros med osteofyter i leden.",
            ),
            negative_sentences=(
                "Ingen artros i leden.",
            ),
            positive_markers=frozenset({"artro"}),
            negative_markers=frozenset({"ingen"}),
            prevalence=0.4,
        ),
        Concept(
            name="swelling",
            anatomies=("ankle",),
            positive_sentences=(
                "Uttalad mjukdelssvullnad kring leden.",
                "Mjukdelssvullnad lateralt om leden.",
            ),
            negative_sentences=(
                "Ingen mjukdelssvullnad ses.",
            ),
            positive_markers=frozenset({"mjukdelssvulln"}),
            negative_markers=frozenset({"ingen"}),
            prevalence=0.45,
        ),
    ]


_FILLER_SENTENCES = (
    "Undersökning utförd enligt remiss.",
    "Jämförelse med tidigare undersökning se us 2014-03-01.",
    "Smärta efter fall i trappa enligt remissen.",
    "Kontroll efter gipsbehandling.",
)


def synthetic_reports(
    num_exams: int,
    seed: int,
    concepts: Sequence[Concept] | None = None,
    anatomies: tuple[str, ...] = ("wrist", "ankle"),
    images_per_exam: tuple[int, int] = (2, 4),
    filler_rate: float = 0.5,
) -> tuple[list[RawReport], dict[str, dict[str, bool]]]:
    """Generate reports and the per-report concept ground truth.

    Each report covers one anatomy; a mentioned concept contributes an
    assertion or denial sentence per its truth value. Returns (reports,
    truth) where truth maps report_id -> {concept name -> present}; an
    unmentioned concept still has a truth value (information the report
    simply omits).
    """
    if num_exams < 1:
        raise ValidationError("num_exams must be positive")
    concepts = list(default_concepts() if concepts is None else concepts)
    rng = np.random.default_rng(seed)
    reports = []
    truth: dict[str, dict[str, bool]] = {}
    for e in range(num_exams):
        anatomy = anatomies[int(rng.integers(0, len(anatomies)))]
        report_id = f"r{e:05d}"
        sentences = []
        report_truth = {}
        if rng.random() < filler_rate:
            sentences.append(_FILLER_SENTENCES[int(rng.integers(0, len(_FILLER_SENTENCES)))])
        for concept in concepts:
            if anatomy not in concept.anatomies:
                continue
            present = bool(rng.random() < concept.prevalence)
            report_truth[concept.name] = present
            if rng.random() >= concept.mention_rate:
                continue
            pool = concept.positive_sentences if present else concept.negative_sentences
            sentences.append(pool[int(rng.integers(0, len(pool)))])
        if not sentences:
            sentences.append("Väsentligen oförändrad bild.")
        num_images = int(rng.integers(images_per_exam[0], images_per_exam[1] + 1))
        image_ids = tuple(f"{report_id}/img{i}" for i in range(num_images))
        reports.append(RawReport(
            report_id=report_id,
            exam_id=f"e{e:05d}",
            anatomy=anatomy,
            text=" ".join(sentences),
            image_ids=image_ids,
        ))
        truth[report_id] = report_truth
    return reports, truth


def image_gold_and_features(
    reports: Sequence[RawReport],
    truth: Mapping[str, Mapping[str, bool]],
    signal: float,
    seed: int,
    feature_dim: int = 12,
) -> tuple[FeatureTable, dict[tuple[str, str], bool]]:
    """Per-image gold truths and feature vectors with planted signal.

    Every image inherits its report's concept truths; concepts outside the
    report's anatomy get no gold entry.
    """
    rng = np.random.default_rng(seed)
    concept_names = sorted({name for t in truth.values() for name in t})
    directions = rng.normal(size=(len(concept_names), feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    image_ids = []
    gold: dict[tuple[str, str], bool] = {}
    rows = []
    for report in reports:
        report_truth = truth[report.report_id]
        indicator = np.array(
            [float(report_truth.get(name, False)) for name in concept_names]
        )
        for image_id in report.image_ids:
            image_ids.append(image_id)
            rows.append(rng.normal(size=feature_dim) + signal * indicator @ directions)
            for name, present in report_truth.items():
                gold[(image_id, name)] = bool(present)
    return FeatureTable(image_ids=image_ids, values=np.array(rows)), gold


def suggest_label_defs(
    dists: TopicDistributions,
    terms: Sequence[str],
    anatomy: str,
    concepts: Sequence[Concept] | None = None,
    min_word_prob: float = 0.03,
) -> list[LabelDef]:
    """Author label definitions from a fitted model by marker matching.

    Stands in for the human step of reading topics and mapping them to
    labels: a topic whose prominent words contain a concept's positive
    markers counts as asserting it, unless a negative marker is also
    prominent, in which case it denies it.
    """
    concepts = list(default_concepts() if concepts is None else concepts)
    prominent = []
    for t in range(dists.topic_word.shape[0]):
        row = dists.topic_word[t]
        prominent.append({terms[w] for w in np.nonzero(row >= min_word_prob)[0]})
    defs = []
    for concept in concepts:
        if anatomy not in concept.anatomies:
            continue
        positive, negative = set(), set()
        for t, words in enumerate(prominent):
            has_pos = any(marker in words for marker in concept.positive_markers)
            has_neg = any(marker in words for marker in concept.negative_markers)
            if has_pos and has_neg:
                negative.add(t)
            elif has_pos:
                positive.add(t)
        if positive or negative:
            defs.append(LabelDef(
                name=concept.name,
                anatomy=anatomy,
                positive_topics=frozenset(positive),
                negative_topics=frozenset(negative),
            ))
    return defs
