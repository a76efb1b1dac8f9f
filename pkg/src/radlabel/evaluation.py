"""Classifier evaluation against weak labels and a human gold standard.

Base accuracy is plain agreement with the weak labels, (TP+TN)/total,
with MISSING pairs excluded; its complement splits the test set into hits
and misses. A stratified review (equal numbers of hits and misses, judged
against a manually created gold standard) yields per-stratum accuracies,
and the true-accuracy estimate reweights them by the observed stratum
proportions:

    accuracy_true = accuracy_hit * proportion_hit
                    + accuracy_miss * proportion_miss

Uncertainty comes from a nonparametric bootstrap: each stratum's binary
correctness vector is resampled with replacement, the weighted accuracy
recomputed per replicate, and the 2.5/50/97.5 percentiles reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from radlabel.errors import DataError, ValidationError
from radlabel.fileio import read_tsv, write_tsv
from radlabel.labels import LabelOutcome


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts oriented weak-label rows vs. prediction columns: tp = both
    TRUE, tn = both FALSE, fp = predicted TRUE on weak FALSE, fn =
    predicted FALSE on weak TRUE."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValidationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ReviewSample:
    label: str
    hits: tuple[str, ...]
    misses: tuple[str, ...]
    seed: int

    def __post_init__(self):
        if set(self.hits) & set(self.misses):
            raise ValidationError("hit and miss strata overlap")


@dataclass(frozen=True)
class GoldAnnotation:
    image_id: str
    label: str
    present: bool
    reviewer: str = ""


@dataclass(frozen=True)
class TrueAccuracyEstimate:
    accuracy_hit: float
    accuracy_miss: float
    proportion_hit: float
    proportion_miss: float
    point: float  # bootstrap median
    ci_low: float
    ci_high: float
    resamples: int


def confusion(
    predictions: Mapping[str, bool],
    weak_labels: Mapping[str, Mapping[str, LabelOutcome]],
    label: str,
) -> ConfusionMatrix:
    """Tally predictions for one label against its weak outcomes.

    Units whose weak outcome is MISSING (or absent) are discarded from the
    analysis entirely.
    """
    tp = fp = fn = tn = 0
    for unit_id, predicted in predictions.items():
        unit = weak_labels.get(unit_id)
        if unit is None:
            continue
        outcome = unit.get(label, LabelOutcome.MISSING)
        if outcome == LabelOutcome.MISSING:
            continue
        weak_true = outcome == LabelOutcome.TRUE
        if predicted and weak_true:
            tp += 1
        elif predicted and not weak_true:
            fp += 1
        elif not predicted and weak_true:
            fn += 1
        else:
            tn += 1
    cm = ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)
    if cm.total == 0:
        raise DataError(
            f"label {label!r}: no prediction pairs left after discarding MISSING outcomes"
        )
    return cm


def base_accuracy(cm: ConfusionMatrix) -> float:
    """Agreement with the weak labels: (tp + tn) / total."""
    if cm.total == 0:
        raise ValidationError("confusion matrix is empty")
    return (cm.tp + cm.tn) / cm.total


def weighted_accuracy(accuracy_hit: float, accuracy_miss: float, proportion_hit: float) -> float:
    """Stratum-weighted gold-standard accuracy (closed form)."""
    return accuracy_hit * proportion_hit + accuracy_miss * (1.0 - proportion_hit)


def draw_review_sample(
    predictions: Mapping[str, bool],
    weak_labels: Mapping[str, Mapping[str, LabelOutcome]],
    label: str,
    n_per_stratum: int = 150,
    seed: int = 0,
) -> ReviewSample:
    """Uniform without-replacement draw of equally many hits and misses.

    A hit agrees with the weak label, a miss disagrees; MISSING units
    belong to neither stratum. Deterministic per seed.
    """
    hits, misses = [], []
    for unit_id in sorted(predictions):
        unit = weak_labels.get(unit_id)
        if unit is None:
            continue
        outcome = unit.get(label, LabelOutcome.MISSING)
        if outcome == LabelOutcome.MISSING:
            continue
        agrees = predictions[unit_id] == (outcome == LabelOutcome.TRUE)
        (hits if agrees else misses).append(unit_id)
    for stratum_name, stratum in (("hit", hits), ("miss", misses)):
        if len(stratum) < n_per_stratum:
            raise DataError(
                f"label {label!r}: {stratum_name} stratum has {len(stratum)} unit(s), "
                f"need {n_per_stratum}"
            )
    rng = np.random.default_rng(seed)
    drawn_hits = rng.choice(len(hits), size=n_per_stratum, replace=False)
    drawn_misses = rng.choice(len(misses), size=n_per_stratum, replace=False)
    return ReviewSample(
        label=label,
        hits=tuple(hits[i] for i in sorted(drawn_hits)),
        misses=tuple(misses[i] for i in sorted(drawn_misses)),
        seed=seed,
    )


def gold_accuracies(
    sample: ReviewSample,
    gold: Mapping[tuple[str, str], bool],
    predictions: Mapping[str, bool],
    label: str,
) -> tuple[float, float]:
    """Fraction of each stratum where the prediction matches the gold
    standard. Every sampled image must have a gold annotation."""
    uncovered = [
        i for i in (*sample.hits, *sample.misses) if (i, label) not in gold
    ]
    if uncovered:
        preview = ", ".join(uncovered[:5])
        raise DataError(
            f"label {label!r}: {len(uncovered)} sampled image(s) lack gold "
            f"annotations (first: {preview})"
        )

    def stratum_accuracy(ids: Sequence[str]) -> float:
        correct = sum(1 for i in ids if predictions[i] == gold[(i, label)])
        return correct / len(ids)

    return stratum_accuracy(sample.hits), stratum_accuracy(sample.misses)


def true_accuracy(
    accuracy_hit: float,
    accuracy_miss: float,
    cm: ConfusionMatrix,
    n_hit: int = 150,
    n_miss: int = 150,
    resamples: int = 10_000,
    seed: int = 0,
) -> TrueAccuracyEstimate:
    """Percentile-bootstrap estimate of the stratum-weighted accuracy.

    The hit and miss strata are binary correctness vectors (reconstructed
    from their accuracies and sizes, which determine them exactly); each
    replicate resamples both vectors independently with replacement and
    recomputes the weighted accuracy at the fixed stratum proportions
    ``proportion_hit = base_accuracy(cm)``.
    """
    if not (0.0 <= accuracy_hit <= 1.0 and 0.0 <= accuracy_miss <= 1.0):
        raise ValidationError("stratum accuracies must lie in [0, 1]")
    if min(n_hit, n_miss) < 1:
        raise ValidationError("stratum sizes must be positive")
    if resamples < 1:
        raise ValidationError("resamples must be positive")
    proportion_hit = base_accuracy(cm)
    rng = np.random.default_rng(seed)

    def stratum_vector(accuracy: float, n: int) -> np.ndarray:
        ones = int(round(accuracy * n))
        return np.concatenate([np.ones(ones), np.zeros(n - ones)])

    hit_vec = stratum_vector(accuracy_hit, n_hit)
    miss_vec = stratum_vector(accuracy_miss, n_miss)
    hit_means = hit_vec[rng.integers(0, n_hit, size=(resamples, n_hit))].mean(axis=1)
    miss_means = miss_vec[rng.integers(0, n_miss, size=(resamples, n_miss))].mean(axis=1)
    replicates = weighted_accuracy(hit_means, miss_means, proportion_hit)
    ci_low, point, ci_high = np.percentile(replicates, [2.5, 50.0, 97.5])
    return TrueAccuracyEstimate(
        accuracy_hit=accuracy_hit,
        accuracy_miss=accuracy_miss,
        proportion_hit=proportion_hit,
        proportion_miss=1.0 - proportion_hit,
        point=float(point),
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        resamples=resamples,
    )


# ---------------------------------------------------------------------------
# File formats


def write_review_sample_sheet(
    sample: ReviewSample, path: str | Path, header_lines: Sequence[str] = ()
) -> None:
    """Blinded reviewer sheet: sampled image ids in seeded shuffled order,
    with an empty ``present`` column; the stratum is not revealed."""
    ids = list(sample.hits) + list(sample.misses)
    rng = np.random.default_rng(sample.seed)
    order = rng.permutation(len(ids))
    write_tsv(
        path,
        ["image_id", "label", "present"],
        ([ids[i], sample.label, ""] for i in order),
        header_lines,
    )


def write_review_sample_strata(
    sample: ReviewSample, path: str | Path, header_lines: Sequence[str] = ()
) -> None:
    """Held-back stratum map used to compute stratum accuracies later."""
    rows = [[i, sample.label, "hit"] for i in sample.hits]
    rows += [[i, sample.label, "miss"] for i in sample.misses]
    write_tsv(path, ["image_id", "label", "stratum"], rows,
              list(header_lines) + [f"seed={sample.seed}"])


def read_review_sample_strata(path: str | Path) -> ReviewSample:
    rows = read_tsv(path, ["image_id", "label", "stratum"])
    labels = {r["label"] for r in rows}
    if len(labels) != 1:
        raise DataError(f"{path}: expected one label per stratum file, found {sorted(labels)}")
    hits = tuple(r["image_id"] for r in rows if r["stratum"] == "hit")
    misses = tuple(r["image_id"] for r in rows if r["stratum"] == "miss")
    if len(hits) + len(misses) != len(rows):
        raise DataError(f"{path}: stratum column must be 'hit' or 'miss'")
    return ReviewSample(label=labels.pop(), hits=hits, misses=misses, seed=0)


def read_gold_tsv(path: str | Path) -> dict[tuple[str, str], bool]:
    """Gold standard: image_id, label, present {T,F}, reviewer."""
    gold: dict[tuple[str, str], bool] = {}
    for row in read_tsv(path, ["image_id", "label", "present", "reviewer"]):
        key = (row["image_id"], row["label"])
        present = row["present"].strip().upper()
        if present not in ("T", "F"):
            raise DataError(f"{path}: bad present value {row['present']!r} for {key}")
        value = present == "T"
        if key in gold and gold[key] != value:
            raise DataError(f"{path}: conflicting gold annotations for {key}")
        gold[key] = value
    return gold


def write_gold_tsv(
    annotations: Sequence[GoldAnnotation], path: str | Path, header_lines: Sequence[str] = ()
) -> None:
    write_tsv(
        path,
        ["image_id", "label", "present", "reviewer"],
        ([a.image_id, a.label, "T" if a.present else "F", a.reviewer] for a in annotations),
        header_lines,
    )
