"""Tri-state image labels derived from document-topic distributions.

A document asserts every topic whose probability beats 1/20 (strictly),
i.e. five times pure chance in a 100-topic model. Label definitions map
positive and negative topic sets (per anatomy) to one named label with
outcomes TRUE (feature asserted), FALSE (explicitly denied), or MISSING
(not mentioned; excluded downstream). Sentence outcomes combine up to
reports and onward to images through the precedence lattice
MISSING < FALSE < TRUE, whose join is ``aggregate``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from radlabel.corpus import ANATOMIES
from radlabel.errors import DataError, ValidationError
from radlabel.fileio import read_tsv, write_tsv

TOPIC_PROBABILITY_THRESHOLD = 1.0 / 20.0


class LabelOutcome(IntEnum):
    """Ordered for aggregation: TRUE beats FALSE beats MISSING."""

    MISSING = 0
    FALSE = 1
    TRUE = 2

    @property
    def letter(self) -> str:
        return {self.MISSING: "M", self.FALSE: "F", self.TRUE: "T"}[self]

    @classmethod
    def from_letter(cls, letter: str) -> "LabelOutcome":
        try:
            return {"M": cls.MISSING, "F": cls.FALSE, "T": cls.TRUE}[letter.upper()]
        except KeyError as exc:
            raise DataError(f"bad outcome letter {letter!r}, expected T/F/M") from exc


@dataclass(frozen=True)
class LabelDef:
    """One label within one anatomy's topic space."""

    name: str
    anatomy: str
    positive_topics: frozenset[int]
    negative_topics: frozenset[int]

    def __post_init__(self):
        if self.anatomy not in ANATOMIES:
            raise ValidationError(f"label {self.name!r}: unknown anatomy {self.anatomy!r}")
        if self.positive_topics & self.negative_topics:
            raise ValidationError(
                f"label {self.name!r}/{self.anatomy}: positive and negative topic sets overlap"
            )
        if not self.positive_topics and not self.negative_topics:
            raise ValidationError(f"label {self.name!r}/{self.anatomy}: no topics at all")


@dataclass
class LabeledUnit:
    unit_id: str
    outcomes: dict[str, LabelOutcome]


@dataclass
class SplitAssignment:
    assignments: dict[str, str]  # unit id -> split name
    fractions: tuple[float, ...]
    seed: int

    def ids_in(self, split: str) -> list[str]:
        return [u for u, s in self.assignments.items() if s == split]


SPLIT_NAMES = ("train", "validation", "test")


def assign_document_topics(
    theta_row: np.ndarray, threshold: float = TOPIC_PROBABILITY_THRESHOLD
) -> set[int]:
    """Topics strictly above the probability threshold; possibly empty."""
    row = np.asarray(theta_row, dtype=float)
    return {int(t) for t in np.nonzero(row > threshold)[0]}


def map_topics_to_labels(
    topic_set: set[int],
    defs: Sequence[LabelDef],
    conflict_tally: Counter | None = None,
) -> dict[str, LabelOutcome]:
    """Tri-state outcome per label definition.

    A positive topic makes the label TRUE; otherwise a negative topic makes
    it FALSE; otherwise MISSING. A document hitting both sides resolves
    TRUE and is tallied for diagnostics.
    """
    outcomes = {}
    for d in defs:
        has_pos = bool(topic_set & d.positive_topics)
        has_neg = bool(topic_set & d.negative_topics)
        if has_pos and has_neg and conflict_tally is not None:
            conflict_tally[d.name] += 1
        if has_pos:
            outcomes[d.name] = LabelOutcome.TRUE
        elif has_neg:
            outcomes[d.name] = LabelOutcome.FALSE
        else:
            outcomes[d.name] = LabelOutcome.MISSING
    return outcomes


def aggregate(outcomes: Iterable[LabelOutcome]) -> LabelOutcome:
    """Join of the MISSING < FALSE < TRUE lattice (TRUE takes precedence,
    FALSE beats MISSING); empty input is MISSING."""
    return max(outcomes, default=LabelOutcome.MISSING)


def aggregate_units(
    units: Sequence[LabeledUnit], unit_id: str, label_names: Sequence[str]
) -> LabeledUnit:
    """Combine several units (e.g. a report's sentences) into one."""
    return LabeledUnit(
        unit_id=unit_id,
        outcomes={
            name: aggregate(u.outcomes.get(name, LabelOutcome.MISSING) for u in units)
            for name in label_names
        },
    )


def propagate_to_images(
    report_labels: Mapping[str, dict[str, LabelOutcome]],
    report_to_images: Mapping[str, Sequence[str]],
    all_image_ids: Iterable[str] | None = None,
) -> dict[str, dict[str, LabelOutcome]]:
    """Every image inherits its report's label map verbatim.

    The inherited mapping is shared, not copied; treat outcomes as frozen
    after propagation. With ``all_image_ids`` given, images that no labeled
    report accounts for raise an orphan error.
    """
    image_labels: dict[str, dict[str, LabelOutcome]] = {}
    for report_id, outcomes in report_labels.items():
        if report_id not in report_to_images:
            raise DataError(f"report {report_id!r} has no image association entry")
        for image_id in report_to_images[report_id]:
            if image_id in image_labels:
                raise DataError(f"image {image_id!r} is associated with multiple reports")
            image_labels[image_id] = outcomes
    if all_image_ids is not None:
        orphans = sorted(set(all_image_ids) - set(image_labels))
        if orphans:
            preview = ", ".join(orphans[:5])
            raise DataError(
                f"{len(orphans)} image(s) have no labeled report (first: {preview})"
            )
    return image_labels


def compute_mode(label: str, units: Iterable[LabeledUnit]) -> tuple[LabelOutcome, float]:
    """Most common non-MISSING outcome and its frequency among non-MISSING
    units; a tie is called FALSE (feature absent)."""
    n_true = 0
    n_false = 0
    for unit in units:
        outcome = unit.outcomes.get(label, LabelOutcome.MISSING)
        if outcome == LabelOutcome.TRUE:
            n_true += 1
        elif outcome == LabelOutcome.FALSE:
            n_false += 1
    total = n_true + n_false
    if total == 0:
        raise DataError(f"label {label!r}: every unit is MISSING; no mode exists")
    if n_true > n_false:
        return LabelOutcome.TRUE, n_true / total
    return LabelOutcome.FALSE, n_false / total


def split_dataset(
    image_ids: Iterable[str],
    fractions: tuple[float, float, float] = (0.7, 0.2, 0.1),
    seed: int = 0,
    exam_of: Mapping[str, str] | None = None,
) -> SplitAssignment:
    """Seeded shuffle then contiguous slicing into train/validation/test.

    Counts follow largest-remainder rounding, so each realized group is
    within one unit of its target. With ``exam_of`` given, whole
    examinations are assigned together (no exam spans two splits), trading
    exactness of the fractions for leak-freedom.
    """
    if len(fractions) != len(SPLIT_NAMES):
        raise ValidationError(f"expected {len(SPLIT_NAMES)} fractions")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must be non-negative and sum to 1, got {fractions}")
    ids = sorted(set(image_ids))
    if not ids:
        raise ValidationError("no image ids to split")
    rng = np.random.default_rng(seed)

    if exam_of is None:
        blocks = [[i] for i in ids]
    else:
        missing = [i for i in ids if i not in exam_of]
        if missing:
            raise ValidationError(f"{len(missing)} image(s) missing an exam id")
        by_exam: dict[str, list[str]] = {}
        for i in ids:
            by_exam.setdefault(exam_of[i], []).append(i)
        blocks = [by_exam[e] for e in sorted(by_exam)]

    order = rng.permutation(len(blocks))
    shuffled = [blocks[k] for k in order]
    n = len(ids)
    targets = _largest_remainder_counts(n, fractions)
    assignments: dict[str, str] = {}
    split_index = 0
    assigned_in_split = 0
    for block in shuffled:
        while split_index < len(SPLIT_NAMES) - 1 and assigned_in_split >= targets[split_index]:
            split_index += 1
            assigned_in_split = 0
        for image_id in block:
            assignments[image_id] = SPLIT_NAMES[split_index]
        assigned_in_split += len(block)
    return SplitAssignment(assignments=assignments, fractions=tuple(fractions), seed=seed)


def _largest_remainder_counts(n: int, fractions: Sequence[float]) -> list[int]:
    raw = [f * n for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    shortfall = n - sum(counts)
    remainders = sorted(range(len(fractions)), key=lambda i: (raw[i] - counts[i]), reverse=True)
    for i in remainders[:shortfall]:
        counts[i] += 1
    return counts


# ---------------------------------------------------------------------------
# File formats


LABEL_DEF_COLUMNS = ["label", "anatomy", "positive_topics", "negative_topics"]


def _parse_topic_ids(cell: str) -> frozenset[int]:
    cell = cell.strip()
    if not cell:
        return frozenset()
    try:
        return frozenset(int(part) for part in cell.split(","))
    except ValueError as exc:
        raise DataError(f"bad topic id list {cell!r}") from exc


def read_label_defs(path: str | Path) -> list[LabelDef]:
    defs = []
    seen = set()
    for row in read_tsv(path, LABEL_DEF_COLUMNS):
        key = (row["label"], row["anatomy"])
        if key in seen:
            raise DataError(f"{path}: duplicate definition for {key}")
        seen.add(key)
        try:
            defs.append(LabelDef(
                name=row["label"],
                anatomy=row["anatomy"],
                positive_topics=_parse_topic_ids(row["positive_topics"]),
                negative_topics=_parse_topic_ids(row["negative_topics"]),
            ))
        except ValidationError as exc:
            raise DataError(f"{path}: {exc}") from exc
    if not defs:
        raise DataError(f"{path}: no label definitions")
    return defs


def write_label_defs(defs: Sequence[LabelDef], path: str | Path,
                     header_lines: Sequence[str] = ()) -> None:
    write_tsv(
        path,
        LABEL_DEF_COLUMNS,
        (
            [
                d.name, d.anatomy,
                ",".join(str(t) for t in sorted(d.positive_topics)),
                ",".join(str(t) for t in sorted(d.negative_topics)),
            ]
            for d in defs
        ),
        header_lines,
    )


def label_names(defs: Sequence[LabelDef]) -> list[str]:
    return sorted({d.name for d in defs})


def write_unit_labels_tsv(
    units: Sequence[LabeledUnit], names: Sequence[str], path: str | Path,
    header_lines: Sequence[str] = (),
) -> None:
    write_tsv(
        path,
        ["unit_id"] + list(names),
        (
            [u.unit_id] + [u.outcomes.get(n, LabelOutcome.MISSING).letter for n in names]
            for u in units
        ),
        header_lines,
    )


def read_unit_labels_tsv(path: str | Path) -> tuple[list[str], list[LabeledUnit]]:
    rows = read_tsv(path)
    if not rows:
        raise DataError(f"{path}: no labeled units")
    names = [c for c in rows[0].keys() if c != "unit_id"]
    units = []
    for row in rows:
        units.append(LabeledUnit(
            unit_id=row["unit_id"],
            outcomes={n: LabelOutcome.from_letter(row[n]) for n in names},
        ))
    return names, units


def write_split_tsv(split: SplitAssignment, path: str | Path,
                    header_lines: Sequence[str] = ()) -> None:
    write_tsv(
        path,
        ["image_id", "split"],
        ([image_id, name] for image_id, name in sorted(split.assignments.items())),
        header_lines,
    )


def read_split_tsv(path: str | Path) -> dict[str, str]:
    assignments = {}
    for row in read_tsv(path, ["image_id", "split"]):
        if row["split"] not in SPLIT_NAMES:
            raise DataError(f"{path}: unknown split {row['split']!r}")
        assignments[row["image_id"]] = row["split"]
    return assignments
