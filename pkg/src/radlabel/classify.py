"""Reference image classifier and synthetic data for end-to-end runs.

The production setting trains a deep image model on the weak labels; here
a per-label logistic regression over precomputed feature vectors stands
in so the labeling and evaluation pipeline can be exercised at desk
scale. External prediction files in the shared TSV schema plug into the
same evaluation path.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from radlabel.errors import DataError, ValidationError
from radlabel.labels import LabelOutcome

log = logging.getLogger(__name__)

PREDICTIONS_FORMAT = "radlabel-predictions v1"
FEATURES_FORMAT = "radlabel-features v1"


@dataclass
class FeatureTable:
    image_ids: list[str]
    values: np.ndarray  # images x dims, finite

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or len(self.image_ids) != self.values.shape[0]:
            raise ValidationError("feature table shape does not match its image ids")
        if not np.isfinite(self.values).all():
            raise ValidationError("feature values must be finite")
        self._row_of = {image_id: i for i, image_id in enumerate(self.image_ids)}
        if len(self._row_of) != len(self.image_ids):
            raise ValidationError("duplicate image ids in feature table")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def row(self, image_id: str) -> np.ndarray:
        return self.values[self._row_of[image_id]]


@dataclass(frozen=True)
class Prediction:
    image_id: str
    label: str
    predicted: bool
    score: float | None = None


@dataclass
class PredictionSet:
    records: list[Prediction]

    def __post_init__(self):
        self._index: dict[tuple[str, str], Prediction] = {}
        for rec in self.records:
            key = (rec.image_id, rec.label)
            if key in self._index:
                raise DataError(f"duplicate prediction for {key}")
            self._index[key] = rec

    def labels(self) -> list[str]:
        return sorted({r.label for r in self.records})

    def for_label(self, label: str) -> dict[str, bool]:
        return {r.image_id: r.predicted for r in self.records if r.label == label}

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class LinearLabelModel:
    """One independent logistic model per label (weights plus bias), with
    feature standardization folded into the stored parameters."""

    feature_dim: int
    weights: dict[str, np.ndarray]  # label -> concat(weights, bias)
    mean: np.ndarray
    scale: np.ndarray
    skipped_labels: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def score(self, label: str, features: np.ndarray) -> np.ndarray:
        if label not in self.weights:
            raise ValidationError(f"model has no trained weights for label {label!r}")
        features = np.atleast_2d(np.asarray(features, dtype=float))
        if features.shape[1] != self.feature_dim:
            raise ValidationError(
                f"feature dimension {features.shape[1]} does not match model ({self.feature_dim})"
            )
        standardized = (features - self.mean) / self.scale
        wb = self.weights[label]
        return _sigmoid(standardized @ wb[:-1] + wb[-1])


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def synth_dataset(
    num_exams: int,
    images_per_exam: int,
    label_signal_strength: float,
    seed: int,
    label_names: Sequence[str] = ("alpha", "bravo", "charlie", "delta", "echo"),
    feature_dim: int = 12,
    weak_error_rate: float = 0.2,
    missing_rate: float = 0.1,
) -> tuple[FeatureTable, dict[str, dict[str, LabelOutcome]], dict[tuple[str, str], bool], dict[str, str]]:
    """Seeded synthetic world: gold truths, feature signal, noisy weak labels.

    Per label, each image gets a gold boolean; TRUE adds that label's
    direction (scaled by ``label_signal_strength``) to the image's feature
    vector on top of unit Gaussian noise. Weak labels corrupt gold at
    ``weak_error_rate`` and drop to MISSING at ``missing_rate``, mimicking
    text-derived labeling noise. Returns (features, weak_labels, gold,
    exam_of).
    """
    if num_exams < 1 or images_per_exam < 1:
        raise ValidationError("num_exams and images_per_exam must be positive")
    if label_signal_strength < 0:
        raise ValidationError("label_signal_strength must be non-negative")
    rng = np.random.default_rng(seed)
    labels = list(label_names)
    image_ids = [
        f"exam{e:05d}/img{i}" for e in range(num_exams) for i in range(images_per_exam)
    ]
    exam_of = {img: img.split("/")[0] for img in image_ids}
    n = len(image_ids)
    directions = rng.normal(size=(len(labels), feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    prevalence = rng.uniform(0.3, 0.7, size=len(labels))
    gold_matrix = rng.random((n, len(labels))) < prevalence
    values = rng.normal(size=(n, feature_dim))
    values += (gold_matrix.astype(float) * label_signal_strength) @ directions

    flip = rng.random((n, len(labels))) < weak_error_rate
    missing = rng.random((n, len(labels))) < missing_rate
    weak_labels: dict[str, dict[str, LabelOutcome]] = {}
    gold: dict[tuple[str, str], bool] = {}
    for i, image_id in enumerate(image_ids):
        outcomes = {}
        for j, label in enumerate(labels):
            gold[(image_id, label)] = bool(gold_matrix[i, j])
            if missing[i, j]:
                outcomes[label] = LabelOutcome.MISSING
            else:
                value = gold_matrix[i, j] ^ flip[i, j]
                outcomes[label] = LabelOutcome.TRUE if value else LabelOutcome.FALSE
        weak_labels[image_id] = outcomes
    features = FeatureTable(image_ids=image_ids, values=values)
    return features, weak_labels, gold, exam_of


def train_reference(
    features: FeatureTable,
    weak_labels: Mapping[str, Mapping[str, LabelOutcome]],
    split: Mapping[str, str],
    label_names: Sequence[str] | None = None,
    epochs: int = 300,
    learning_rate: float = 0.5,
    seed: int = 0,
) -> LinearLabelModel:
    """Full-batch logistic-loss gradient descent, one binary model per label.

    Only train-split units with a non-MISSING weak outcome contribute
    gradients. Validation accuracy is logged per label at the end of
    training (and drives nothing; it mirrors the production monitoring
    step).
    """
    if label_names is None:
        label_names = sorted({n for u in weak_labels.values() for n in u})
    mean = features.values.mean(axis=0)
    scale = features.values.std(axis=0)
    scale[scale == 0] = 1.0
    standardized = (features.values - mean) / scale
    model = LinearLabelModel(
        feature_dim=features.dim,
        weights={},
        mean=mean,
        scale=scale,
        metadata={"epochs": epochs, "learning_rate": learning_rate, "seed": seed,
                  "validation_accuracy": {}},
    )

    def rows_for(label: str, split_name: str) -> tuple[np.ndarray, np.ndarray]:
        idx, ys = [], []
        for i, image_id in enumerate(features.image_ids):
            if split.get(image_id) != split_name:
                continue
            outcome = weak_labels.get(image_id, {}).get(label, LabelOutcome.MISSING)
            if outcome == LabelOutcome.MISSING:
                continue
            idx.append(i)
            ys.append(1.0 if outcome == LabelOutcome.TRUE else 0.0)
        return np.array(idx, dtype=int), np.array(ys)

    for label in label_names:
        train_idx, y = rows_for(label, "train")
        if len(train_idx) == 0:
            warnings.warn(f"label {label!r}: no non-MISSING training units; skipping")
            model.skipped_labels.append(label)
            continue
        X = standardized[train_idx]
        wb = np.zeros(features.dim + 1)
        for _ in range(epochs):
            p = _sigmoid(X @ wb[:-1] + wb[-1])
            gradient_w = X.T @ (p - y) / len(y)
            gradient_b = float(np.mean(p - y))
            wb[:-1] -= learning_rate * gradient_w
            wb[-1] -= learning_rate * gradient_b
        model.weights[label] = wb
        val_idx, val_y = rows_for(label, "validation")
        if len(val_idx):
            val_p = _sigmoid(standardized[val_idx] @ wb[:-1] + wb[-1])
            val_acc = float(np.mean((val_p > 0.5) == (val_y == 1.0)))
            model.metadata["validation_accuracy"][label] = val_acc
            log.debug("label %s: validation accuracy %.3f", label, val_acc)
    return model


def predict(model: LinearLabelModel, features: FeatureTable) -> PredictionSet:
    """Score every (image, label); TRUE strictly above 0.5, so the exact
    boundary falls to FALSE."""
    records = []
    for label in sorted(model.weights):
        scores = model.score(label, features.values)
        for image_id, score in zip(features.image_ids, scores):
            records.append(Prediction(
                image_id=image_id, label=label,
                predicted=bool(score > 0.5), score=float(score),
            ))
    return PredictionSet(records=records)


# ---------------------------------------------------------------------------
# File formats


def save_classifier(model: LinearLabelModel, path: str | Path) -> None:
    import json

    payload = {
        "format": "radlabel-classifier v1",
        "feature_dim": model.feature_dim,
        "mean": model.mean.tolist(),
        "scale": model.scale.tolist(),
        "weights": {label: wb.tolist() for label, wb in sorted(model.weights.items())},
        "skipped_labels": sorted(model.skipped_labels),
        "metadata": model.metadata,
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")


def load_classifier(path: str | Path) -> LinearLabelModel:
    import json

    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "radlabel-classifier v1":
        raise DataError(f"{path}: unsupported classifier format {payload.get('format')!r}")
    return LinearLabelModel(
        feature_dim=int(payload["feature_dim"]),
        weights={label: np.asarray(wb, dtype=float) for label, wb in payload["weights"].items()},
        mean=np.asarray(payload["mean"], dtype=float),
        scale=np.asarray(payload["scale"], dtype=float),
        skipped_labels=list(payload["skipped_labels"]),
        metadata=dict(payload["metadata"]),
    )


def write_predictions_tsv(
    predictions: PredictionSet, path: str | Path, header_lines: Sequence[str] = ()
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {PREDICTIONS_FORMAT}\n")
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("image_id\tlabel\tpredicted\tscore\n")
        for r in predictions.records:
            score = "" if r.score is None else f"{r.score:.6f}"
            fh.write(f"{r.image_id}\t{r.label}\t{'T' if r.predicted else 'F'}\t{score}\n")


def import_predictions(path: str | Path, known_labels: Sequence[str] | None = None) -> PredictionSet:
    """Parse and validate a predictions file (shared schema, versioned
    header). Unknown labels, duplicate keys, and malformed rows are
    rejected."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].lstrip("# ").strip() != PREDICTIONS_FORMAT:
        raise DataError(f"{path}: missing or unsupported format line "
                        f"(expected '# {PREDICTIONS_FORMAT}')")
    body = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() and not ln.startswith("#")]
    if not body or body[0][1].split("\t") != ["image_id", "label", "predicted", "score"]:
        raise DataError(f"{path}: bad or missing column header")
    records = []
    seen = set()
    for lineno, line in body[1:]:
        cells = line.split("\t")
        if len(cells) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 columns, found {len(cells)}")
        image_id, label, predicted, score = cells
        if known_labels is not None and label not in known_labels:
            raise DataError(
                f"{path}:{lineno}: unknown label {label!r}; known labels: {sorted(known_labels)}"
            )
        if predicted not in ("T", "F"):
            raise DataError(f"{path}:{lineno}: predicted must be T or F, got {predicted!r}")
        key = (image_id, label)
        if key in seen:
            raise DataError(f"{path}:{lineno}: duplicate prediction for {key}")
        seen.add(key)
        try:
            score_value = float(score) if score else None
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad score {score!r}") from exc
        records.append(Prediction(image_id=image_id, label=label,
                                  predicted=predicted == "T", score=score_value))
    return PredictionSet(records=records)


def write_features_tsv(
    features: FeatureTable, path: str | Path, header_lines: Sequence[str] = ()
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {FEATURES_FORMAT}\n")
        for line in header_lines:
            fh.write(f"# {line}\n")
        cols = "\t".join(f"f{i}" for i in range(features.dim))
        fh.write(f"image_id\t{cols}\n")
        for image_id, row in zip(features.image_ids, features.values):
            cells = "\t".join(f"{v:.6f}" for v in row)
            fh.write(f"{image_id}\t{cells}\n")


def read_features_tsv(path: str | Path) -> FeatureTable:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].lstrip("# ").strip() != FEATURES_FORMAT:
        raise DataError(f"{path}: missing or unsupported format line "
                        f"(expected '# {FEATURES_FORMAT}')")
    body = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() and not ln.startswith("#")]
    if not body or not body[0][1].startswith("image_id\t"):
        raise DataError(f"{path}: bad or missing column header")
    dim = len(body[0][1].split("\t")) - 1
    ids, rows = [], []
    for lineno, line in body[1:]:
        cells = line.split("\t")
        if len(cells) != dim + 1:
            raise DataError(f"{path}:{lineno}: expected {dim + 1} columns")
        ids.append(cells[0])
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric feature value") from exc
    return FeatureTable(image_ids=ids, values=np.array(rows))
