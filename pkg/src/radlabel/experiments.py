"""The three experiment stages, composed from the pipeline modules.

Stage 1 fits the scaling-factor x granularity grid and exports blinded
review sheets; once scores come back, it produces summaries, the ranking,
and the crude/adjusted regression table. Stage 2 fits one topic model per
anatomy, derives tri-state labels, propagates them to images, splits the
images, and trains/evaluates the reference classifier. Stage 3 draws the
stratified review samples and, given gold annotations, reports bootstrap
true-accuracy estimates.

Human steps (topic scoring, gold review) are file handoffs: commands stop
at an exported file and resume from its filled-in counterpart.
"""

from __future__ import annotations

import sys
from collections import Counter, defaultdict
from pathlib import Path
from typing import Mapping, Sequence

from radlabel import classify, corpus as corpus_mod, evaluation, labels as labels_mod
from radlabel import lda, regress, simulate, topics
from radlabel.config import RunConfig, artifact_header, derive_seed
from radlabel.errors import DataError, ValidationError
from radlabel.fileio import write_tsv
from radlabel.stemmer import NullStemmer, SuffixStemmer, default_swedish


def load_stemmer(config: RunConfig):
    if config.stemmer_rules:
        return SuffixStemmer.from_file(config.stemmer_rules)
    if config.language_mode == "swedish":
        return default_swedish()
    if config.language_mode == "none":
        return NullStemmer()
    raise ValidationError(
        f"no stemmer available for language_mode={config.language_mode!r}; "
        "supply stemmer_rules or use 'swedish'/'none'"
    )


def load_rules(config: RunConfig) -> corpus_mod.NormalizationRules:
    rules = corpus_mod.NormalizationRules.load(
        corrections_path=config.corrections or None,
        stopwords_path=config.stopwords or None,
    )
    if not config.stopwords and config.language_mode == "swedish":
        rules = corpus_mod.NormalizationRules(
            corrections=rules.corrections,
            stop_words=corpus_mod.default_stopwords(),
            preserved_negations=rules.preserved_negations,
        )
    return rules


def ingest_corpus(config: RunConfig) -> list[corpus_mod.RawReport]:
    """Read, scrub, and drop reports too short to carry information."""
    config.require_paths("corpus")
    reports = corpus_mod.read_reports_jsonl(config.corpus)
    scrubbed = [corpus_mod.scrub_report(r) for r in reports]
    return [r for r in scrubbed if len(r.text.strip()) >= config.min_report_chars]


def build_documents(
    reports: Sequence[corpus_mod.RawReport],
    granularity: str,
    rules: corpus_mod.NormalizationRules,
    stemmer,
    config: RunConfig,
) -> tuple[corpus_mod.Vocabulary, list[corpus_mod.Document]]:
    if granularity == corpus_mod.SENTENCE:
        raw_docs = [d for r in reports for d in corpus_mod.split_sentences(r)]
    elif granularity == corpus_mod.REPORT:
        raw_docs = [corpus_mod.report_document(r) for r in reports]
    else:
        raise ValidationError(f"unknown granularity {granularity!r}")
    docs = corpus_mod.preprocess_documents(raw_docs, rules, stemmer)
    reports_by_id = {r.report_id: r for r in reports}
    docs, _ = corpus_mod.filter_documents(
        docs, reports_by_id, config.min_report_chars, config.min_tokens
    )
    return corpus_mod.build_vocabulary(docs, config.min_count)


def _scaling_name(value: float) -> str:
    for name, known in topics.SCALING_VALUES.items():
        if abs(value - known) < 1e-12:
            return name
    return f"x{value:g}"


def _scaling_label(value: float) -> str:
    return f"{_scaling_name(value)} ({value:g})"


def _document_type(granularity: str) -> str:
    return "sentences" if granularity == corpus_mod.SENTENCE else "report"


# ---------------------------------------------------------------------------
# Experiment 1


def run_experiment1(config: RunConfig) -> Path:
    """Fit the scaling x granularity grid and export blinded sheets.

    Returns the manifest path. Scoring happens outside; see
    :func:`experiment1_report`.
    """
    rules = load_rules(config)
    stemmer = load_stemmer(config)
    reports = ingest_corpus(config)
    base = Path(config.output_dir) / "exp1"
    (base / "sheets").mkdir(parents=True, exist_ok=True)
    (base / "maps").mkdir(parents=True, exist_ok=True)
    header = artifact_header(config, "exp1")
    manifest_rows = []
    for granularity in (corpus_mod.REPORT, corpus_mod.SENTENCE):
        vocab, docs = build_documents(reports, granularity, rules, stemmer, config)
        encoded = lda.EncodedCorpus.from_documents(docs, vocab)
        doc_texts = {d.doc_id: (d.text or " ".join(d.tokens)) for d in docs}
        for scaling in config.scaling_grid():
            model_id = f"{_scaling_name(scaling).lower()}-{_document_type(granularity)}"
            hyper = lda.Hyperparams(
                num_topics=config.exp1_num_topics,
                scaling_factor=scaling,
                beta=config.beta,
                sweeps=config.sweeps,
                burn_in=config.burn_in,
                seed=derive_seed(config.seed_sampler, "exp1", model_id),
            )
            _, dists = lda.fit(encoded, hyper)
            views = [
                topics.build_topic_view(dists, vocab.terms, encoded.doc_ids, t)
                for t in range(hyper.num_topics)
            ]
            for view_mode in topics.VIEW_MODES:
                sheet = topics.export_review_sheet(
                    views, doc_texts, model_id, view_mode,
                    seed=derive_seed(config.seed_shuffle, "exp1", model_id, view_mode),
                )
                sheet_path = base / "sheets" / f"{model_id}-{view_mode}.tsv"
                map_path = base / "maps" / f"{model_id}-{view_mode}.map.tsv"
                topics.write_review_sheet(sheet, sheet_path, map_path, header)
                manifest_rows.append([
                    model_id, _scaling_label(scaling), _document_type(granularity),
                    view_mode, sheet_path.name, map_path.name,
                ])
    manifest = base / "manifest.tsv"
    write_tsv(
        manifest,
        ["model_id", "scaling_factor", "document_type", "view", "sheet_file", "map_file"],
        manifest_rows,
        header,
    )
    return manifest


def experiment1_report(config: RunConfig) -> dict[str, Path | None]:
    """Summaries, ranking, and regression from scored sheets.

    Scored sheets live in ``<output_dir>/exp1/scored/`` under the same file
    names as the exported sheets, with the description and score columns
    filled in. Models without a scored sheet are skipped; the regression
    runs only when enough model rows exist to identify it.
    """
    base = Path(config.output_dir) / "exp1"
    manifest_path = base / "manifest.tsv"
    if not manifest_path.exists():
        raise ValidationError(f"{manifest_path} not found; run exp1 first")
    from radlabel.fileio import read_tsv

    header = artifact_header(config, "exp1-report")
    summaries = []
    for row in read_tsv(manifest_path):
        scored_path = base / "scored" / row["sheet_file"]
        if not scored_path.exists():
            continue
        joined = topics.import_scores(scored_path, base / "maps" / row["map_file"])
        summaries.append(topics.summarize_model(
            [score for _, score in joined],
            model_id=f"{row['model_id']}-{row['view']}",
            scaling_label=row["scaling_factor"],
            document_type=row["document_type"],
            view_mode=row["view"],
        ))
    if not summaries:
        raise DataError(f"no scored sheets found under {base / 'scored'}")
    summaries_path = base / "summaries.tsv"
    topics.write_summaries_tsv(summaries, summaries_path, header)
    ranking_path = base / "ranking.tsv"
    topics.write_summaries_tsv(topics.rank_models(summaries), ranking_path, header)
    regression_path: Path | None = base / "regression.tsv"
    try:
        table = regress.crude_and_adjusted(summaries)
        regress.write_crude_adjusted_tsv(table, regression_path, header)
    except ValidationError as exc:
        print(f"regression refused: {exc}", file=sys.stderr)
        regression_path = None
    return {"summaries": summaries_path, "ranking": ranking_path, "regression": regression_path}


# ---------------------------------------------------------------------------
# Experiment 2


def derive_report_labels(
    reports: Sequence[corpus_mod.RawReport],
    defs: Sequence[labels_mod.LabelDef],
    per_anatomy: Mapping[str, tuple[lda.TopicDistributions, Sequence[corpus_mod.Document]]],
    threshold: float,
) -> tuple[list[labels_mod.LabeledUnit], Counter]:
    """Sentence-level tri-state labels aggregated to report level.

    Each anatomy is labeled against its own topic space; labels with no
    definition for a report's anatomy stay MISSING on that report. Every
    labeled report carries the full label-name set.
    """
    names = labels_mod.label_names(defs)
    conflicts: Counter = Counter()
    report_units: list[labels_mod.LabeledUnit] = []
    for anatomy, (dists, docs) in per_anatomy.items():
        anatomy_defs = [d for d in defs if d.anatomy == anatomy]
        sentence_units: dict[str, list[labels_mod.LabeledUnit]] = defaultdict(list)
        for i, doc in enumerate(docs):
            topic_set = labels_mod.assign_document_topics(dists.doc_topic[i], threshold)
            outcomes = labels_mod.map_topics_to_labels(topic_set, anatomy_defs, conflicts)
            sentence_units[doc.source_report_id].append(
                labels_mod.LabeledUnit(doc.doc_id, outcomes)
            )
        for report in reports:
            if report.anatomy != anatomy:
                continue
            report_units.append(labels_mod.aggregate_units(
                sentence_units.get(report.report_id, []), report.report_id, names
            ))
    return report_units, conflicts


def run_experiment2(config: RunConfig) -> dict[str, Path]:
    """Per-anatomy topic models, tri-state labels, split, and classifier.

    Requires a label-definition file authored from reviewed topics. The
    classifier trains only when a feature file is configured; the labeled
    dataset, split, and mode table are produced either way.
    """
    config.require_paths("label_defs")
    rules = load_rules(config)
    stemmer = load_stemmer(config)
    reports = ingest_corpus(config)
    defs = labels_mod.read_label_defs(config.label_defs)
    names = labels_mod.label_names(defs)
    base = Path(config.output_dir) / "exp2"
    base.mkdir(parents=True, exist_ok=True)
    header = artifact_header(config, "exp2")

    per_anatomy: dict[str, tuple[lda.TopicDistributions, list[corpus_mod.Document]]] = {}
    for anatomy in corpus_mod.ANATOMIES:
        anatomy_reports = [r for r in reports if r.anatomy == anatomy]
        if not anatomy_reports:
            continue
        vocab, docs = build_documents(anatomy_reports, corpus_mod.SENTENCE, rules, stemmer, config)
        encoded = lda.EncodedCorpus.from_documents(docs, vocab)
        hyper = lda.Hyperparams(
            num_topics=config.num_topics,
            scaling_factor=config.scaling_factor,
            beta=config.beta,
            sweeps=config.sweeps,
            burn_in=config.burn_in,
            seed=derive_seed(config.seed_sampler, "exp2", anatomy),
        )
        model, dists = lda.fit(encoded, hyper)
        lda.save_model(model, base / f"model-{anatomy}.npz",
                       vocab_ref=f"vocab-{anatomy}.tsv", extra_meta={"header": header})
        corpus_mod.write_vocabulary_tsv(vocab, base / f"vocab-{anatomy}.tsv", header)
        per_anatomy[anatomy] = (dists, docs)

    report_units, conflicts = derive_report_labels(
        reports, defs, per_anatomy, config.topic_threshold
    )
    report_label_map = {u.unit_id: u.outcomes for u in report_units}
    report_to_images = {
        r.report_id: list(r.image_ids) for r in reports if r.report_id in report_label_map
    }
    image_label_map = labels_mod.propagate_to_images(report_label_map, report_to_images)
    image_units = [
        labels_mod.LabeledUnit(i, m) for i, m in sorted(image_label_map.items())
    ]

    paths = {
        "labels_report": base / "labels_report.tsv",
        "labels_image": base / "labels_image.tsv",
        "mode_table": base / "mode_table.tsv",
        "split": base / "split.tsv",
        "conflicts": base / "label_conflicts.tsv",
    }
    labels_mod.write_unit_labels_tsv(report_units, names, paths["labels_report"], header)
    labels_mod.write_unit_labels_tsv(image_units, names, paths["labels_image"], header)
    write_tsv(
        paths["conflicts"],
        ["label", "documents_with_conflicting_topics"],
        ([n, conflicts.get(n, 0)] for n in names),
        header,
    )
    write_tsv(
        paths["mode_table"],
        ["label", "pos_documents", "neg_documents", "pos_images", "neg_images",
         "mode", "mode_frequency"],
        (_mode_table_row(n, report_units, image_units) for n in names),
        header,
    )

    exam_of = {img: r.exam_id for r in reports for img in r.image_ids}
    split = labels_mod.split_dataset(
        image_label_map.keys(),
        fractions=config.fractions(),
        seed=config.seed_split,
        exam_of=exam_of if config.split_by_exam else None,
    )
    labels_mod.write_split_tsv(split, paths["split"], header)

    if config.features:
        config.require_paths("features")
        features = classify.read_features_tsv(config.features)
        classifier = classify.train_reference(
            features, image_label_map, split.assignments, names,
            epochs=config.epochs, learning_rate=config.learning_rate,
            seed=config.seed_sampler,
        )
        classifier.metadata["provenance"] = header
        paths["classifier"] = base / "classifier.json"
        classify.save_classifier(classifier, paths["classifier"])
        predictions = classify.predict(classifier, features)
        paths["predictions"] = base / "predictions.tsv"
        classify.write_predictions_tsv(predictions, paths["predictions"], header)
        paths["base_accuracy"] = base / "base_accuracy.tsv"
        rows = base_accuracy_rows(
            predictions, image_label_map, image_units, split.assignments, "test"
        )
        write_tsv(
            paths["base_accuracy"],
            ["label", "mode", "mode_frequency", "base_accuracy", "tp", "fp", "fn", "tn"],
            rows,
            header,
        )
    return paths


def _mode_table_row(name, report_units, image_units):
    def tally(units):
        pos = sum(1 for u in units if u.outcomes.get(name) == labels_mod.LabelOutcome.TRUE)
        neg = sum(1 for u in units if u.outcomes.get(name) == labels_mod.LabelOutcome.FALSE)
        return pos, neg

    pos_docs, neg_docs = tally(report_units)
    pos_imgs, neg_imgs = tally(image_units)
    try:
        mode, frequency = labels_mod.compute_mode(name, image_units)
        mode_cell, freq_cell = ("Yes" if mode == labels_mod.LabelOutcome.TRUE else "No",
                                f"{frequency:.3f}")
    except DataError:
        mode_cell, freq_cell = "-", "-"
    return [name, pos_docs, neg_docs, pos_imgs, neg_imgs, mode_cell, freq_cell]


def base_accuracy_rows(
    predictions: classify.PredictionSet,
    image_label_map: Mapping[str, Mapping[str, labels_mod.LabelOutcome]],
    image_units: Sequence[labels_mod.LabeledUnit],
    split: Mapping[str, str],
    split_name: str,
) -> list[list]:
    rows = []
    for label in predictions.labels():
        preds = {
            i: p for i, p in predictions.for_label(label).items()
            if split.get(i) == split_name
        }
        cm = evaluation.confusion(preds, image_label_map, label)
        accuracy = evaluation.base_accuracy(cm)
        mode, frequency = labels_mod.compute_mode(label, image_units)
        rows.append([
            label, "Yes" if mode == labels_mod.LabelOutcome.TRUE else "No",
            f"{frequency:.3f}", f"{accuracy:.3f}", cm.tp, cm.fp, cm.fn, cm.tn,
        ])
    return rows


# ---------------------------------------------------------------------------
# Experiment 3


def _exp3_inputs(config: RunConfig, predictions_path=None, labels_path=None, split_path=None):
    base = Path(config.output_dir)
    predictions_path = predictions_path or config.predictions or str(base / "exp2" / "predictions.tsv")
    labels_path = labels_path or base / "exp2" / "labels_image.tsv"
    split_path = split_path or base / "exp2" / "split.tsv"
    for p in (predictions_path, labels_path, split_path):
        if not Path(p).exists():
            raise ValidationError(f"required input {p} not found; run exp2 (or set predictions)")
    predictions = classify.import_predictions(predictions_path)
    _, image_units = labels_mod.read_unit_labels_tsv(labels_path)
    image_label_map = {u.unit_id: u.outcomes for u in image_units}
    split = labels_mod.read_split_tsv(split_path)
    return predictions, image_label_map, image_units, split


def run_experiment3(
    config: RunConfig, predictions_path=None, labels_path=None, split_path=None
) -> list[Path]:
    """Draw the blinded per-label review samples from the test split."""
    predictions, image_label_map, _, split = _exp3_inputs(
        config, predictions_path, labels_path, split_path
    )
    review_labels = (
        [s.strip() for s in config.review_labels.split(",") if s.strip()]
        or predictions.labels()
    )
    base = Path(config.output_dir) / "exp3" / "review"
    base.mkdir(parents=True, exist_ok=True)
    header = artifact_header(config, "exp3")
    written = []
    for label in review_labels:
        preds_test = {
            i: p for i, p in predictions.for_label(label).items()
            if split.get(i) == "test"
        }
        sample = evaluation.draw_review_sample(
            preds_test, image_label_map, label,
            n_per_stratum=config.n_per_stratum,
            seed=derive_seed(config.seed_shuffle, "exp3", label),
        )
        sheet_path = base / f"{label}.sheet.tsv"
        strata_path = base / f"{label}.strata.tsv"
        evaluation.write_review_sample_sheet(sample, sheet_path, header)
        evaluation.write_review_sample_strata(sample, strata_path, header)
        written += [sheet_path, strata_path]
    return written


def experiment3_report(
    config: RunConfig, predictions_path=None, labels_path=None, split_path=None
) -> Path:
    """Bootstrap true-accuracy table from imported gold annotations."""
    config.require_paths("gold")
    predictions, image_label_map, image_units, split = _exp3_inputs(
        config, predictions_path, labels_path, split_path
    )
    gold = evaluation.read_gold_tsv(config.gold)
    review_dir = Path(config.output_dir) / "exp3" / "review"
    strata_files = sorted(review_dir.glob("*.strata.tsv"))
    if not strata_files:
        raise ValidationError(f"no review samples under {review_dir}; run exp3 first")
    rows = []
    for strata_path in strata_files:
        sample = evaluation.read_review_sample_strata(strata_path)
        label = sample.label
        preds_label = predictions.for_label(label)
        preds_test = {i: p for i, p in preds_label.items() if split.get(i) == "test"}
        cm = evaluation.confusion(preds_test, image_label_map, label)
        accuracy_hit, accuracy_miss = evaluation.gold_accuracies(
            sample, gold, preds_label, label
        )
        estimate = evaluation.true_accuracy(
            accuracy_hit, accuracy_miss, cm,
            n_hit=len(sample.hits), n_miss=len(sample.misses),
            resamples=config.resamples,
            seed=derive_seed(config.seed_bootstrap, "exp3", label),
        )
        mode, frequency = labels_mod.compute_mode(label, image_units)
        rows.append([
            label,
            "Yes" if mode == labels_mod.LabelOutcome.TRUE else "No",
            f"{frequency:.3f}",
            f"{estimate.proportion_hit:.3f}",
            f"{estimate.point:.3f}",
            f"{estimate.ci_low:.3f}",
            f"{estimate.ci_high:.3f}",
        ])
    out = Path(config.output_dir) / "exp3" / "true_accuracy.tsv"
    write_tsv(
        out,
        ["label", "mode", "mode_frequency", "base_accuracy",
         "true_accuracy", "ci_2.5", "ci_97.5"],
        rows,
        artifact_header(config, "exp3-report"),
    )
    return out


# ---------------------------------------------------------------------------
# Synthetic world


def run_synth(config: RunConfig) -> dict[str, Path]:
    """Emit a synthetic corpus, image features, and image gold standard."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = artifact_header(config, "synth")
    reports, truth = simulate.synthetic_reports(config.synth_exams, config.seed_synth)
    features, gold = simulate.image_gold_and_features(
        reports, truth, config.synth_signal, derive_seed(config.seed_synth, "features")
    )
    paths = {
        "corpus": out / "corpus.jsonl",
        "features": out / "features.tsv",
        "gold": out / "gold.tsv",
    }
    corpus_mod.write_reports_jsonl(reports, paths["corpus"], header)
    classify.write_features_tsv(features, paths["features"], header)
    annotations = [
        evaluation.GoldAnnotation(image_id, label, present, reviewer="synthetic")
        for (image_id, label), present in sorted(gold.items())
    ]
    evaluation.write_gold_tsv(annotations, paths["gold"], header)
    return paths
