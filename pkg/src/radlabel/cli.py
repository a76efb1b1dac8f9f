"""Command-line interface.

Every stage is a subcommand composing over declared file formats, so a
deleted intermediate can always be rebuilt by rerunning its command.
Configuration comes from an optional key-value file (``--config``); every
config key is also a flag of the same name, and flags win. Exit codes:
0 success, 2 validation/configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from radlabel import __version__, classify, corpus as corpus_mod, evaluation
from radlabel import experiments, labels as labels_mod, lda, regress, topics
from radlabel.config import (RunConfig, apply_overrides, artifact_header,
                             derive_seed, load_config)
from radlabel.errors import DataError, ValidationError
from radlabel.fileio import write_tsv


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction,
                               default=None)
        elif f.type == "int":
            group.add_argument(flag, dest=f.name, type=int, default=None)
        elif f.type == "float":
            group.add_argument(flag, dest=f.name, type=float, default=None)
        else:
            group.add_argument(flag, dest=f.name, default=None)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    apply_overrides(config, overrides)
    Path(config.output_dir).mkdir(parents=True, exist_ok=True)
    return config


def _out(config: RunConfig, name: str) -> Path:
    return Path(config.output_dir) / name


# ---------------------------------------------------------------------------
# Corpus commands


def cmd_ingest(config: RunConfig, args) -> None:
    reports = experiments.ingest_corpus(config)
    out = _out(config, "cleaned_reports.jsonl")
    corpus_mod.write_reports_jsonl(reports, out, artifact_header(config, "ingest"))
    print(f"{len(reports)} reports -> {out}")


def cmd_preprocess(config: RunConfig, args) -> None:
    rules = experiments.load_rules(config)
    stemmer = experiments.load_stemmer(config)
    reports = experiments.ingest_corpus(config)
    suffix = args.granularity
    if args.anatomy != "all":
        reports = [r for r in reports if r.anatomy == args.anatomy]
        suffix = f"{args.granularity}-{args.anatomy}"
    vocab, docs = experiments.build_documents(reports, args.granularity, rules, stemmer, config)
    header = artifact_header(config, "preprocess")
    docs_path = _out(config, f"docs-{suffix}.jsonl")
    vocab_path = _out(config, f"vocab-{suffix}.tsv")
    corpus_mod.write_documents_jsonl(docs, docs_path, header)
    corpus_mod.write_vocabulary_tsv(vocab, vocab_path, header)
    print(f"{len(docs)} documents, {len(vocab)} terms -> {docs_path}, {vocab_path}")


# ---------------------------------------------------------------------------
# Topic-model commands


def _load_docs_vocab(docs_path: str, vocab_path: str):
    docs = corpus_mod.read_documents_jsonl(docs_path)
    vocab = corpus_mod.read_vocabulary_tsv(vocab_path)
    return docs, vocab


def cmd_fit_lda(config: RunConfig, args) -> None:
    docs, vocab = _load_docs_vocab(args.docs, args.vocab)
    encoded = lda.EncodedCorpus.from_documents(docs, vocab)
    hyper = lda.Hyperparams(
        num_topics=config.num_topics,
        scaling_factor=config.scaling_factor,
        beta=config.beta,
        sweeps=config.sweeps,
        burn_in=config.burn_in,
        seed=config.seed_sampler,
    )
    model, dists = lda.fit(encoded, hyper)
    header = artifact_header(config, "fit-lda")
    model_path = _out(config, f"{args.model_id}.npz")
    lda.save_model(model, model_path, vocab_ref=str(args.vocab),
                   extra_meta={"header": header})
    lda.write_distributions_tsv(
        dists, encoded.doc_ids, vocab.terms,
        _out(config, f"{args.model_id}.doc_topic.tsv"),
        _out(config, f"{args.model_id}.topic_word.tsv"),
        header,
    )
    print(f"fitted {hyper.num_topics} topics on {len(docs)} docs -> {model_path}")


def cmd_export_topics(config: RunConfig, args) -> None:
    docs, vocab = _load_docs_vocab(args.docs, args.vocab)
    model = lda.load_model(args.model)
    if model.doc_ids != [d.doc_id for d in docs]:
        raise DataError("document file does not match the model's corpus")
    dists = lda.estimate_distributions(model)
    views = [
        topics.build_topic_view(dists, vocab.terms, model.doc_ids, t)
        for t in range(model.num_topics)
    ]
    doc_texts = {d.doc_id: (d.text or " ".join(d.tokens)) for d in docs}
    sheet = topics.export_review_sheet(
        views, doc_texts, args.model_id, args.view,
        seed=derive_seed(config.seed_shuffle, args.model_id, args.view),
    )
    header = artifact_header(config, "export-topics")
    sheet_path = _out(config, f"{args.model_id}-{args.view}.tsv")
    map_path = _out(config, f"{args.model_id}-{args.view}.map.tsv")
    topics.write_review_sheet(sheet, sheet_path, map_path, header)
    print(f"review sheet -> {sheet_path}; blinding map -> {map_path}")


def cmd_import_scores(config: RunConfig, args) -> None:
    joined = topics.import_scores(args.sheet, args.map)
    header = artifact_header(config, "import-scores")
    scored_path = _out(config, f"scored-{args.model_id}.tsv")
    write_tsv(
        scored_path,
        ["topic_id", "description", "score"],
        ([tid, s.description, s.score] for tid, s in sorted(joined)),
        header,
    )
    summary = topics.summarize_model(
        [s for _, s in joined],
        model_id=args.model_id,
        scaling_label=args.scaling_label,
        document_type=args.document_type,
        view_mode=args.view,
    )
    summary_path = _out(config, f"summary-{args.model_id}.tsv")
    topics.write_summaries_tsv([summary], summary_path, header)
    print(f"{len(joined)} scores -> {scored_path}; summary -> {summary_path}")


def _read_many_summaries(paths) -> list[topics.ModelSummary]:
    summaries = []
    for p in paths:
        summaries.extend(topics.read_summaries_tsv(p))
    return summaries


def cmd_rank(config: RunConfig, args) -> None:
    ranked = topics.rank_models(_read_many_summaries(args.summaries))
    out = _out(config, "ranking.tsv")
    topics.write_summaries_tsv(ranked, out, artifact_header(config, "rank"))
    print(f"{len(ranked)} models ranked -> {out}")


def cmd_regress(config: RunConfig, args) -> None:
    summaries = _read_many_summaries(args.summaries)
    table = regress.crude_and_adjusted(summaries)
    out = _out(config, "regression.tsv")
    regress.write_crude_adjusted_tsv(table, out, artifact_header(config, "regress"))
    print(f"crude/adjusted table over {len(summaries)} models -> {out}")


# ---------------------------------------------------------------------------
# Labeling commands


def _parse_anatomy_paths(pairs, flag: str) -> dict[str, str]:
    out = {}
    for pair in pairs or []:
        anatomy, sep, path = pair.partition("=")
        if not sep or anatomy not in corpus_mod.ANATOMIES:
            raise ValidationError(f"{flag} expects wrist=PATH or ankle=PATH, got {pair!r}")
        out[anatomy] = path
    if not out:
        raise ValidationError(f"at least one {flag} is required")
    return out


def cmd_label(config: RunConfig, args) -> None:
    config.require_paths("label_defs")
    model_paths = _parse_anatomy_paths(args.model_for, "--model-for")
    docs_paths = _parse_anatomy_paths(args.docs_for, "--docs-for")
    if set(model_paths) != set(docs_paths):
        raise ValidationError("--model-for and --docs-for must cover the same anatomies")
    reports = experiments.ingest_corpus(config)
    defs = labels_mod.read_label_defs(config.label_defs)
    names = labels_mod.label_names(defs)
    per_anatomy = {}
    for anatomy, model_path in model_paths.items():
        model = lda.load_model(model_path)
        docs = corpus_mod.read_documents_jsonl(docs_paths[anatomy])
        if model.doc_ids != [d.doc_id for d in docs]:
            raise DataError(f"{docs_paths[anatomy]} does not match the model's corpus")
        per_anatomy[anatomy] = (lda.estimate_distributions(model), docs)
    report_units, conflicts = experiments.derive_report_labels(
        reports, defs, per_anatomy, config.topic_threshold
    )
    report_label_map = {u.unit_id: u.outcomes for u in report_units}
    report_to_images = {
        r.report_id: list(r.image_ids) for r in reports if r.report_id in report_label_map
    }
    image_label_map = labels_mod.propagate_to_images(report_label_map, report_to_images)
    image_units = [labels_mod.LabeledUnit(i, m) for i, m in sorted(image_label_map.items())]
    header = artifact_header(config, "label")
    labels_mod.write_unit_labels_tsv(report_units, names, _out(config, "labels_report.tsv"), header)
    labels_mod.write_unit_labels_tsv(image_units, names, _out(config, "labels_image.tsv"), header)
    write_tsv(
        _out(config, "mode_table.tsv"),
        ["label", "pos_documents", "neg_documents", "pos_images", "neg_images",
         "mode", "mode_frequency"],
        (experiments._mode_table_row(n, report_units, image_units) for n in names),
        header,
    )
    print(f"{len(report_units)} reports, {len(image_units)} images labeled -> "
          f"{_out(config, 'labels_image.tsv')}")


def cmd_split(config: RunConfig, args) -> None:
    _, units = labels_mod.read_unit_labels_tsv(args.labels)
    exam_of = None
    if config.split_by_exam:
        config.require_paths("corpus")
        reports = corpus_mod.read_reports_jsonl(config.corpus)
        exam_of = {img: r.exam_id for r in reports for img in r.image_ids}
    split = labels_mod.split_dataset(
        [u.unit_id for u in units],
        fractions=config.fractions(),
        seed=config.seed_split,
        exam_of=exam_of,
    )
    out = _out(config, "split.tsv")
    labels_mod.write_split_tsv(split, out, artifact_header(config, "split"))
    print(f"{len(split.assignments)} images split -> {out}")


# ---------------------------------------------------------------------------
# Classifier commands


def cmd_train(config: RunConfig, args) -> None:
    config.require_paths("features")
    features = classify.read_features_tsv(config.features)
    names, units = labels_mod.read_unit_labels_tsv(args.labels)
    split = labels_mod.read_split_tsv(args.split)
    model = classify.train_reference(
        features, {u.unit_id: u.outcomes for u in units}, split, names,
        epochs=config.epochs, learning_rate=config.learning_rate, seed=config.seed_sampler,
    )
    model.metadata["provenance"] = artifact_header(config, "train")
    out = _out(config, "classifier.json")
    classify.save_classifier(model, out)
    print(f"trained {len(model.weights)} label model(s) -> {out}")


def cmd_predict(config: RunConfig, args) -> None:
    config.require_paths("features")
    model = classify.load_classifier(args.classifier)
    features = classify.read_features_tsv(config.features)
    predictions = classify.predict(model, features)
    out = _out(config, "predictions.tsv")
    classify.write_predictions_tsv(predictions, out, artifact_header(config, "predict"))
    print(f"{len(predictions)} predictions -> {out}")


def _load_eval_inputs(config: RunConfig, labels_path, split_path):
    config.require_paths("predictions")
    predictions = classify.import_predictions(config.predictions)
    names, units = labels_mod.read_unit_labels_tsv(labels_path)
    image_label_map = {u.unit_id: u.outcomes for u in units}
    split = labels_mod.read_split_tsv(split_path) if split_path else None
    return predictions, names, units, image_label_map, split


def cmd_eval_base(config: RunConfig, args) -> None:
    predictions, _, units, image_label_map, split = _load_eval_inputs(
        config, args.labels, args.split
    )
    rows = experiments.base_accuracy_rows(
        predictions, image_label_map, units,
        split or {u.unit_id: args.split_name for u in units},
        args.split_name,
    )
    out = _out(config, "base_accuracy.tsv")
    write_tsv(
        out,
        ["label", "mode", "mode_frequency", "base_accuracy", "tp", "fp", "fn", "tn"],
        rows,
        artifact_header(config, "eval-base"),
    )
    print(f"base accuracy for {len(rows)} label(s) -> {out}")


def cmd_sample_review(config: RunConfig, args) -> None:
    written = experiments.run_experiment3(
        config, config.predictions or None, args.labels, args.split
    )
    print("\n".join(str(p) for p in written))


def cmd_import_gold(config: RunConfig, args) -> None:
    from radlabel.fileio import read_tsv

    annotations = []
    seen = set()
    for path in args.filled:
        for row in read_tsv(path, ["image_id", "label", "present"]):
            present = row["present"].strip().upper()
            if present not in ("T", "F"):
                raise DataError(
                    f"{path}: image {row['image_id']}: present must be T or F, "
                    f"got {row['present']!r}"
                )
            key = (row["image_id"], row["label"])
            if key in seen:
                raise DataError(f"{path}: duplicate gold annotation for {key}")
            seen.add(key)
            annotations.append(evaluation.GoldAnnotation(
                image_id=row["image_id"], label=row["label"],
                present=present == "T", reviewer=args.reviewer,
            ))
    if args.samples:
        missing = []
        for strata_path in sorted(Path(args.samples).glob("*.strata.tsv")):
            sample = evaluation.read_review_sample_strata(strata_path)
            for image_id in (*sample.hits, *sample.misses):
                if (image_id, sample.label) not in seen:
                    missing.append(f"{image_id}/{sample.label}")
        if missing:
            preview = ", ".join(missing[:5])
            raise DataError(
                f"gold annotations incomplete: {len(missing)} sampled image(s) "
                f"missing (first: {preview})"
            )
    out = _out(config, "gold.tsv")
    evaluation.write_gold_tsv(annotations, out, artifact_header(config, "import-gold"))
    print(f"{len(annotations)} gold annotations -> {out}")


def cmd_eval_true(config: RunConfig, args) -> None:
    out = experiments.experiment3_report(
        config, config.predictions or None, args.labels, args.split
    )
    print(f"true-accuracy report -> {out}")


# ---------------------------------------------------------------------------
# Experiment and synthetic-data commands


def cmd_synth(config: RunConfig, args) -> None:
    paths = experiments.run_synth(config)
    for name, path in paths.items():
        print(f"{name}: {path}")


def cmd_exp1(config: RunConfig, args) -> None:
    manifest = experiments.run_experiment1(config)
    print(f"review sheets exported; manifest -> {manifest}")


def cmd_exp1_report(config: RunConfig, args) -> None:
    paths = experiments.experiment1_report(config)
    for name, path in paths.items():
        print(f"{name}: {path if path else '(refused)'}")


def cmd_exp2(config: RunConfig, args) -> None:
    paths = experiments.run_experiment2(config)
    for name, path in paths.items():
        print(f"{name}: {path}")


def cmd_exp3(config: RunConfig, args) -> None:
    written = experiments.run_experiment3(config)
    print("\n".join(str(p) for p in written))


def cmd_exp3_report(config: RunConfig, args) -> None:
    out = experiments.experiment3_report(config)
    print(f"true-accuracy report -> {out}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radlabel",
        description="Weak-supervision labeling of radiograph exams from report text.",
    )
    parser.add_argument("--version", action="version", version=f"radlabel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="key-value config file")
        _add_config_flags(p)
        p.set_defaults(func=func)
        return p

    command("ingest", cmd_ingest, "scrub and filter a raw report corpus")
    p = command("preprocess", cmd_preprocess, "tokenize a corpus and build its vocabulary")
    p.add_argument("--granularity", choices=[corpus_mod.REPORT, corpus_mod.SENTENCE],
                   required=True)
    p.add_argument("--anatomy", choices=[*corpus_mod.ANATOMIES, "all"], default="all")
    p = command("fit-lda", cmd_fit_lda, "fit a collapsed-Gibbs topic model")
    p.add_argument("--docs", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--model-id", default="model")
    p = command("export-topics", cmd_export_topics, "export a blinded topic review sheet")
    p.add_argument("--model", required=True)
    p.add_argument("--docs", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--view", choices=list(topics.VIEW_MODES), required=True)
    p.add_argument("--model-id", required=True)
    p = command("import-scores", cmd_import_scores, "join reviewer scores to topics")
    p.add_argument("--sheet", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--model-id", required=True)
    p.add_argument("--scaling-label", required=True)
    p.add_argument("--document-type", required=True)
    p.add_argument("--view", choices=list(topics.VIEW_MODES), required=True)
    p = command("rank", cmd_rank, "rank model summaries")
    p.add_argument("--summaries", nargs="+", required=True)
    p = command("regress", cmd_regress, "crude/adjusted regression over summaries")
    p.add_argument("--summaries", nargs="+", required=True)
    p = command("label", cmd_label, "derive tri-state labels from fitted models")
    p.add_argument("--model-for", action="append", metavar="ANATOMY=MODEL.npz")
    p.add_argument("--docs-for", action="append", metavar="ANATOMY=DOCS.jsonl")
    p = command("split", cmd_split, "split labeled images into train/validation/test")
    p.add_argument("--labels", required=True)
    p = command("train", cmd_train, "train the reference classifier on weak labels")
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True)
    p = command("predict", cmd_predict, "score features with a trained classifier")
    p.add_argument("--classifier", required=True)
    p = command("eval-base", cmd_eval_base, "confusion and base accuracy vs weak labels")
    p.add_argument("--labels", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--split-name", default="test")
    p = command("sample-review", cmd_sample_review, "draw stratified review samples")
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True)
    p = command("import-gold", cmd_import_gold, "validate and import gold annotations")
    p.add_argument("--filled", nargs="+", required=True, help="filled review sheets")
    p.add_argument("--reviewer", default="reviewer")
    p.add_argument("--samples", default=None, help="review-sample dir to check coverage")
    p = command("eval-true", cmd_eval_true, "bootstrap true-accuracy report")
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True)
    command("synth", cmd_synth, "generate a synthetic corpus, features, and gold standard")
    command("exp1", cmd_exp1, "stage 1: fit the model grid, export review sheets")
    command("exp1-report", cmd_exp1_report, "stage 1 wrap-up: summaries, ranking, regression")
    command("exp2", cmd_exp2, "stage 2: labels, split, classifier, base accuracy")
    command("exp3", cmd_exp3, "stage 3: draw gold-review samples")
    command("exp3-report", cmd_exp3_report, "stage 3 wrap-up: bootstrap true accuracy")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        args.func(config, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
