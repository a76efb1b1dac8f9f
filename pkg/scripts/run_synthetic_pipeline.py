#!/usr/bin/env python3
"""All three experiment stages on a synthetic corpus, end to end.

The two human steps are simulated: topic sheets are scored by a
rule-based reviewer stand-in, and gold annotations come from the
synthetic ground truth. Everything is seeded, so reruns reproduce the
same files byte for byte.

Usage: python scripts/run_synthetic_pipeline.py --out work [--exams 400]
"""

import argparse
from pathlib import Path

from radlabel import corpus as corpus_mod
from radlabel import experiments, lda, simulate
from radlabel.config import RunConfig, derive_seed
from radlabel.fileio import read_tsv, write_tsv
from radlabel.labels import write_label_defs


def simulated_reviewer(content: str) -> tuple[str, int]:
    """Deterministic stand-in for the blinded radiologist: label a topic by
    marker words and score it by how cleanly it matches one concept."""
    lowered = content.lower()
    matched = []
    for concept in simulate.default_concepts():
        has_pos = any(m in lowered for m in concept.positive_markers)
        has_neg = any(m in lowered for m in concept.negative_markers)
        if has_pos and has_neg:
            matched.append(f"no {concept.name}")
        elif has_pos:
            matched.append(concept.name)
    if not matched:
        return "", 0
    if len(matched) == 1:
        return matched[0], 8
    return " / ".join(sorted(matched)), 3


def score_exported_sheets(out: Path) -> None:
    base = out / "exp1"
    (base / "scored").mkdir(exist_ok=True)
    for row in read_tsv(base / "manifest.tsv"):
        sheet = read_tsv(base / "sheets" / row["sheet_file"])
        scored_rows = []
        for entry in sheet:
            description, score = simulated_reviewer(entry["content"])
            scored_rows.append([entry["sheet_position"], entry["content"],
                                description, score])
        write_tsv(base / "scored" / row["sheet_file"],
                  ["sheet_position", "content", "description", "score"], scored_rows)


def author_label_defs(config: RunConfig, defs_path: Path) -> None:
    """The stage-2 human step: read each anatomy's fitted topics and map
    them to labels (here via the synthetic concepts' marker words)."""
    rules = experiments.load_rules(config)
    stemmer = experiments.load_stemmer(config)
    reports = experiments.ingest_corpus(config)
    defs = []
    for anatomy in corpus_mod.ANATOMIES:
        anatomy_reports = [r for r in reports if r.anatomy == anatomy]
        vocab, docs = experiments.build_documents(
            anatomy_reports, corpus_mod.SENTENCE, rules, stemmer, config
        )
        encoded = lda.EncodedCorpus.from_documents(docs, vocab)
        hyper = lda.Hyperparams(
            num_topics=config.num_topics, scaling_factor=config.scaling_factor,
            beta=config.beta, sweeps=config.sweeps, burn_in=config.burn_in,
            seed=derive_seed(config.seed_sampler, "exp2", anatomy),
        )
        _, dists = lda.fit(encoded, hyper)
        defs.extend(simulate.suggest_label_defs(dists, vocab.terms, anatomy))
    write_label_defs(defs, defs_path)


def review_gold_from_truth(out: Path, truth_gold: str) -> Path:
    """Fill the blinded sheets from the synthetic truth and import them as
    the reviewed gold standard (the stage-3 human step)."""
    gold_rows = read_tsv(truth_gold, ["image_id", "label", "present", "reviewer"])
    gold = {(r["image_id"], r["label"]): r["present"] for r in gold_rows}
    reviewed = []
    for sheet_path in sorted((out / "exp3" / "review").glob("*.sheet.tsv")):
        rows = read_tsv(sheet_path, ["image_id", "label", "present"])
        filled = [[r["image_id"], r["label"], gold[(r["image_id"], r["label"])], "truth"]
                  for r in rows]
        write_tsv(sheet_path.with_suffix(".filled.tsv"),
                  ["image_id", "label", "present", "reviewer"], filled)
        reviewed.extend(filled)
    gold_path = out / "gold_reviewed.tsv"
    write_tsv(gold_path, ["image_id", "label", "present", "reviewer"], reviewed)
    return gold_path


def show(path: Path) -> None:
    print(f"\n--- {path} ---")
    for line in path.read_text().splitlines():
        if not line.startswith("#"):
            print(line)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="work", help="output directory")
    parser.add_argument("--exams", type=int, default=400)
    parser.add_argument("--topics", type=int, default=60)
    parser.add_argument("--sweeps", type=int, default=150)
    args = parser.parse_args()

    out = Path(args.out)
    config = RunConfig(
        output_dir=str(out), synth_exams=args.exams,
        num_topics=args.topics, sweeps=args.sweeps, burn_in=30,
        min_count=3, exp1_num_topics=min(args.topics, 30),
        n_per_stratum=10, resamples=5000, review_labels="fracture,implant",
    )

    print("== synthetic world ==")
    paths = experiments.run_synth(config)
    config.corpus = str(paths["corpus"])
    config.features = str(paths["features"])
    config.gold = str(paths["gold"])

    print("== experiment 1: model grid and blinded review ==")
    experiments.run_experiment1(config)
    score_exported_sheets(out)
    stage1 = experiments.experiment1_report(config)
    show(stage1["ranking"])
    if stage1["regression"]:
        show(stage1["regression"])

    print("\n== experiment 2: labels, split, reference classifier ==")
    defs_path = out / "label_defs.tsv"
    author_label_defs(config, defs_path)
    config.label_defs = str(defs_path)
    stage2 = experiments.run_experiment2(config)
    show(stage2["mode_table"])
    show(stage2["base_accuracy"])

    print("\n== experiment 3: gold review and true accuracy ==")
    experiments.run_experiment3(config)
    config.gold = str(review_gold_from_truth(out, config.gold))
    report = experiments.experiment3_report(config)
    show(report)


if __name__ == "__main__":
    main()
