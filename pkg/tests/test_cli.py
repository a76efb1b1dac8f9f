"""End-to-end command tests: every subcommand over a small synthetic world."""

import json

import numpy as np
import pytest

from radlabel import lda, simulate, topics
from radlabel.cli import main
from radlabel.fileio import read_tsv
from radlabel.labels import write_label_defs


def run(*argv):
    return main([str(a) for a in argv])


COMMON = ["--sweeps", 30, "--burn-in", 5, "--min-count", 3, "--num-topics", 40]


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Synthetic world plus the full granular command chain, run once."""
    ws = tmp_path_factory.mktemp("cliws")
    out = ws / "out"
    assert run("synth", "--output-dir", out, "--synth-exams", 220) == 0
    corpus = out / "corpus.jsonl"
    base = ["--output-dir", out, "--corpus", corpus, *COMMON]

    assert run("ingest", *base) == 0
    for anatomy in ("wrist", "ankle"):
        assert run("preprocess", *base, "--granularity", "sentence",
                   "--anatomy", anatomy) == 0
        assert run("fit-lda", *base,
                   "--docs", out / f"docs-sentence-{anatomy}.jsonl",
                   "--vocab", out / f"vocab-sentence-{anatomy}.tsv",
                   "--model-id", f"lda-{anatomy}") == 0

    # author label definitions from the fitted wrist/ankle topics
    from radlabel.corpus import read_vocabulary_tsv

    defs = []
    for anatomy in ("wrist", "ankle"):
        model = lda.load_model(out / f"lda-{anatomy}.npz")
        vocab = read_vocabulary_tsv(out / f"vocab-sentence-{anatomy}.tsv")
        dists = lda.estimate_distributions(model)
        defs.extend(simulate.suggest_label_defs(dists, vocab.terms, anatomy))
    defs_path = ws / "defs.tsv"
    write_label_defs(defs, defs_path)

    assert run("label", *base, "--label-defs", defs_path,
               "--model-for", f"wrist={out / 'lda-wrist.npz'}",
               "--model-for", f"ankle={out / 'lda-ankle.npz'}",
               "--docs-for", f"wrist={out / 'docs-sentence-wrist.jsonl'}",
               "--docs-for", f"ankle={out / 'docs-sentence-ankle.jsonl'}") == 0
    assert run("split", *base, "--labels", out / "labels_image.tsv") == 0
    assert run("train", *base, "--features", out / "features.tsv",
               "--labels", out / "labels_image.tsv",
               "--split", out / "split.tsv", "--epochs", 120) == 0
    assert run("predict", *base, "--features", out / "features.tsv",
               "--classifier", out / "classifier.json") == 0
    assert run("eval-base", *base, "--predictions", out / "predictions.tsv",
               "--labels", out / "labels_image.tsv",
               "--split", out / "split.tsv") == 0
    assert run("sample-review", *base, "--predictions", out / "predictions.tsv",
               "--labels", out / "labels_image.tsv",
               "--split", out / "split.tsv",
               "--n-per-stratum", 5, "--review-labels", "fracture") == 0
    return ws


def test_synth_outputs_exist(workspace):
    out = workspace / "out"
    for name in ("corpus.jsonl", "features.tsv", "gold.tsv"):
        assert (out / name).exists()


def test_artifacts_embed_config_hash_and_seeds(workspace):
    text = (workspace / "out" / "labels_image.tsv").read_text()
    head = text.splitlines()[:4]
    assert any("config_hash=" in line for line in head)
    assert any("seeds " in line for line in head)


def test_labels_cover_both_anatomies(workspace):
    rows = read_tsv(workspace / "out" / "labels_report.tsv")
    assert {"fracture", "implant"} <= set(rows[0].keys()) - {"unit_id"}
    # wrist-only label is MISSING on every ankle report
    corpus_rows = [
        json.loads(line)
        for line in (workspace / "out" / "corpus.jsonl").read_text().splitlines()
        if line.strip() and not line.startswith("#")
    ]
    anatomy_of = {r["report_id"]: r["anatomy"] for r in corpus_rows}
    if "arthrosis" in rows[0]:
        for row in rows:
            if anatomy_of[row["unit_id"]] == "ankle":
                assert row["arthrosis"] == "M"


def test_mode_table_shape(workspace):
    rows = read_tsv(workspace / "out" / "mode_table.tsv")
    assert list(rows[0].keys()) == [
        "label", "pos_documents", "neg_documents", "pos_images", "neg_images",
        "mode", "mode_frequency",
    ]


def test_eval_base_report(workspace):
    rows = read_tsv(workspace / "out" / "base_accuracy.tsv")
    for row in rows:
        assert 0.0 <= float(row["base_accuracy"]) <= 1.0
        total = sum(int(row[k]) for k in ("tp", "fp", "fn", "tn"))
        assert total > 0


def test_review_samples_blinded(workspace):
    sheet = (workspace / "out" / "exp3" / "review" / "fracture.sheet.tsv").read_text()
    assert "stratum" not in sheet
    strata = read_tsv(workspace / "out" / "exp3" / "review" / "fracture.strata.tsv")
    assert {r["stratum"] for r in strata} == {"hit", "miss"}
    assert len(strata) == 10


def _fill_gold_from_synth(workspace, drop_one=False):
    out = workspace / "out"
    gold_rows = read_tsv(out / "gold.tsv", ["image_id", "label", "present", "reviewer"])
    gold = {(r["image_id"], r["label"]): r["present"] for r in gold_rows}
    sheet_rows = read_tsv(out / "exp3" / "review" / "fracture.sheet.tsv",
                          ["image_id", "label", "present"])
    if drop_one:
        sheet_rows = sheet_rows[1:]
    filled = workspace / ("filled_partial.tsv" if drop_one else "filled.tsv")
    lines = ["image_id\tlabel\tpresent"]
    for row in sheet_rows:
        lines.append(f"{row['image_id']}\t{row['label']}\t{gold[(row['image_id'], row['label'])]}")
    filled.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return filled


def test_import_gold_rejects_incomplete(workspace):
    filled = _fill_gold_from_synth(workspace, drop_one=True)
    code = run("import-gold", "--output-dir", workspace / "out",
               "--filled", filled, "--samples", workspace / "out" / "exp3" / "review")
    assert code == 3


def test_import_gold_and_eval_true(workspace):
    out = workspace / "out"
    filled = _fill_gold_from_synth(workspace)
    assert run("import-gold", "--output-dir", out, "--filled", filled,
               "--samples", out / "exp3" / "review") == 0
    assert run("eval-true", "--output-dir", out,
               "--predictions", out / "predictions.tsv",
               "--gold", out / "gold.tsv",
               "--labels", out / "labels_image.tsv",
               "--split", out / "split.tsv",
               "--resamples", 2000, "--n-per-stratum", 5) == 0
    rows = read_tsv(out / "exp3" / "true_accuracy.tsv")
    assert len(rows) == 1
    row = rows[0]
    assert row["label"] == "fracture"
    assert float(row["ci_2.5"]) <= float(row["true_accuracy"]) <= float(row["ci_97.5"])


def test_import_scores_and_rank(workspace, tmp_path):
    out = workspace / "out"
    assert run("export-topics", "--output-dir", out, "--corpus", out / "corpus.jsonl",
               "--model", out / "lda-wrist.npz",
               "--docs", out / "docs-sentence-wrist.jsonl",
               "--vocab", out / "vocab-sentence-wrist.tsv",
               "--view", "both", "--model-id", "wrist-demo") == 0
    sheet_path = out / "wrist-demo-both.tsv"
    rows = read_tsv(sheet_path, ["sheet_position", "content", "description", "score"])
    rng = np.random.default_rng(1)
    lines = ["sheet_position\tcontent\tdescription\tscore"]
    for row in rows:
        score = int(rng.integers(0, 11))
        desc = "" if score == 0 else f"theme {rng.integers(0, 6)}"
        lines.append(f"{row['sheet_position']}\t{row['content']}\t{desc}\t{score}")
    scored = tmp_path / "scored.tsv"
    scored.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert run("import-scores", "--output-dir", out,
               "--sheet", scored, "--map", out / "wrist-demo-both.map.tsv",
               "--model-id", "wrist-demo", "--scaling-label", "Small (0.1)",
               "--document-type", "sentences", "--view", "both") == 0
    summary = read_tsv(out / "summary-wrist-demo.tsv")
    assert len(summary) == 1
    assert run("rank", "--output-dir", out,
               "--summaries", out / "summary-wrist-demo.tsv") == 0


def test_regress_command_on_benchmark(workspace, tmp_path):
    with pytest.warns(UserWarning):
        benchmark = topics.load_review_benchmark()
    summaries = tmp_path / "summaries.tsv"
    topics.write_summaries_tsv(benchmark, summaries)
    out = tmp_path / "regout"
    assert run("regress", "--output-dir", out, "--summaries", summaries) == 0
    rows = read_tsv(out / "regression.tsv")
    unique = next(r for r in rows if r["variable"] == "unique_topic_labels")
    assert float(unique["crude_coefficient"]) == pytest.approx(0.17, abs=0.05)


def test_exp1_default_grid_exports_24_sheets(workspace, tmp_path):
    out = tmp_path / "exp1ws"
    corpus = workspace / "out" / "corpus.jsonl"
    assert run("exp1", "--output-dir", out, "--corpus", corpus,
               "--exp1-num-topics", 8, "--sweeps", 8, "--burn-in", 2,
               "--min-count", 2) == 0
    sheets = sorted((out / "exp1" / "sheets").glob("*.tsv"))
    assert len(sheets) == 24
    manifest = read_tsv(out / "exp1" / "manifest.tsv")
    assert len(manifest) == 24
    assert len({r["model_id"] for r in manifest}) == 8


def test_validation_error_exit_code(tmp_path):
    assert run("exp2", "--output-dir", tmp_path / "x") == 2


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json}\n", encoding="utf-8")
    assert run("ingest", "--output-dir", tmp_path, "--corpus", bad) == 3


def test_missing_path_exit_code(tmp_path):
    assert run("ingest", "--output-dir", tmp_path,
               "--corpus", tmp_path / "nope.jsonl") == 2


def test_split_rerun_is_byte_identical(workspace, tmp_path):
    out = workspace / "out"
    first = tmp_path / "a"
    second = tmp_path / "b"
    for target in (first, second):
        assert run("split", "--output-dir", target,
                   "--labels", out / "labels_image.tsv", "--seed-split", 77) == 0
    assert (first / "split.tsv").read_bytes() == (second / "split.tsv").read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("synth_exams = 12\nseed_synth = 9\noutput_dir = unused\n",
                   encoding="utf-8")
    out = tmp_path / "world"
    assert run("synth", "--config", cfg, "--output-dir", out) == 0
    rows = [
        line for line in (out / "corpus.jsonl").read_text().splitlines()
        if line.strip() and not line.startswith("#")
    ]
    assert len(rows) == 12


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("nonsense = 1\n", encoding="utf-8")
    assert run("synth", "--config", cfg, "--output-dir", tmp_path / "o") == 2


def test_exp1_report_partial_scores_refuses_regression(workspace, tmp_path, capsys):
    out = tmp_path / "exp1partial"
    corpus = workspace / "out" / "corpus.jsonl"
    assert run("exp1", "--output-dir", out, "--corpus", corpus,
               "--exp1-num-topics", 6, "--sweeps", 6, "--burn-in", 1,
               "--min-count", 2) == 0
    base = out / "exp1"
    (base / "scored").mkdir()
    # score a single model's three sheets only
    manifest = read_tsv(base / "manifest.tsv")
    one_model = manifest[0]["model_id"]
    for row in manifest:
        if row["model_id"] != one_model:
            continue
        sheet = read_tsv(base / "sheets" / row["sheet_file"])
        lines = ["sheet_position\tcontent\tdescription\tscore"]
        for entry in sheet:
            lines.append(f"{entry['sheet_position']}\t{entry['content']}\ttheme\t5")
        (base / "scored" / row["sheet_file"]).write_text("\n".join(lines) + "\n",
                                                         encoding="utf-8")
    assert run("exp1-report", "--output-dir", out, "--corpus", corpus) == 0
    err = capsys.readouterr().err
    assert "regression refused" in err
    assert (base / "summaries.tsv").exists()
    assert len(read_tsv(base / "summaries.tsv")) == 3
    assert not (base / "regression.tsv").exists()
