import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radlabel.errors import ValidationError
from radlabel.regress import (
    DesignSpec,
    crude_and_adjusted,
    encode_design,
    ols_fit,
    write_crude_adjusted_tsv,
)
from radlabel.topics import ModelSummary, load_review_benchmark


def summary(mean, unique, scaling="Large (10)", doc="report", view="both", model_id="m"):
    return ModelSummary(model_id=model_id, scaling_label=scaling, document_type=doc,
                        view_mode=view, median=mean, mean=mean, sd=1.0, sem=0.1,
                        unique_topic_labels=unique)


@pytest.fixture(scope="module")
def benchmark():
    with pytest.warns(UserWarning):
        return load_review_benchmark()


# ---------------------------------------------------------------------------
# Design encoding


def test_design_shape_on_benchmark(benchmark):
    X, y, names = encode_design(benchmark)
    assert X.shape == (24, 8)
    assert names == [
        "Intercept", "unique_topic_labels",
        "scaling_factor:Normal", "scaling_factor:Small", "scaling_factor:Tiny",
        "document_type:sentences", "view:docs", "view:words",
    ]
    assert (X[:, 0] == 1).all()
    assert y[0] == 7.4


def test_reference_cell_is_all_zero(benchmark):
    X, _, names = encode_design(benchmark)
    row = next(
        i for i, s in enumerate(benchmark)
        if s.scaling_group == "Large" and s.document_type == "report"
        and s.view_mode == "both"
    )
    assert X[row, 2:].sum() == 0


def test_unknown_level_rejected():
    bad = summary(5.0, 20, scaling="Huge (99)")
    with pytest.raises(ValidationError, match="unknown level"):
        encode_design([bad])


def test_single_row_cannot_fit():
    X, y, names = encode_design([summary(5.0, 20)])
    with pytest.raises(ValidationError):
        ols_fit(X, y, names)


# ---------------------------------------------------------------------------
# OLS core


def test_exact_line():
    X = np.column_stack([np.ones(3), [0.0, 1.0, 2.0]])
    fit = ols_fit(X, np.array([1.0, 2.0, 3.0]), ["Intercept", "x"])
    assert fit.term("Intercept").coefficient == pytest.approx(1.0, abs=1e-12)
    assert fit.term("x").coefficient == pytest.approx(1.0, abs=1e-12)


def test_constant_response():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    fit = ols_fit(X, np.full(5, 3.0), ["Intercept", "x"])
    assert fit.term("x").coefficient == pytest.approx(0.0, abs=1e-12)
    assert fit.term("Intercept").coefficient == pytest.approx(3.0, abs=1e-12)


def test_rank_deficiency_rejected():
    X = np.column_stack([np.ones(6), np.arange(6.0), 2 * np.arange(6.0)])
    with pytest.raises(ValidationError, match="rank"):
        ols_fit(X, np.arange(6.0))


def test_ci_contains_coefficient():
    rng = np.random.default_rng(0)
    X = np.column_stack([np.ones(30), rng.normal(size=30)])
    yv = X @ np.array([2.0, -1.0]) + rng.normal(size=30)
    fit = ols_fit(X, yv)
    for term in fit.terms:
        assert term.ci_low <= term.coefficient <= term.ci_high


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_residuals_orthogonal_to_design(seed):
    rng = np.random.default_rng(seed)
    n, p = 20, 4
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    yv = rng.normal(size=n) * 3 + 1
    fit = ols_fit(X, yv)
    beta = np.array([t.coefficient for t in fit.terms])
    residuals = yv - X @ beta
    scale = max(np.abs(yv).max(), 1.0)
    assert np.abs(X.T @ residuals).max() <= 1e-8 * scale


def test_row_permutation_leaves_coefficients(benchmark):
    X, y, names = encode_design(benchmark)
    fit = ols_fit(X, y, names)
    rng = np.random.default_rng(7)
    order = rng.permutation(len(y))
    fit_shuffled = ols_fit(X[order], y[order], names)
    for a, b in zip(fit.terms, fit_shuffled.terms):
        assert a.coefficient == pytest.approx(b.coefficient, abs=1e-10)


def test_reference_level_change_preserves_predictions(benchmark):
    spec_a = DesignSpec()
    factors = list(spec_a.factors)
    swapped = factors[0].__class__(
        factors[0].name, factors[0].attribute, "Small",
        ("Small", "Large", "Normal", "Tiny"),
    )
    spec_b = DesignSpec(factors=(swapped, *factors[1:]))
    Xa, y, _ = encode_design(benchmark, spec_a)
    Xb, _, _ = encode_design(benchmark, spec_b)
    beta_a = np.array([t.coefficient for t in ols_fit(Xa, y).terms])
    beta_b = np.array([t.coefficient for t in ols_fit(Xb, y).terms])
    assert np.abs(Xa @ beta_a - Xb @ beta_b).max() <= 1e-9


# ---------------------------------------------------------------------------
# Crude and adjusted table


def test_single_numeric_predictor_crude_equals_adjusted():
    spec = DesignSpec(numeric=("unique_topic_labels",), factors=())
    rows = [summary(float(m), u, model_id=f"m{i}")
            for i, (m, u) in enumerate([(2, 10), (4, 20), (5, 24), (7, 33), (6, 30)])]
    table = crude_and_adjusted(rows, spec)
    row = table.row("unique_topic_labels")
    assert row.crude.coefficient == pytest.approx(row.adjusted.coefficient, abs=1e-12)


def test_balanced_two_factor_design_recovers_group_means():
    # 2x2 balanced, replicated: adjusted categorical effects equal the
    # hand-computed group-mean differences
    rows = []
    means = {("report", "both"): 2.0, ("report", "docs"): 3.0,
             ("sentences", "both"): 5.0, ("sentences", "docs"): 6.0}
    i = 0
    for (doc, view), m in means.items():
        for repeat in range(3):
            rows.append(summary(m, 0, doc=doc, view=view, model_id=f"m{i}"))
            i += 1
    spec = DesignSpec(
        numeric=(),
        factors=(
            DesignSpec().factors[1],  # document_type
            DesignSpec().factors[2].__class__("view", "view_mode", "both", ("both", "docs")),
        ),
    )
    table = crude_and_adjusted(rows, spec)
    assert table.row("document_type:sentences").adjusted.coefficient == pytest.approx(3.0, abs=1e-10)
    assert table.row("view:docs").adjusted.coefficient == pytest.approx(1.0, abs=1e-10)
    assert table.row("document_type:report").adjusted.is_reference


def test_crude_intercept_is_grand_mean(benchmark):
    table = crude_and_adjusted(benchmark)
    grand_mean = np.mean([s.mean for s in benchmark])
    assert table.row("Intercept").crude.coefficient == pytest.approx(grand_mean, abs=1e-12)


def test_reference_rows_render_as_reference(tmp_path, benchmark):
    table = crude_and_adjusted(benchmark)
    out = tmp_path / "table.tsv"
    write_crude_adjusted_tsv(table, out)
    text = out.read_text()
    assert "scaling_factor:Large\t0.00\tReference\t0.00\tReference" in text
    assert "document_type:report\t0.00\tReference" in text
