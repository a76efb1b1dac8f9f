"""Ordinary least squares on model summaries with dummy-coded factors.

The response is the mean review score. Predictors: the unique-description
count (numeric) and three categorical factors (scaling-factor group,
document type, review view), each dummy-coded against a fixed reference
level so reference rows read as 0.00. "Crude" fits each predictor block
alone (the intercept row's crude estimate is the intercept-only fit);
"adjusted" is the single multivariate fit of all blocks together.
Confidence intervals are t-based with the homoskedastic variance estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.linalg import solve_triangular

from radlabel.errors import ValidationError
from radlabel.fileio import write_tsv
from radlabel.topics import ModelSummary


@dataclass(frozen=True)
class Factor:
    name: str
    attribute: str  # ModelSummary attribute holding the level
    reference: str
    levels: tuple[str, ...]  # reference first


@dataclass(frozen=True)
class DesignSpec:
    response: str = "mean"
    numeric: tuple[str, ...] = ("unique_topic_labels",)
    factors: tuple[Factor, ...] = (
        Factor("scaling_factor", "scaling_group", "Large",
               ("Large", "Normal", "Small", "Tiny")),
        Factor("document_type", "document_type", "report", ("report", "sentences")),
        Factor("view", "view_mode", "both", ("both", "docs", "words")),
    )


@dataclass(frozen=True)
class TermEstimate:
    name: str
    coefficient: float
    ci_low: float
    ci_high: float
    se: float
    is_reference: bool = False


@dataclass
class FitResult:
    terms: list[TermEstimate]
    n: int
    p: int
    sigma2: float

    def term(self, name: str) -> TermEstimate:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)


def encode_design(
    summaries: Sequence[ModelSummary], spec: DesignSpec = DesignSpec()
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Expand summaries into (X, y, column names); X starts with an
    all-ones intercept and keeps the input row order."""
    if not summaries:
        raise ValidationError("no summaries to encode")
    names = ["Intercept"]
    columns = [np.ones(len(summaries))]
    for attr in spec.numeric:
        names.append(attr)
        columns.append(np.array([float(getattr(s, attr)) for s in summaries]))
    for factor in spec.factors:
        values = [str(getattr(s, factor.attribute)) for s in summaries]
        unknown = set(values) - set(factor.levels)
        if unknown:
            raise ValidationError(
                f"factor {factor.name!r}: unknown level(s) {sorted(unknown)}; "
                f"known levels are {list(factor.levels)}"
            )
        for level in factor.levels:
            if level == factor.reference:
                continue
            names.append(f"{factor.name}:{level}")
            columns.append(np.array([1.0 if v == level else 0.0 for v in values]))
    y = np.array([float(getattr(s, spec.response)) for s in summaries])
    return np.column_stack(columns), y, names


def ols_fit(X: np.ndarray, y: np.ndarray, names: Sequence[str] | None = None) -> FitResult:
    """Least squares via QR with t-based 95% intervals.

    Requires more rows than columns and full column rank; residuals are
    orthogonal to the design columns up to numerical precision.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise ValidationError(f"need more observations than parameters (n={n}, p={p})")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise ValidationError("design matrix is rank deficient")
    beta = solve_triangular(r, q.T @ y)
    residuals = y - X @ beta
    sigma2 = float(residuals @ residuals) / (n - p)
    r_inv = solve_triangular(r, np.eye(p))
    se = np.sqrt(sigma2 * np.sum(r_inv**2, axis=1))
    t_quantile = stats.t.ppf(0.975, n - p)
    if names is None:
        names = [f"x{i}" for i in range(p)]
    terms = [
        TermEstimate(
            name=names[i],
            coefficient=float(beta[i]),
            ci_low=float(beta[i] - t_quantile * se[i]),
            ci_high=float(beta[i] + t_quantile * se[i]),
            se=float(se[i]),
        )
        for i in range(p)
    ]
    return FitResult(terms=terms, n=n, p=p, sigma2=sigma2)


def _reference_term(factor: Factor) -> TermEstimate:
    return TermEstimate(
        name=f"{factor.name}:{factor.reference}",
        coefficient=0.0, ci_low=0.0, ci_high=0.0, se=0.0, is_reference=True,
    )


@dataclass
class CrudeAdjustedRow:
    variable: str
    crude: TermEstimate | None
    adjusted: TermEstimate | None
    is_header: bool = False  # factor caption rows carry no estimates


@dataclass
class CrudeAdjustedTable:
    rows: list[CrudeAdjustedRow]
    crude_fits: dict[str, FitResult]
    adjusted: FitResult

    def row(self, variable: str) -> CrudeAdjustedRow:
        for r in self.rows:
            if r.variable == variable:
                return r
        raise KeyError(variable)


def crude_and_adjusted(
    summaries: Sequence[ModelSummary], spec: DesignSpec = DesignSpec()
) -> CrudeAdjustedTable:
    """Univariate (per predictor block) and multivariate coefficient table.

    Each categorical block is fitted crude as a whole, so its per-level
    coefficients share the block's reference level. The crude intercept is
    the intercept-only fit (the grand mean with its t interval).
    """
    X, y, names = encode_design(summaries, spec)
    adjusted = ols_fit(X, y, names)
    n = len(y)
    crude_fits: dict[str, FitResult] = {
        "Intercept": ols_fit(np.ones((n, 1)), y, ["Intercept"])
    }
    column_of = {name: i for i, name in enumerate(names)}
    for attr in spec.numeric:
        cols = [0, column_of[attr]]
        crude_fits[attr] = ols_fit(X[:, cols], y, ["Intercept", attr])
    for factor in spec.factors:
        term_names = [f"{factor.name}:{lv}" for lv in factor.levels if lv != factor.reference]
        cols = [0] + [column_of[t] for t in term_names]
        crude_fits[factor.name] = ols_fit(X[:, cols], y, ["Intercept"] + term_names)

    rows = [CrudeAdjustedRow(
        "Intercept",
        crude_fits["Intercept"].term("Intercept"),
        adjusted.term("Intercept"),
    )]
    for attr in spec.numeric:
        rows.append(CrudeAdjustedRow(attr, crude_fits[attr].term(attr), adjusted.term(attr)))
    for factor in spec.factors:
        rows.append(CrudeAdjustedRow(factor.name, None, None, is_header=True))
        for level in factor.levels:
            term_name = f"{factor.name}:{level}"
            if level == factor.reference:
                ref = _reference_term(factor)
                rows.append(CrudeAdjustedRow(term_name, ref, ref))
            else:
                rows.append(CrudeAdjustedRow(
                    term_name,
                    crude_fits[factor.name].term(term_name),
                    adjusted.term(term_name),
                ))
    return CrudeAdjustedTable(rows=rows, crude_fits=crude_fits, adjusted=adjusted)


def _cell(term: TermEstimate | None) -> tuple[str, str]:
    if term is None:
        return "", ""
    if term.is_reference:
        return "0.00", "Reference"
    return f"{term.coefficient:.2f}", f"{term.ci_low:.2f} to {term.ci_high:.2f}"


def write_crude_adjusted_tsv(
    table: CrudeAdjustedTable, path: str | Path, header_lines: Sequence[str] = ()
) -> None:
    rows = []
    for row in table.rows:
        crude_coef, crude_ci = _cell(row.crude)
        adj_coef, adj_ci = _cell(row.adjusted)
        rows.append([row.variable, crude_coef, crude_ci, adj_coef, adj_ci])
    write_tsv(
        path,
        ["variable", "crude_coefficient", "crude_95ci", "adjusted_coefficient", "adjusted_95ci"],
        rows,
        header_lines,
    )
