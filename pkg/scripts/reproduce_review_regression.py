#!/usr/bin/env python3
"""Recompute the crude/adjusted regression from the bundled 24-model
blinded-review benchmark and print it side by side.

Usage: python scripts/reproduce_review_regression.py [--out regression.tsv]
"""

import argparse
import warnings

from radlabel.regress import crude_and_adjusted, write_crude_adjusted_tsv
from radlabel.topics import load_review_benchmark


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None, help="optional TSV output path")
    args = parser.parse_args()

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # the benchmark's known label quirk
        benchmark = load_review_benchmark()
    table = crude_and_adjusted(benchmark)

    print(f"{'variable':<28} {'crude':>8} {'95% CI':>18} {'adjusted':>9} {'95% CI':>18}")
    for row in table.rows:
        if row.is_header:
            print(row.variable)
            continue

        def cell(term):
            if term is None:
                return "", ""
            if term.is_reference:
                return "0.00", "Reference"
            return f"{term.coefficient:.2f}", f"{term.ci_low:.2f} to {term.ci_high:.2f}"

        crude_coef, crude_ci = cell(row.crude)
        adj_coef, adj_ci = cell(row.adjusted)
        name = row.variable if ":" not in row.variable else "  " + row.variable.split(":", 1)[1]
        print(f"{name:<28} {crude_coef:>8} {crude_ci:>18} {adj_coef:>9} {adj_ci:>18}")

    if args.out:
        write_crude_adjusted_tsv(table, args.out)
        print(f"\nwritten to {args.out}")


if __name__ == "__main__":
    main()
