"""Retained terms (and optionally concept counts) per strategy and beta.

    python scripts/retention_table.py MATRIX.csv [--betas 0:2:0.25] [--concepts]

MATRIX.csv is a doc x term count matrix as written by ``crea-topics extract``.
Prints a markdown table with one row per beta and one column per strategy.
"""

import argparse

import numpy as np

from crea_topics.binarize import BinarizationSpec, Strategy, binarize_matrix, retained_terms, saturation_beta
from crea_topics.errors import ResourceLimitError
from crea_topics.fca import enumerate_concepts
from crea_topics.term_extraction import TermFrequencyMatrix


def parse_betas(text: str) -> list[float]:
    if ":" in text:
        start, stop, step = (float(p) for p in text.split(":"))
        return [round(b, 6) for b in np.arange(start, stop + step / 2, step)]
    return [float(b) for b in text.split(",")]


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("matrix")
    p.add_argument("--betas", default="0:2:0.25")
    p.add_argument("--concepts", action="store_true", help="also enumerate concepts (slow on large contexts)")
    p.add_argument("--ceiling", type=int, default=1_000_000)
    args = p.parse_args()

    matrix = TermFrequencyMatrix.from_csv(args.matrix).drop_empty_columns()
    strategies = [Strategy.DIRECT, Strategy.MEDIUM, Strategy.HIGH, Strategy.LOW]
    print(f"{matrix.shape[0]} documents, {matrix.shape[1]} terms; "
          f"Medium saturates at beta >= {saturation_beta(matrix):.4f}\n")
    print("| beta | " + " | ".join(s.value for s in strategies) + " |")
    print("|---" * (len(strategies) + 1) + "|")
    for beta in parse_betas(args.betas):
        cells = []
        for s in strategies:
            n, ctx = retained_terms(binarize_matrix(matrix, BinarizationSpec(s, beta)))
            cell = str(n)
            if args.concepts and n:
                try:
                    cell += f" / {len(enumerate_concepts(ctx, ceiling=args.ceiling))}"
                except ResourceLimitError:
                    cell += " / >ceiling"
            cells.append(cell)
        print(f"| {beta:.2f} | " + " | ".join(cells) + " |")


if __name__ == "__main__":
    main()
