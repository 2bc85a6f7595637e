"""
Write the built-in synthetic datasets as CSV pairs.

Each fixture lands in <out>/<name>/expression.csv and metadata.csv, the
layout `protlab run --dataset <dir>` accepts.

Usage:
    uv run python scripts/generate_fixtures.py --out fixtures --seed 0
"""

from __future__ import annotations

import argparse
from pathlib import Path

from protlab.dataset.synthetic import write_toy_cohort, write_toy_pbmc

WRITERS = {
    "toy-pbmc": write_toy_pbmc,
    "toy-cohort": write_toy_cohort,
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("fixtures"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--only", choices=sorted(WRITERS), help="Write a single fixture")
    args = parser.parse_args()

    for name, writer in WRITERS.items():
        if args.only and name != args.only:
            continue
        expr_path, meta_path = writer(args.out / name, seed=args.seed)
        print(f"{name}: {expr_path} + {meta_path}")


if __name__ == "__main__":
    main()
