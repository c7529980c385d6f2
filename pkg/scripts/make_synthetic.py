#!/usr/bin/env python3
"""Write the seeded 2-D Gaussian-mixture benchmark data as CSV files.

Produces <name>.train.csv and <name>.test.csv (label in the last column) plus
a Monte-Carlo estimate of the problem's Bayes error, so end-to-end results
have a known reference point.
"""

import argparse
from pathlib import Path

from cellsvm.synthetic import bayes_error_mc, gaussian_mixture


def write_csv(dataset, path: Path):
    with path.open("w", encoding="utf-8") as fh:
        for x, y in zip(dataset.samples, dataset.labels):
            fh.write(",".join(repr(float(v)) for v in x) + "," + repr(float(y)) + "\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="data", help="output directory")
    parser.add_argument("--name", default="mixture", help="dataset base name")
    parser.add_argument("--n-train", type=int, default=2000)
    parser.add_argument("--n-test", type=int, default=10000)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--bayes-mc", type=int, default=200000,
                        help="Monte-Carlo sample count for the Bayes error estimate")
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = gaussian_mixture(args.n_train, seed=args.seed)
    test = gaussian_mixture(args.n_test, seed=args.seed + 1)
    train_path = out / f"{args.name}.train.csv"
    test_path = out / f"{args.name}.test.csv"
    write_csv(train, train_path)
    write_csv(test, test_path)
    bayes = bayes_error_mc(args.bayes_mc, seed=123)
    print(f"wrote {train_path} (n={train.n}) and {test_path} (n={test.n})")
    print(f"Bayes error (MC, {args.bayes_mc} samples): {bayes:.4f}")


if __name__ == "__main__":
    main()
