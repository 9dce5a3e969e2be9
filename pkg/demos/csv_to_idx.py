"""Convert a CSV of flattened 28x28 digits into IDX train/test files.

Each row holds 784 pixel values and one label; ``--label-column`` says
whether the label comes first or last.  Rows are split per class into
train and test files with a seeded stratified split, written with the
standard MNIST file names so that ``data.root`` can point at the output
directory::

    python demos/csv_to_idx.py mnist_5k.csv.gz out/ --label-column last
"""
import argparse
import gzip
from pathlib import Path

import numpy as np

from daqc.datasets import Dataset, save_idx, stratified_split


def read_csv(path, label_column):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt") as fh:
        table = np.loadtxt(fh, delimiter=",", dtype=np.int64)
    if table.shape[1] != 785:
        raise SystemExit(f"{path}: expected 785 columns, found {table.shape[1]}")
    if label_column == "first":
        labels, pixels = table[:, 0], table[:, 1:]
    else:
        labels, pixels = table[:, -1], table[:, :-1]
    return Dataset(pixels.reshape(-1, 28, 28).astype(np.uint8), labels)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv")
    parser.add_argument("out")
    parser.add_argument("--label-column", choices=("first", "last"), default="first")
    parser.add_argument("--test-fraction", type=float, default=0.2)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    ds = read_csv(args.csv, args.label_column)
    train, test = stratified_split(ds, args.test_fraction, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_idx(train, out / "train-images-idx3-ubyte.gz", out / "train-labels-idx1-ubyte.gz")
    save_idx(test, out / "t10k-images-idx3-ubyte.gz", out / "t10k-labels-idx1-ubyte.gz")
    print(f"{len(train)} training and {len(test)} test images written to {out}")


if __name__ == "__main__":
    main()
