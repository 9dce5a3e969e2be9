"""Convert a MedMNIST-style ``.npz`` archive into IDX files.

The archive holds ``{train,val,test}_images`` (``count x 28 x 28`` bytes)
and ``{train,val,test}_labels`` (``count x 1``).  Each split becomes a pair
of IDX files named ``<split>-images-idx3-ubyte.gz`` and
``<split>-labels-idx1-ubyte.gz``, so the published train/val/test split is
kept as is::

    python demos/npz_to_idx.py pneumoniamnist.npz data/pneumoniamnist
"""
import argparse
from pathlib import Path

import numpy as np

from daqc.datasets import write_idx


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("npz")
    parser.add_argument("out")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with np.load(args.npz) as archive:
        for split in ("train", "val", "test"):
            images = archive[f"{split}_images"]
            labels = archive[f"{split}_labels"].reshape(-1)
            if images.shape[1:] != (28, 28):
                raise SystemExit(f"{split}_images has shape {images.shape}; expected 28x28 grayscale")
            write_idx(out / f"{split}-images-idx3-ubyte.gz", images)
            write_idx(out / f"{split}-labels-idx1-ubyte.gz", labels)
            print(f"{split}: {len(labels)} samples")


if __name__ == "__main__":
    main()
