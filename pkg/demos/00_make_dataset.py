#!/usr/bin/env python3
"""Generate the synthetic handwritten-digit dataset in MNIST IDX layout.

Writes train/test image+label files under demos/data/ (about 50 MB at full
size).  Pass --small for a quick 4096/1024 split that keeps the other demos
snappy.  Real MNIST IDX files can be dropped in instead; every tool in this
repository reads them through the same loader.
"""

import argparse
from pathlib import Path

from edgepool.datasets import load_dataset, write_synthetic_digits


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(Path(__file__).parent / "data"))
    parser.add_argument("--small", action="store_true",
                        help="4096 train / 1024 test instead of 60000/10000")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    n_train, n_test = (4096, 1024) if args.small else (60000, 10000)
    print(f"writing {n_train} train / {n_test} test samples to {args.out} ...")
    paths = write_synthetic_digits(args.out, n_train=n_train, n_test=n_test,
                                   seed=args.seed)
    train = load_dataset(paths["train_images"], paths["train_labels"])
    print(f"done: {len(train)} train samples, pixel range "
          f"[{train.images.min():.3f}, {train.images.max():.3f}]")
    for name, path in paths.items():
        print(f"  {name}: {path}")


if __name__ == "__main__":
    main()
