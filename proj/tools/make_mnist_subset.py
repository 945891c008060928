#!/usr/bin/env python3
"""Build the bundled MNIST subset (data/mnist5k) as gzipped IDX files.

The source is the 5000-sample MNIST extract shipped inside the mlxtend wheel
(500 images per digit). Each digit is split 400 train / 100 test, keeping the
original sample order.

    python3 tools/make_mnist_subset.py [--wheel path/to/mlxtend.whl] [--out data/mnist5k]
"""
import argparse
import glob
import gzip
import io
import struct
import subprocess
import tempfile
import zipfile
from pathlib import Path

import numpy as np


def locate_wheel(explicit):
    if explicit:
        return explicit
    tmp = tempfile.mkdtemp()
    subprocess.run(["pip", "download", "--no-deps", "-q", "mlxtend", "-d", tmp], check=True)
    return glob.glob(f"{tmp}/mlxtend-*.whl")[0]


def write_idx(path, array, magic):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + array.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel")
    ap.add_argument("--out", default="data/mnist5k")
    ap.add_argument("--train-per-class", type=int, default=400)
    args = ap.parse_args()

    wheel = zipfile.ZipFile(locate_wheel(args.wheel))
    raw = gzip.decompress(wheel.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    table = np.loadtxt(io.StringIO(raw), delimiter=",")
    pixels, labels = table[:, :-1].astype(np.uint8), table[:, -1].astype(np.uint8)

    train_idx, test_idx = [], []
    for digit in range(10):
        rows = np.flatnonzero(labels == digit)
        train_idx.extend(rows[: args.train_per_class])
        test_idx.extend(rows[args.train_per_class:])
    train_idx, test_idx = np.sort(train_idx), np.sort(test_idx)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, idx in (("train", train_idx), ("t10k", test_idx)):
        write_idx(out / f"{name}-images-idx3-ubyte.gz", pixels[idx].reshape(-1, 28, 28), 0x00000803)
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", labels[idx], 0x00000801)
        print(f"{name}: {len(idx)} samples")


if __name__ == "__main__":
    main()
