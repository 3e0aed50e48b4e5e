#!/usr/bin/env python3
"""Build an MNIST-format digit dataset from scikit-learn's bundled digits.

The 8x8 images are upscaled to 24x24 (3x nearest neighbor), padded to 28x28
and written as big-endian IDX files with the standard MNIST filenames, so the
result can stand in for MNIST wherever the real files are unavailable.

Usage: make_digits_idx.py <output-dir>
"""
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_idx_images(path: Path, images: np.ndarray) -> None:
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "data/digits")
    out.mkdir(parents=True, exist_ok=True)

    digits = load_digits()
    imgs = digits.images  # (1797, 8, 8), values 0..16
    labels = digits.target.astype(np.uint8)

    imgs = np.round(imgs * (255.0 / 16.0)).astype(np.uint8)
    imgs = np.kron(imgs, np.ones((3, 3), dtype=np.uint8))  # 8x8 -> 24x24
    imgs = np.pad(imgs, ((0, 0), (2, 2), (2, 2)))  # -> 28x28

    # Deterministic shuffle so the train/eval split mixes all writers.
    rng = np.random.RandomState(0)
    order = rng.permutation(len(imgs))
    imgs, labels = imgs[order], labels[order]

    n_train = 1497
    write_idx_images(out / "train-images-idx3-ubyte", imgs[:n_train])
    write_idx_labels(out / "train-labels-idx1-ubyte", labels[:n_train])
    write_idx_images(out / "t10k-images-idx3-ubyte", imgs[n_train:])
    write_idx_labels(out / "t10k-labels-idx1-ubyte", labels[n_train:])
    print(f"wrote {n_train} train / {len(imgs) - n_train} eval images to {out}")


if __name__ == "__main__":
    main()
