"""Writers for small synthetic files in the on-disk dataset formats."""

import gzip
import os
import struct

import numpy as np


def _open(path, mode):
    return gzip.open(path, mode) if path.endswith(".gz") else open(path, mode)


def write_isolet(root, per_class=(4, 2), seed=0, classes=26):
    """Class-clustered rows so a classifier has something to learn."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-1, 1, size=(classes, 617))
    for name, k in zip(("isolet1+2+3+4.data", "isolet5.data"), per_class):
        with open(os.path.join(root, name), "w") as fh:
            for c in range(classes):
                for _ in range(k):
                    row = centers[c] + rng.normal(0, 0.1, 617)
                    fh.write(", ".join(f"{v:.4f}" for v in row) + f", {c + 1}.\n")


def idx_bytes(arr, magic):
    arr = np.asarray(arr, dtype=np.uint8)
    return struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()


def write_fmnist(root, sizes=(60, 20), seed=0, gz=False):
    rng = np.random.default_rng(seed)
    protos = rng.integers(0, 256, size=(10, 28, 28))
    names = {"train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
             "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")}
    for (split, (img, lab)), n in zip(names.items(), sizes):
        y = np.arange(n) % 10
        X = np.clip(protos[y] + rng.integers(-20, 21, size=(n, 28, 28)), 0, 255)
        suffix = ".gz" if gz else ""
        with _open(os.path.join(root, img + suffix), "wb") as fh:
            fh.write(idx_bytes(X, 2051))
        with _open(os.path.join(root, lab + suffix), "wb") as fh:
            fh.write(idx_bytes(y, 2049))


def write_cora(root, per_class=30, classes=3, n_words=40, seed=0, dangling=2):
    """Planted-partition citation graph with class-correlated word bags."""
    rng = np.random.default_rng(seed)
    n = per_class * classes
    y = np.repeat(np.arange(classes), per_class)
    protos = rng.random((classes, n_words)) < 0.3
    F = protos[y] ^ (rng.random((n, n_words)) < 0.1)
    ids = [str(1000 + 7 * k) for k in range(n)]
    with open(os.path.join(root, "cora.content"), "w") as fh:
        for k in range(n):
            words = "\t".join(str(int(v)) for v in F[k])
            fh.write(f"{ids[k]}\t{words}\tTopic_{y[k]}\n")
    with open(os.path.join(root, "cora.cites"), "w") as fh:
        for i in range(n):
            for j in range(n):
                if i != j and rng.random() < (0.1 if y[i] == y[j] else 0.005):
                    fh.write(f"{ids[i]}\t{ids[j]}\n")
        for k in range(dangling):
            fh.write(f"999999{k}\t{ids[0]}\n")
    return n
