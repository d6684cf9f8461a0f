"""Synthetic generators and dataset loaders.

Loaders read user-supplied files only; nothing is downloaded here.  Every
loaded dataset is min-max scaled per feature into [-1, 1] (constant
features become 0) and fingerprinted with a SHA-256 digest of the parsed
arrays.
"""

from __future__ import annotations

import enum
import gzip
import hashlib
import json
import os
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import DatasetFormatError, InvalidDatasetError, InvalidParameterError
from .graph import GraphSpec
from .hv import SeedLike, as_rng

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
ISOLET_FEATURES = 617
ISOLET_CLASSES = 26


class Split(str, enum.Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str
    split: Split = Split.TRAIN

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, dtype=np.int64, copy=True)
        if X.ndim != 2 or X.shape[0] == 0:
            raise InvalidDatasetError(f"{self.name}: features must be a non-empty n x d matrix")
        if y.shape != (X.shape[0],):
            raise InvalidDatasetError(f"{self.name}: need {X.shape[0]} labels, got {y.shape}")
        if not np.all(np.isfinite(X)):
            raise InvalidDatasetError(f"{self.name}: features must be finite")
        if y.min() < 0:
            raise InvalidDatasetError(f"{self.name}: labels must be >= 0")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "split", Split(self.split))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.labels[idx], self.name, self.split)

    def digest(self) -> str:
        return array_digest(self.features, self.labels)


def array_digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype.str).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def minmax_scale(X: np.ndarray, lo: Optional[np.ndarray] = None,
                 hi: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-feature map of [lo, hi] onto [-1, 1]; constant features map to 0.

    Passing the training bounds scales a test split consistently; values
    outside the bounds are clipped.
    """
    X = np.asarray(X, dtype=np.float64)
    lo = X.min(axis=0) if lo is None else lo
    hi = X.max(axis=0) if hi is None else hi
    span = hi - lo
    const = span == 0
    out = 2.0 * (X - lo) / np.where(const, 1.0, span) - 1.0
    out[:, const] = 0.0
    return np.clip(out, -1.0, 1.0)


# -- synthetic ---------------------------------------------------------------


def gen_kernel_dataset(seed: SeedLike, n_points: int = 20, n_features: int = 30) -> np.ndarray:
    """A drifting sequence: row 0 ~ U(-1, 1), then cumulative U(0, 0.1) steps."""
    rng = as_rng(seed)
    X = np.empty((n_points, n_features))
    X[0] = rng.uniform(-1.0, 1.0, size=n_features)
    steps = rng.uniform(0.0, 0.1, size=(n_points - 1, n_features))
    X[1:] = X[0] + np.cumsum(steps, axis=0)
    return X


def gen_random_graph(n_nodes: int, n_edges: int, seed: SeedLike) -> GraphSpec:
    n_nodes, n_edges = int(n_nodes), int(n_edges)
    total = n_nodes * (n_nodes - 1) // 2
    if n_nodes < 1 or n_edges < 0 or n_edges > total:
        raise InvalidParameterError(f"cannot place {n_edges} edges on {n_nodes} nodes (max {total})")
    iu, ju = np.triu_indices(n_nodes, 1)
    pick = as_rng(seed).choice(total, size=n_edges, replace=False)
    return GraphSpec(n_nodes, frozenset((int(iu[k]), int(ju[k])) for k in pick))


def gen_blobs(n_per_class: int, n_classes: int, n_features: int, seed: SeedLike,
              spread: float = 0.15) -> Dataset:
    """Gaussian clusters around random centers in [-1, 1]; handy for tests."""
    rng = as_rng(seed)
    centers = rng.uniform(-1.0, 1.0, size=(n_classes, n_features))
    y = np.repeat(np.arange(n_classes), n_per_class)
    X = np.clip(centers[y] + rng.normal(0.0, spread, size=(len(y), n_features)), -1.0, 1.0)
    perm = rng.permutation(len(y))
    return Dataset(X[perm], y[perm], "blobs")


def gen_labeled_graph(n_per_class: int, n_classes: int, n_features: int, seed: SeedLike,
                      p_in: float = 0.1, p_out: float = 0.005, flip: float = 0.1) -> GraphSpec:
    """Planted-partition graph with binary class-correlated features."""
    rng = as_rng(seed)
    n = n_per_class * n_classes
    y = np.repeat(np.arange(n_classes), n_per_class)
    protos = rng.random((n_classes, n_features)) < 0.15
    F = protos[y] ^ (rng.random((n, n_features)) < flip)
    iu, ju = np.triu_indices(n, 1)
    p = np.where(y[iu] == y[ju], p_in, p_out)
    keep = rng.random(len(iu)) < p
    edges = frozenset((int(a), int(b)) for a, b in zip(iu[keep], ju[keep]))
    return GraphSpec(n, edges, F.astype(np.float64), tuple(int(v) for v in y))


# -- ISOLET ------------------------------------------------------------------


def _read_text(path: str) -> str:
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return fh.read()


def parse_isolet(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """617 comma-separated features then a 1-based class label per row."""
    rows, labels = [], []
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != ISOLET_FEATURES + 1:
            raise DatasetFormatError(
                f"{path}: expected {ISOLET_FEATURES + 1} fields, got {len(parts)}", lineno)
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: {exc}", lineno) from None
        lab = vals[-1]
        if lab != int(lab) or not 1 <= lab <= ISOLET_CLASSES:
            raise DatasetFormatError(f"{path}: label {parts[-1]!r} outside 1..{ISOLET_CLASSES}", lineno)
        rows.append(vals[:-1])
        labels.append(int(lab) - 1)
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    return np.array(rows), np.array(labels, dtype=np.int64)


def _find(root: str, *names: str) -> str:
    for name in names:
        for cand in (name, name + ".gz"):
            p = os.path.join(root, cand)
            if os.path.exists(p):
                return p
    raise FileNotFoundError(f"none of {names} found under {root}")


def load_isolet(path: str) -> Tuple[Dataset, Dataset]:
    """``path`` is a directory holding isolet1+2+3+4.data and isolet5.data."""
    Xtr, ytr = parse_isolet(_find(path, "isolet1+2+3+4.data", "isolet_train.data"))
    Xte, yte = parse_isolet(_find(path, "isolet5.data", "isolet_test.data"))
    lo, hi = Xtr.min(axis=0), Xtr.max(axis=0)
    return (Dataset(minmax_scale(Xtr), ytr, "isolet", Split.TRAIN),
            Dataset(minmax_scale(Xte, lo, hi), yte, "isolet", Split.TEST))


# -- Fashion-MNIST -----------------------------------------------------------


def _read_bytes(path: str) -> bytes:
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def parse_idx(path: str, magic: int) -> np.ndarray:
    """IDX file with unsigned-byte payload and big-endian u32 dims."""
    buf = _read_bytes(path)
    if len(buf) < 4:
        raise DatasetFormatError(f"{path}: file too short for an IDX header")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise DatasetFormatError(f"{path}: bad magic {got}, expected {magic}")
    ndim = got & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise OSError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    need = int(np.prod(dims))
    if len(buf) - header < need:
        raise OSError(f"{path}: truncated payload, expected {need} bytes, got {len(buf) - header}")
    return np.frombuffer(buf, dtype=np.uint8, count=need, offset=header).reshape(dims)


def stratified_subsample(labels: np.ndarray, size: int, seed: SeedLike) -> np.ndarray:
    """Indices of a class-proportional subsample (largest-remainder rounding)."""
    labels = np.asarray(labels)
    if size >= len(labels):
        return np.arange(len(labels))
    rng = as_rng(seed)
    classes, counts = np.unique(labels, return_counts=True)
    exact = counts * size / len(labels)
    take = np.floor(exact).astype(int)
    short = size - take.sum()
    take[np.argsort(-(exact - take), kind="stable")[:short]] += 1
    idx = [rng.choice(np.flatnonzero(labels == c), size=k, replace=False)
           for c, k in zip(classes, take)]
    return np.sort(np.concatenate(idx))


FMNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def load_fmnist(path: str, train_size: Optional[int] = 10000, test_size: Optional[int] = 2000,
                seed: SeedLike = 0) -> Tuple[Dataset, Dataset]:
    """Four IDX files under ``path``; pixels to [0, 1] then to [-1, 1].

    ``train_size``/``test_size`` select a stratified subsample; None keeps
    the full split.
    """
    arr = {}
    for key, name in FMNIST_FILES.items():
        magic = IDX_IMAGE_MAGIC if key.endswith("images") else IDX_LABEL_MAGIC
        arr[key] = parse_idx(_find(path, name), magic)
    out = []
    rng = as_rng(seed)
    for split, size in ((Split.TRAIN, train_size), (Split.TEST, test_size)):
        images, labels = arr[f"{split.value}_images"], arr[f"{split.value}_labels"]
        if images.shape[0] != labels.shape[0]:
            raise DatasetFormatError(f"{split.value}: {images.shape[0]} images but {labels.shape[0]} labels")
        X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0 * 2.0 - 1.0
        y = labels.astype(np.int64)
        if size is not None:
            idx = stratified_subsample(y, int(size), rng)
            X, y = X[idx], y[idx]
        out.append(Dataset(X, y, "fmnist", split))
    return out[0], out[1]


# -- Cora --------------------------------------------------------------------


@dataclass(frozen=True)
class CoraData:
    graph: GraphSpec
    paper_ids: Tuple[str, ...]
    classes: Tuple[str, ...]
    skipped: int


def load_cora(path: str) -> CoraData:
    """``cora.content`` (id, binary words, class) and ``cora.cites`` pairs."""
    content = _read_text(_find(path, "cora.content"))
    ids, feats, names = [], [], []
    for lineno, line in enumerate(content.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 3:
            raise DatasetFormatError("cora.content: too few fields", lineno)
        try:
            row = [float(v) for v in parts[1:-1]]
        except ValueError as exc:
            raise DatasetFormatError(f"cora.content: {exc}", lineno) from None
        if feats and len(row) != len(feats[0]):
            raise DatasetFormatError(f"cora.content: expected {len(feats[0])} features, got {len(row)}", lineno)
        ids.append(parts[0])
        feats.append(row)
        names.append(parts[-1])
    if not ids:
        raise DatasetFormatError("cora.content: no rows")
    index = {pid: k for k, pid in enumerate(ids)}
    if len(index) != len(ids):
        raise DatasetFormatError("cora.content: duplicate paper id")
    classes = tuple(sorted(set(names)))
    labels = tuple(classes.index(c) for c in names)
    edges, skipped = set(), 0
    for lineno, line in enumerate(_read_text(_find(path, "cora.cites")).splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise DatasetFormatError("cora.cites: expected two ids", lineno)
        a, b = index.get(parts[0]), index.get(parts[1])
        if a is None or b is None:
            skipped += 1
            continue
        if a != b:
            edges.add((min(a, b), max(a, b)))
    g = GraphSpec(len(ids), frozenset(edges), np.array(feats), labels)
    return CoraData(g, tuple(ids), classes, skipped)


# -- reports -----------------------------------------------------------------


def ingest_report(name: str, datasets: List[Dataset], skipped: int = 0) -> Dict:
    return {
        "name": name,
        "rows": {d.split.value: len(d) for d in datasets},
        "dims": datasets[0].n_features,
        "classes": max(d.n_classes for d in datasets),
        "digest": array_digest(*[a for d in datasets for a in (d.features, d.labels)]),
        "skipped": skipped,
    }


def cora_report(data: CoraData) -> Dict:
    g = data.graph
    return {
        "name": "cora",
        "rows": g.n_nodes,
        "dims": int(g.features.shape[1]),
        "classes": len(data.classes),
        "edges": len(g.edges),
        "digest": array_digest(g.features, np.asarray(g.labels), g.edge_array()),
        "skipped": data.skipped,
    }


def write_ingest_report(out_dir: str, report: Dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"ingest_{report['name']}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return path


def write_id_map(out_dir: str, data: CoraData) -> str:
    path = os.path.join(out_dir, "cora_id_map.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,paper_id\n")
        for k, pid in enumerate(data.paper_ids):
            fh.write(f"{k},{pid}\n")
    return path
