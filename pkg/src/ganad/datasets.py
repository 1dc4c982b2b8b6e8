"""Dataset loaders and the one-class anomaly protocol.

Image pixels land in [-1, 1]. KDD numeric columns are min-max scaled, but only
once the protocol has chosen the training pool, so test rows never inform the
statistics.
"""
from __future__ import annotations

import csv
import gzip
import logging
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DatasetError(ValueError):
    pass


@dataclass
class RawDataset:
    """Samples with their original class ids, before the protocol binarizes them."""

    samples: np.ndarray
    classes: np.ndarray
    name: str
    # columns to min-max scale with training-pool statistics (KDD numerics)
    scale_columns: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        if len(self.samples) != len(self.classes):
            raise DatasetError(f"{len(self.samples)} samples vs {len(self.classes)} labels")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class LabeledDataset:
    samples: np.ndarray
    labels: np.ndarray  # 1 = anomalous
    source: str
    anomaly_class: int
    indices: np.ndarray  # row ids into the pooled raw dataset

    def __post_init__(self):
        if len(self.samples) == 0:
            raise DatasetError(f"{self.source}: empty split")
        if not np.all(np.isfinite(self.samples)):
            raise DatasetError(f"{self.source}: non-finite values")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise DatasetError(f"{self.source}: labels must be 0/1")

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return len(self.samples)

    def base_rate(self) -> float:
        return float(self.labels.mean())


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    eval_fraction_of_train: float = 0.1
    seed: int = 0
    limit: int | None = None
    test_on_all: bool = False

    def __post_init__(self):
        for name in ("train_fraction", "eval_fraction_of_train"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must be in (0, 1), got {v}")


@dataclass
class Protocol:
    train: LabeledDataset  # normals only
    eval: LabeledDataset
    test: LabeledDataset
    scaling: tuple[np.ndarray, np.ndarray] | None = None  # (min, range) per scaled column


# ------------------------------------------------------------------ IDX / MNIST

def _open(path: Path):
    return gzip.open(path, "rb") if str(path).endswith(".gz") else open(path, "rb")


def _read_idx(path: Path, magic: int) -> tuple[np.ndarray, tuple[int, ...]]:
    with _open(path) as fh:
        buf = fh.read()
    if len(buf) < 8:
        raise DatasetError(f"{path}: truncated header")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise DatasetError(f"{path}: magic {got:#010x}, expected {magic:#010x}")
    ndim = got & 0xFF
    if len(buf) < 4 + 4 * ndim:
        raise DatasetError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", buf[4:4 + 4 * ndim])
    n = int(np.prod(dims))
    body = buf[4 + 4 * ndim:]
    if len(body) < n:
        raise DatasetError(f"{path}: truncated, {len(body)} of {n} data bytes")
    return np.frombuffer(body, dtype=np.uint8, count=n), dims


def load_idx(images_path, labels_path) -> RawDataset:
    """Parse an IDX image/label file pair (optionally gzipped)."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    pix, dims = _read_idx(images_path, IDX_IMAGES_MAGIC)
    lab, ldims = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if dims[0] != ldims[0]:
        raise DatasetError(f"{dims[0]} images vs {ldims[0]} labels")
    x = pix.reshape(dims[0], -1).astype(np.float64) / 127.5 - 1.0
    return RawDataset(x, lab.astype(np.int64), images_path.name)


_IDX_STEMS = [("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
              ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")]


def _find(directory: Path, stem: str) -> Path | None:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        if (directory / name).exists():
            return directory / name
    return None


def load_mnist_dir(directory, name: str = "mnist") -> RawDataset:
    """Pool the official train and test IDX pairs found in ``directory``."""
    directory = Path(directory)
    parts = []
    for img_stem, lab_stem in _IDX_STEMS:
        img, lab = _find(directory, img_stem), _find(directory, lab_stem)
        if img is None or lab is None:
            continue
        parts.append(load_idx(img, lab))
    if not parts:
        raise FileNotFoundError(f"no IDX files under {directory}")
    if len(parts) == 1:
        warnings.warn(f"{directory}: only one IDX split found; pooling what is there", stacklevel=2)
    return RawDataset(np.concatenate([p.samples for p in parts]),
                      np.concatenate([p.classes for p in parts]), name)


# --------------------------------------------------------------------- CIFAR-10

CIFAR_RECORD = 1 + 3072


def load_cifar10(path) -> RawDataset:
    """Read CIFAR-10 binary batches from a file or a directory of ``*.bin``."""
    path = Path(path)
    files = sorted(path.glob("*.bin")) if path.is_dir() else [path]
    if not files:
        raise FileNotFoundError(f"no CIFAR-10 .bin files under {path}")
    xs, ys = [], []
    for f in files:
        buf = np.frombuffer(f.read_bytes(), dtype=np.uint8)
        if buf.size % CIFAR_RECORD:
            raise DatasetError(f"{f}: size {buf.size} is not a multiple of {CIFAR_RECORD}")
        rec = buf.reshape(-1, CIFAR_RECORD)
        ys.append(rec[:, 0].astype(np.int64))
        xs.append(rec[:, 1:].astype(np.float64) / 127.5 - 1.0)
    return RawDataset(np.concatenate(xs), np.concatenate(ys), "cifar10")


# ------------------------------------------------------------------------- KDD

KDD_CATEGORICAL = (1, 2, 3)  # protocol_type, service, flag
KDD_N_FEATURES = 41


def kdd_vocabulary(path) -> dict[int, list[str]]:
    vocab: dict[int, set[str]] = {c: set() for c in KDD_CATEGORICAL}
    with _open_text(path) as fh:
        for row in csv.reader(fh):
            if len(row) != KDD_N_FEATURES + 1:
                continue
            for c in KDD_CATEGORICAL:
                vocab[c].add(row[c])
    return {c: sorted(v) for c, v in vocab.items()}


def _open_text(path):
    path = Path(path)
    return gzip.open(path, "rt") if path.suffix == ".gz" else open(path, newline="")


def load_kdd(path, vocabulary: dict[int, Sequence[str]] | None = None) -> RawDataset:
    """KDD-99 CSV: one-hot categoricals, raw numerics, inverted labels.

    Rows tagged ``normal.`` become class 1 (the anomaly); every attack type is
    class 0. Numeric columns are left unscaled and listed in
    ``scale_columns`` for the protocol to normalize.
    """
    if vocabulary is None:
        vocabulary = kdd_vocabulary(path)
    index = {c: {v: i for i, v in enumerate(vocabulary[c])} for c in KDD_CATEGORICAL}
    numeric = [c for c in range(KDD_N_FEATURES) if c not in KDD_CATEGORICAL]
    rows, classes = [], []
    skipped = 0
    unknown = 0
    with _open_text(path) as fh:
        for row in csv.reader(fh):
            if len(row) != KDD_N_FEATURES + 1:
                skipped += 1
                continue
            try:
                nums = [float(row[c]) for c in numeric]
            except ValueError:
                skipped += 1
                continue
            onehots = []
            for c in KDD_CATEGORICAL:
                block = [0.0] * len(index[c])
                pos = index[c].get(row[c])
                if pos is None:
                    unknown += 1
                else:
                    block[pos] = 1.0
                onehots.extend(block)
            rows.append(nums + onehots)
            classes.append(1 if row[KDD_N_FEATURES].strip() == "normal." else 0)
    if skipped:
        log.warning("%s: skipped %d malformed rows", path, skipped)
    if unknown:
        warnings.warn(f"{path}: {unknown} unknown categorical values encoded as zeros",
                      stacklevel=2)
    if not rows:
        raise DatasetError(f"{path}: no valid rows")
    return RawDataset(np.asarray(rows, dtype=np.float64), np.asarray(classes, dtype=np.int64),
                      "kdd", scale_columns=np.arange(len(numeric)))


# -------------------------------------------------------------------- synthetic

def two_moons(n: int, noise: float = 0.1, seed: int = 0) -> RawDataset:
    """Two interleaved half circles; class 0 is the upper moon."""
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform(0, np.pi, n0)
    t1 = rng.uniform(0, np.pi, n1)
    upper = np.c_[np.cos(t0), np.sin(t0)]
    lower = np.c_[1 - np.cos(t1), 0.5 - np.sin(t1)]
    x = np.r_[upper, lower] + rng.normal(scale=noise, size=(n, 2))
    # centre and shrink into tanh range
    x = (x - np.array([0.5, 0.25])) / 1.6
    return RawDataset(x, np.r_[np.zeros(n0, np.int64), np.ones(n1, np.int64)], "moons")


# -------------------------------------------------------------------- protocol

def make_protocol(raw: RawDataset, anomaly_class: int, spec: SplitSpec = SplitSpec()) -> Protocol:
    """One-class split: shuffle the pool, 80/20, anomalies dropped from training.

    The eval split is carved from the training pool before anomalies are
    removed, so it keeps both labels for model selection.
    """
    if not np.any(raw.classes == anomaly_class):
        raise DatasetError(f"anomaly class {anomaly_class} absent from {raw.name}")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(len(raw))
    if spec.limit is not None and spec.limit < len(perm):
        perm = perm[:spec.limit]
    n_train = int(round(spec.train_fraction * len(perm)))
    pool, test_idx = perm[:n_train], perm[n_train:]
    n_eval = int(round(spec.eval_fraction_of_train * len(pool)))
    eval_idx, fit_idx = pool[:n_eval], pool[n_eval:]
    labels = (raw.classes == anomaly_class).astype(np.int64)
    train_idx = fit_idx[labels[fit_idx] == 0]
    if train_idx.size == 0:
        raise DatasetError("no normal rows left to train on")
    if spec.test_on_all:
        test_idx = perm

    x = raw.samples
    scaling = None
    if raw.scale_columns.size:
        cols = raw.scale_columns
        lo = x[pool][:, cols].min(axis=0)
        span = x[pool][:, cols].max(axis=0) - lo
        span = np.where(span > 0, span, 1.0)
        scaling = (lo, span)

    def subset(idx: np.ndarray, tag: str) -> LabeledDataset:
        xs = x[idx].copy()
        if scaling is not None:
            xs[:, raw.scale_columns] = (xs[:, raw.scale_columns] - scaling[0]) / scaling[1]
        return LabeledDataset(xs, labels[idx], f"{raw.name}/{tag}", anomaly_class, idx)

    return Protocol(subset(train_idx, "train"), subset(eval_idx, "eval"),
                    subset(test_idx, "test"), scaling)


DATASETS = ("mnist", "fashion", "cifar10", "kdd", "moons")


def load_raw(name: str, data_dir=None, seed: int = 0) -> RawDataset:
    """Resolve a dataset id to a raw pool."""
    if name == "moons":
        return two_moons(2000, seed=seed)
    if data_dir is None:
        raise DatasetError(f"{name} needs --data-dir")
    d = Path(data_dir)
    if name in ("mnist", "fashion"):
        sub = d / name if (d / name).is_dir() else d
        return load_mnist_dir(sub, name)
    if name == "cifar10":
        sub = d / "cifar10" if (d / "cifar10").is_dir() else d
        return load_cifar10(sub)
    if name == "kdd":
        for cand in ("kddcup.data_10_percent.gz", "kddcup.data_10_percent",
                     "kddcup.data_10_percent_corrected", "kdd/kddcup.data_10_percent.gz",
                     "kdd/kddcup.data_10_percent"):
            if (d / cand).exists():
                return load_kdd(d / cand)
        if d.is_file():
            return load_kdd(d)
        raise FileNotFoundError(f"no KDD-99 10% file under {d}")
    raise DatasetError(f"unknown dataset {name!r}")
