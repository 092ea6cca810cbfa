"""Labeled datasets with corruption bookkeeping: synthetic blobs, IDX reader, CSV export."""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, InputError, ParameterError

SPLITS = ("train", "val", "test")
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    original_labels: np.ndarray
    corruption_mask: np.ndarray
    split: np.ndarray

    def __post_init__(self):
        N = self.features.shape[0]
        for name in ("labels", "original_labels", "corruption_mask", "split"):
            if getattr(self, name).shape != (N,):
                raise InputError(f"{name} must have one entry per row")
        if np.any((self.labels != self.original_labels) != self.corruption_mask):
            raise InputError("corruption_mask must mark exactly the rows whose label changed")
        if not set(np.unique(self.split)) <= set(SPLITS):
            raise InputError(f"split tags must be drawn from {SPLITS}")

    @property
    def n_classes(self) -> int:
        return int(max(self.labels.max(), self.original_labels.max())) + 1

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def rows(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.split == split)

    def part(self, split: str):
        idx = self.rows(split)
        return self.features[idx], self.labels[idx]


def corrupt_labels(labels, train_idx, fraction: float, classes: int, rng):
    """Reassign ``ceil(fraction * len(train_idx))`` training labels to a uniformly drawn wrong class."""
    if not 0 <= fraction < 1:
        raise ParameterError(f"corruption fraction must lie in [0, 1), got {fraction}")
    labels = np.array(labels)
    count = math.ceil(round(fraction * len(train_idx), 9))
    chosen = rng.choice(train_idx, size=count, replace=False) if count else np.array([], dtype=int)
    shift = rng.integers(1, classes, size=count) if count else np.array([], dtype=int)
    labels[chosen] = (labels[chosen] + shift) % classes
    return labels


def synth_blobs(n_per_class: int, d: int, classes: int, corruption: float = 0.3, seed: int = 0,
                separation: float = 2.0) -> Dataset:
    """Gaussian blobs with unit covariance, ``n_per_class`` rows per class in each split.

    Class means are random directions scaled so that every mean sits at
    distance ``separation / 2`` from the origin. Only training labels are
    corrupted.
    """
    if classes < 2:
        raise ParameterError("need at least two classes")
    if not 0 <= corruption < 1:
        raise ParameterError(f"corruption must lie in [0, 1), got {corruption}")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(classes, d))
    means *= (separation / 2.0) / np.linalg.norm(means, axis=1, keepdims=True)
    feats, labels, split = [], [], []
    for name in SPLITS:
        lab = np.repeat(np.arange(classes), n_per_class)
        lab = lab[rng.permutation(lab.size)]
        feats.append(means[lab] + rng.normal(size=(lab.size, d)))
        labels.append(lab)
        split += [name] * lab.size
    features = np.vstack(feats)
    original = np.concatenate(labels)
    split = np.array(split)
    noisy = corrupt_labels(original, np.flatnonzero(split == "train"), corruption, classes, rng)
    return Dataset(features, noisy, original, noisy != original, split)


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx(path, magic, ndim):
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4 + 4 * ndim:
        raise FormatError(f"{path}: truncated header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise FormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    body = raw[4 + 4 * ndim:]
    if len(body) != int(np.prod(dims)):
        raise FormatError(f"{path}: payload has {len(body)} bytes, header promises {int(np.prod(dims))}")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair (e.g. MNIST). Features are scaled to [0, 1].

    All rows are tagged ``test``; call :func:`assign_splits` to carve out
    training and validation sets.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1).astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    feats = images.reshape(images.shape[0], -1).astype(float) / 255.0
    N = labels.shape[0]
    return Dataset(feats, labels, labels.copy(), np.zeros(N, dtype=bool), np.full(N, "test"))


def assign_splits(data: Dataset, n_train: int = 7000, n_val: int = 7000, seed: int = 0,
                  corruption: float = 0.0) -> Dataset:
    """Class-balanced train/val split; the rest is test. Optionally corrupt the new training labels."""
    rng = np.random.default_rng(seed)
    classes = data.n_classes
    split = np.full(data.labels.shape[0], "test", dtype=object)
    for name, total in (("train", n_train), ("val", n_val)):
        per = np.full(classes, total // classes)
        per[: total % classes] += 1
        for c in range(classes):
            pool = np.flatnonzero((data.original_labels == c) & (split == "test"))
            if pool.size < per[c]:
                raise InputError(f"class {c} has only {pool.size} unassigned rows, need {per[c]}")
            split[rng.choice(pool, size=per[c], replace=False)] = name
    split = split.astype(str)
    noisy = corrupt_labels(data.original_labels, np.flatnonzero(split == "train"), corruption, classes, rng)
    return Dataset(data.features, noisy, data.original_labels, noisy != data.original_labels, split)


def write_dataset_csv(data: Dataset, path) -> None:
    """Columns: split, label, original_label, corrupted, f_0..f_{d-1}."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split", "label", "original_label", "corrupted"] + [f"f_{j}" for j in range(data.dim)])
        for i in range(data.features.shape[0]):
            w.writerow([data.split[i], int(data.labels[i]), int(data.original_labels[i]),
                        int(data.corruption_mask[i])] + [repr(float(v)) for v in data.features[i]])


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:4] != ["split", "label", "original_label", "corrupted"]:
        raise FormatError(f"{path}: unexpected header {header[:4]}")
    split = np.array([r[0] for r in body])
    labels = np.array([int(r[1]) for r in body], dtype=np.int64)
    original = np.array([int(r[2]) for r in body], dtype=np.int64)
    mask = np.array([bool(int(r[3])) for r in body])
    feats = np.array([[float(v) for v in r[4:]] for r in body], dtype=float).reshape(len(body), len(header) - 4)
    return Dataset(feats, labels, original, mask, split)
