"""Datasets: loading, min-max scaling, synthetic blobs and class subsampling.

Samples are stored as columns, so ``X`` has shape ``(m_features, n_samples)``.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

UNLABELED = -1


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class DataSet:
    X: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""
    # True where the label is visible to a semi-supervised learner
    known: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DataError("X must be a 2-D (features x samples) matrix")
        if X.shape[0] < 1 or X.shape[1] < 2:
            raise DataError(f"need m >= 1 features and n >= 2 samples, got {X.shape}")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (X.shape[1],):
                raise DataError("labels must have one entry per sample")
            if labels.min() < 0:
                raise DataError("class identifiers must be non-negative")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if self.known is not None:
            known = np.asarray(self.known, dtype=bool)
            if known.shape != (X.shape[1],):
                raise DataError("known mask must have one entry per sample")
            known.setflags(write=False)
            object.__setattr__(self, "known", known)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def class_count(self) -> int:
        if self.labels is None:
            return 0
        return int(self.labels.max()) + 1

    def observed_labels(self) -> np.ndarray:
        """Labels as a semi-supervised learner sees them; hidden ones are ``UNLABELED``."""
        if self.labels is None:
            return np.full(self.n, UNLABELED, dtype=np.int64)
        if self.known is None:
            return self.labels.copy()
        return np.where(self.known, self.labels, UNLABELED)


def minmax_scale(X: np.ndarray) -> np.ndarray:
    """Scale every feature (row) to [0, 1]; constant features become 0."""
    X = np.asarray(X, dtype=float)
    lo = X.min(axis=1, keepdims=True)
    span = X.max(axis=1, keepdims=True) - lo
    out = np.zeros_like(X)
    np.divide(X - lo, span, out=out, where=span > 0)
    return out


def _contiguous(labels) -> np.ndarray:
    _, inverse = np.unique(np.asarray(labels), return_inverse=True)
    return inverse.astype(np.int64)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _load_csv(path: Path, has_labels: bool | None):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: empty dataset")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: ragged row {i} ({len(r)} cells, expected {width})")
    try:
        A = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric cell ({exc})") from None
    if has_labels is None:
        last = A[:, -1]
        has_labels = width > 1 and np.all(last == np.round(last))
    if has_labels:
        if width < 2:
            raise DataError(f"{path}: label column but no features")
        return A[:, :-1].T, _contiguous(A[:, -1].astype(np.int64))
    return A.T, None


def _load_image_folder(path: Path):
    from PIL import Image

    classes = sorted(p for p in path.iterdir() if p.is_dir())
    if not classes:
        raise DataError(f"{path}: no class subdirectories")
    cols, labels, shape = [], [], None
    for c, sub in enumerate(classes):
        for f in sorted(sub.iterdir()):
            if not f.is_file():
                continue
            try:
                img = np.asarray(Image.open(f).convert("L"), dtype=float)
            except OSError as exc:
                raise DataError(f"{f}: unreadable image ({exc})") from None
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise DataError(f"{f}: image size {img.shape} differs from {shape}")
            cols.append(img.ravel())
            labels.append(c)
    if not cols:
        raise DataError(f"{path}: no images found")
    return np.stack(cols, axis=1), np.array(labels, dtype=np.int64)


_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path: Path) -> np.ndarray:
    """Read an IDX file: two zero bytes, a type code, a dim count, big-endian u32 dims."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] not in _IDX_TYPES:
        raise DataError(f"{path}: bad IDX magic")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = np.dtype(_IDX_TYPES[raw[2]])
    count = int(np.prod(dims)) if dims else 0
    if len(raw) - header != count * dtype.itemsize:
        raise DataError(f"{path}: IDX payload size does not match header dims {dims}")
    return np.frombuffer(raw, dtype=dtype, offset=header).reshape(dims).astype(float)


def write_idx(path: Path, array: np.ndarray) -> None:
    array = np.asarray(array)
    code = {np.dtype(v).newbyteorder("="): k for k, v in _IDX_TYPES.items()}
    key = array.dtype.newbyteorder("=")
    if key not in code:
        array = array.astype(np.float64)
        key = np.dtype(np.float64)
    head = bytes([0, 0, code[key], array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(head + array.astype(_IDX_TYPES[code[key]]).tobytes())


def load_dataset(path, format: str = "csv", labels_path=None, has_labels: bool | None = None,
                 name: str | None = None) -> DataSet:
    """Load samples from disk and min-max scale each feature to [0, 1].

    ``format`` is ``csv`` (one sample per row, optional trailing integer
    label column, optional header), ``image-folder`` (one subdirectory per
    class) or ``idx`` (first axis indexes samples; labels from
    ``labels_path``). For CSV, ``has_labels=None`` treats an all-integer
    last column as labels.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file or directory")
    if format == "csv":
        X, labels = _load_csv(path, has_labels)
    elif format == "image-folder":
        X, labels = _load_image_folder(path)
    elif format == "idx":
        A = read_idx(path)
        if A.ndim < 2 or A.shape[0] < 1:
            raise DataError(f"{path}: IDX data needs a sample axis and feature axes")
        X = A.reshape(A.shape[0], -1).T
        labels = None
        if labels_path is not None:
            labels = _contiguous(read_idx(Path(labels_path)).ravel().astype(np.int64))
            if labels.shape[0] != X.shape[1]:
                raise DataError("IDX label count does not match sample count")
    else:
        raise DataError(f"unknown dataset format {format!r}")
    if X.size == 0:
        raise DataError(f"{path}: empty dataset")
    return DataSet(minmax_scale(X), labels, name or path.stem)


def make_blobs(class_count: int, per_class: int, dim: int, spread: float, seed: int,
               center_box: float = 1.0) -> DataSet:
    """Isotropic Gaussian clusters, min-max scaled.

    Centers are uniform in ``[-center_box, center_box]^dim``; each sample is
    its center plus ``spread`` times standard normal noise.
    """
    if class_count < 1 or per_class < 1 or dim < 1:
        raise ValueError("class_count, per_class and dim must be positive")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-center_box, center_box, size=(dim, class_count))
    labels = np.repeat(np.arange(class_count), per_class)
    X = centers[:, labels] + spread * rng.standard_normal((dim, labels.size))
    return DataSet(minmax_scale(X), labels, f"blobs{class_count}x{per_class}")


def choose_classes(class_count: int, size: int, seed: int) -> np.ndarray:
    """Sorted uniform random subset of ``size`` class ids."""
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(class_count, size=size, replace=False))


def subsample_classes(ds: DataSet, class_subset_size: int, seed: int) -> DataSet:
    """Keep every sample of a random subset of classes, relabelled 0..size-1."""
    if ds.labels is None:
        raise DataError("subsample_classes needs a labeled dataset")
    if not 1 <= class_subset_size <= ds.class_count:
        raise DataError(f"subset size {class_subset_size} outside 1..{ds.class_count}")
    chosen = choose_classes(ds.class_count, class_subset_size, seed)
    keep = np.isin(ds.labels, chosen)
    remap = np.full(ds.class_count, -1, dtype=np.int64)
    remap[chosen] = np.arange(class_subset_size)
    known = None if ds.known is None else ds.known[keep]
    return DataSet(ds.X[:, keep], remap[ds.labels[keep]], ds.name, known)


def mask_labels(ds: DataSet, labeled_fraction: float, seed: int) -> DataSet:
    """Hide labels so that ``round(fraction * class size)`` stay visible per class.

    At least two samples per class stay labeled.
    """
    if ds.labels is None:
        raise DataError("mask_labels needs a labeled dataset")
    if not 0.0 < labeled_fraction <= 1.0:
        raise DataError("labeled_fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    known = np.zeros(ds.n, dtype=bool)
    for c in range(ds.class_count):
        idx = np.flatnonzero(ds.labels == c)
        if idx.size == 0:
            continue
        keep = max(2, int(round(labeled_fraction * idx.size)))
        if keep > idx.size:
            raise DataError(f"class {c} has {idx.size} samples; cannot keep 2 labeled")
        known[rng.choice(idx, size=keep, replace=False)] = True
    return replace(ds, known=known)
