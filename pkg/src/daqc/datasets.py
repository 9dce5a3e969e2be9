"""IDX dataset files, class subsets and stratified splits.

IDX layout (big-endian): two zero bytes, a type byte (``0x08`` = unsigned
byte), a dimension-count byte, one ``uint32`` per dimension, then the raw
data.  Image files therefore start with ``0x00000803`` and label files with
``0x00000801``.  Files ending in ``.gz`` are read and written through gzip.
"""
from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

# class lists of the named subsets; the position in the list is the new label
SUBSETS = {
    "mnist-2": (0, 1),
    "mnist-4": (0, 1, 4, 8),
    "mnist-10": tuple(range(10)),
    "fashionmnist-2": (0, 1),
    "fashionmnist-4": (0, 1, 8, 9),
    "fashionmnist-10": tuple(range(10)),
    "pneumoniamnist-2": (0, 1),
}


@dataclass
class Dataset:
    images: np.ndarray  # (count, rows, cols) uint8
    labels: np.ndarray  # (count,) int64
    name: str = ""
    n_classes: int | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.labels = np.asarray(self.labels).astype(np.int64)
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels in {self.name!r}"
            )
        if self.n_classes is None:
            self.n_classes = int(self.labels.max()) + 1 if self.labels.size else 0
        elif self.labels.size and self.labels.max() >= self.n_classes:
            raise DataError(f"label {self.labels.max()} >= declared class count {self.n_classes}")

    def __len__(self) -> int:
        return self.labels.size

    def take(self, index, name: str | None = None) -> "Dataset":
        return Dataset(self.images[index], self.labels[index],
                       self.name if name is None else name, self.n_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


def _open(path, mode: str):
    path = Path(path)
    return gzip.open(path, mode) if path.suffix == ".gz" else open(path, mode)


def read_idx(path, expect_magic: int | None = None) -> np.ndarray:
    """Read an unsigned-byte IDX tensor."""
    try:
        with _open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except (OSError, EOFError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if expect_magic is not None and magic != expect_magic:
        raise FormatError(f"{path}: magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
    if raw[0] != 0 or raw[1] != 0 or raw[2] != 0x08:
        raise FormatError(f"{path}: magic 0x{magic:08x} is not an unsigned-byte IDX file")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = math.prod(dims)
    if len(raw) - header != size:
        raise FormatError(f"{path}: expected {size} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims).copy()


def write_idx(path, array) -> None:
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255 or np.any(arr != np.round(arr))):
            raise FormatError("IDX writer only supports unsigned bytes")
        arr = arr.astype(np.uint8)
    header = struct.pack(">BBBB", 0, 0, 0x08, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    with _open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_idx(images_path, labels_path, name: str = "", n_classes: int | None = None) -> Dataset:
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} "
            f"holds {labels.shape[0]} labels"
        )
    return Dataset(images, labels, name or Path(images_path).stem, n_classes)


def save_idx(dataset: Dataset, images_path, labels_path) -> None:
    write_idx(images_path, dataset.images)
    write_idx(labels_path, dataset.labels)


@dataclass(frozen=True)
class SubsetRule:
    keep_classes: tuple

    def __post_init__(self):
        keep = tuple(int(c) for c in self.keep_classes)
        if len(set(keep)) != len(keep) or not keep:
            raise DataError(f"keep_classes must be distinct and non-empty, got {self.keep_classes}")
        object.__setattr__(self, "keep_classes", keep)

    @property
    def relabel(self) -> dict:
        return {c: i for i, c in enumerate(self.keep_classes)}

    @classmethod
    def named(cls, name: str) -> "SubsetRule":
        try:
            return cls(SUBSETS[name.lower()])
        except KeyError:
            raise DataError(f"unknown subset {name!r}; known: {sorted(SUBSETS)}") from None


def subset(dataset: Dataset, rule: SubsetRule) -> Dataset:
    """Keep the listed classes in their original order and relabel them
    ``0 .. C-1`` by list position."""
    lut = np.full(max(max(rule.keep_classes), int(dataset.labels.max(initial=0))) + 1, -1)
    for new, old in enumerate(rule.keep_classes):
        lut[old] = new
    mapped = lut[dataset.labels]
    keep = mapped >= 0
    return Dataset(dataset.images[keep], mapped[keep], dataset.name, len(rule.keep_classes))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(dataset: Dataset, val_fraction: float = 0.2, seed: int = 0):
    """Per-class shuffle and split; each class sends
    ``round_half_up(val_fraction * n_c)`` samples to validation.  Both
    outputs keep the original relative order."""
    if not 0 < val_fraction < 1:
        raise DataError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    val_idx = []
    for c in range(dataset.n_classes):
        members = np.nonzero(dataset.labels == c)[0]
        if members.size == 0:
            continue
        if members.size < 2:
            raise DataError(f"class {c} has {members.size} sample; need at least 2 to split")
        n_val = min(max(_round_half_up(val_fraction * members.size), 1), members.size - 1)
        val_idx.append(rng.permutation(members)[:n_val])
    val_mask = np.zeros(len(dataset), dtype=bool)
    if val_idx:
        val_mask[np.concatenate(val_idx)] = True
    return (dataset.take(np.nonzero(~val_mask)[0]), dataset.take(np.nonzero(val_mask)[0]))


def seeded_subsample(dataset: Dataset, limit: int, seed: int = 0) -> Dataset:
    """``limit`` samples drawn without replacement, original order kept."""
    if limit >= len(dataset):
        return dataset
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    return dataset.take(np.sort(rng.choice(len(dataset), size=limit, replace=False)))


def standard_paths(root, split: str = "train"):
    """Conventional IDX file names inside ``root``.

    ``split`` is ``train``, ``test`` or ``val``.  Files are named
    ``<stem>-images-idx3-ubyte`` and ``<stem>-labels-idx1-ubyte``, with or
    without ``.gz``; the test split accepts both the MNIST stem ``t10k`` and
    the plain stem ``test``.
    """
    root = Path(root)
    stems = ("t10k", "test") if split in ("test", "t10k") else (split,)
    for stem in stems:
        for suffix in ("", ".gz"):
            images = root / f"{stem}-images-idx3-ubyte{suffix}"
            labels = root / f"{stem}-labels-idx1-ubyte{suffix}"
            if images.exists() and labels.exists():
                return images, labels
    raise DataError(f"no {split} IDX files under {root}")
