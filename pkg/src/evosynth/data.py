"""MNIST IDX ingestion.

IDX layout (all integers big-endian):

    u32  magic      0x00000803 for images, 0x00000801 for labels
    u32  count
    u32  rows, cols (images only)
    u8[] payload, row-major
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagicError, CountMismatchError, IdxFormatError, TruncatedPayloadError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
NUM_CLASSES = 10


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray  # (N, pixels) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64 in [0, 9]

    def __post_init__(self):
        images = np.array(self.images, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if images.ndim != 2 or labels.ndim != 1 or len(images) != len(labels):
            raise ValueError(f"images {images.shape} do not match labels {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
            raise ValueError("labels must lie in [0, 9]")
        if images.size and (images.min() < 0.0 or images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def head(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n])


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _header(raw, path, magic, ndim):
    need = 4 * (1 + ndim)
    if len(raw) >= 4:
        found = struct.unpack_from(">I", raw, 0)[0]
        if found != magic:
            raise BadMagicError(f"magic 0x{found:08x}, expected 0x{magic:08x}", path, 0)
    if len(raw) < need:
        raise TruncatedPayloadError(
            f"header needs {need} bytes, file has {len(raw)}", path, len(raw)
        )
    return struct.unpack_from(f">{ndim}I", raw, 4), need


def _payload(raw, path, offset, size):
    end = offset + size
    if len(raw) < end:
        raise TruncatedPayloadError(
            f"payload needs {size} bytes after the header, found {len(raw) - offset}",
            path,
            len(raw),
        )
    if len(raw) > end:
        raise IdxFormatError(f"{len(raw) - end} trailing bytes", path, end)
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=offset)


def read_idx_images(path) -> np.ndarray:
    """Raw uint8 images as an (N, rows*cols) array."""
    raw = _read(path)
    (count, rows, cols), offset = _header(raw, path, IMAGE_MAGIC, 3)
    pixels = _payload(raw, path, offset, count * rows * cols)
    return pixels.reshape(count, rows * cols)


def read_idx_labels(path) -> np.ndarray:
    raw = _read(path)
    (count,), offset = _header(raw, path, LABEL_MAGIC, 1)
    labels = _payload(raw, path, offset, count)
    bad = np.flatnonzero(labels >= NUM_CLASSES)
    if bad.size:
        raise IdxFormatError(f"label {labels[bad[0]]} out of range", path, offset + int(bad[0]))
    return labels


def load_mnist_idx(images_path, labels_path) -> Dataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        # the count field sits right after the magic
        raise CountMismatchError(
            f"{len(images)} images in {images_path} but {len(labels)} labels",
            labels_path,
            4,
        )
    return Dataset(images / 255.0, labels)


MNIST_FILES = {
    "train": ("train-images.idx3-ubyte", "train-labels.idx1-ubyte"),
    "test": ("t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte"),
}


def mnist_paths(directory, split: str) -> tuple[str, str]:
    """Locate a split in ``directory``, accepting both ``idx3-ubyte`` and ``idx3.ubyte``."""
    paths = []
    for name in MNIST_FILES[split]:
        candidates = [name, name.replace("idx3-", "idx3.").replace("idx1-", "idx1.")]
        found = next(
            (os.path.join(directory, c) for c in candidates
             if os.path.exists(os.path.join(directory, c))),
            os.path.join(directory, name),
        )
        paths.append(found)
    return paths[0], paths[1]
