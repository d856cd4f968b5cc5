"""Datasets for the random-field classifier: a synthetic two-class task
separated by a sine curve, IDX image ingestion with parity labels, and
the train-fitted normalization applied before training.
"""

import gzip
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import IdxFormatError

__all__ = [
    "Dataset",
    "gen_sine",
    "shuffle_labels",
    "normalize",
    "load_mnist_idx",
    "load_mnist_dir",
    "write_idx_images",
    "write_idx_labels",
    "write_dataset_csv",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n, d), binary labels (n,), and the normalization
    parameters used to produce the features (None before normalize)."""

    inputs: np.ndarray
    labels: np.ndarray
    normalization: tuple | None = None

    def __post_init__(self):
        inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2:
            raise ValueError("inputs must be a 2-D array")
        if labels.shape != (inputs.shape[0],):
            raise ValueError("labels length must match inputs")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]


def sine_label(points, amplitude=1.0, frequency=math.pi, phase=0.0):
    """1 where the second coordinate lies above amplitude*sin(frequency*x1 + phase)."""
    points = np.asarray(points, dtype=float)
    return (points[:, 1] > amplitude * np.sin(frequency * points[:, 0] + phase)).astype(np.int64)


def gen_sine(n_train=6000, n_test=1000, seed=0, amplitude=1.0, frequency=math.pi, phase=0.0):
    """Two-dimensional standard normal points labeled by the side of a
    sine curve they fall on.

    The default curve sin(pi x1) oscillates a few times across the bulk
    of the point cloud; amplitude, frequency and phase are adjustable.
    Train and test splits come from disjoint RNG streams of the seed, so
    growing one split never perturbs the other. With the default odd
    curve the two classes are balanced by symmetry.
    """
    if n_train < 1 or n_test < 1:
        raise ValueError("split sizes must be positive")
    train_ss, test_ss = np.random.SeedSequence(int(seed)).spawn(2)

    def split(ss, n):
        pts = np.random.Generator(np.random.PCG64(ss)).standard_normal((n, 2))
        return Dataset(inputs=pts, labels=sine_label(pts, amplitude, frequency, phase))

    return split(train_ss, n_train), split(test_ss, n_test)


def shuffle_labels(dataset, seed):
    """Control copy with labels permuted independently of the inputs."""
    rng = np.random.default_rng(seed)
    return Dataset(
        inputs=dataset.inputs,
        labels=rng.permutation(dataset.labels),
        normalization=dataset.normalization,
    )


def normalize(train, test):
    """Center on the train mean and scale by the train mean norm.

    Both splits get x <- (x - mean) / mean_norm with statistics fitted on
    the train split only. After the transform the train split has
    component-wise mean 0 and mean Euclidean norm 1.
    """
    if len(train) == 0:
        raise ValueError("train split is empty")
    mean = train.inputs.mean(axis=0)
    centered = train.inputs - mean
    mean_norm = float(np.linalg.norm(centered, axis=1).mean())
    if mean_norm == 0.0:
        raise ValueError("degenerate constant dataset: mean norm is zero")
    norm_info = (mean, mean_norm)

    def apply(ds):
        return Dataset(
            inputs=(ds.inputs - mean) / mean_norm,
            labels=ds.labels,
            normalization=norm_info,
        )

    return apply(train), apply(test)


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expect_magic, expect_ndim):
    with _open_maybe_gzip(path) as fh:
        header = fh.read(4)
        if len(header) < 4:
            raise IdxFormatError(f"{path}: truncated before magic")
        (magic,) = struct.unpack(">I", header)
        if magic != expect_magic:
            raise IdxFormatError(f"{path}: magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
        raw_dims = fh.read(4 * expect_ndim)
        if len(raw_dims) < 4 * expect_ndim:
            raise IdxFormatError(f"{path}: truncated dimension header")
        dims = struct.unpack(f">{expect_ndim}I", raw_dims)
        count = int(np.prod(dims))
        payload = fh.read(count + 1)
        if len(payload) < count:
            raise IdxFormatError(f"{path}: payload holds {len(payload)} bytes, expected {count}")
        if len(payload) > count:
            raise IdxFormatError(f"{path}: trailing bytes after payload")
        return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_mnist_idx(images_path, labels_path):
    """Load an IDX image/label pair as a parity-labeled dataset.

    Pixels are scaled to [0,1] by /255 and flattened; the label is the
    digit modulo 2 (odd digits map to 1). Raises IdxFormatError on bad
    magic numbers, truncation or a record-count mismatch.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    digits = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != digits.shape[0]:
        raise IdxFormatError(
            f"{images.shape[0]} images but {digits.shape[0]} labels"
        )
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(inputs=flat, labels=(digits % 2).astype(np.int64))


def load_mnist_dir(directory, split="train"):
    """Load the canonical file pair for a split from a directory.

    Accepts either raw IDX files or their .gz compressions under the
    standard names. Raises FileNotFoundError naming the expected files.
    """
    if split not in MNIST_FILES:
        raise ValueError("split must be 'train' or 'test'")
    paths = []
    for name in MNIST_FILES[split]:
        for candidate in (name, name + ".gz"):
            p = os.path.join(directory, candidate)
            if os.path.exists(p):
                paths.append(p)
                break
        else:
            raise FileNotFoundError(
                f"missing {name}[.gz] in {directory}; expected the canonical "
                f"IDX files {MNIST_FILES[split]}"
            )
    return load_mnist_idx(*paths)


def write_idx_images(path, images):
    """Write a u8 image stack (n, rows, cols) in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("images must have shape (n, rows, cols)")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    """Write u8 labels (n,) in IDX format."""
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-D")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def write_dataset_csv(path, dataset):
    """CSV export with header label,f0,f1,..."""
    d = dataset.dim
    lines = ["label," + ",".join(f"f{i}" for i in range(d))]
    for y, row in zip(dataset.labels, dataset.inputs):
        lines.append(str(int(y)) + "," + ",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
