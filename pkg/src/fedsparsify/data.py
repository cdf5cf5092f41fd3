"""Dataset ingestion and client partitioning.

Supports the IDX image/label file pair (the standard FashionMNIST
distribution format), a seeded synthetic Gaussian-blob generator for
desk-scale runs, and a flat binary container for serialized datasets.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataFormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# container header, little-endian:
#   u32 magic | u32 train count | u32 test count | u32 features | u32 classes
# then train features (f64), train labels (i32), test features, test labels
DATASET_MAGIC = 0x46445331

TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


@dataclass
class ClientShard:
    """One client's labeled examples."""

    features: np.ndarray
    labels: np.ndarray
    client_id: int

    @property
    def num_examples(self) -> int:
        return self.labels.shape[0]


@dataclass
class LabeledDataset:
    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    num_classes: int

    @property
    def num_features(self) -> int:
        return self.train_features.shape[1]

    @property
    def train_count(self) -> int:
        return self.train_labels.shape[0]

    @property
    def test_count(self) -> int:
        return self.test_labels.shape[0]


def _read_exact(f, count: int, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise DataFormatError(f"truncated {what}: wanted {count} bytes, got {len(data)}")
    return data


def load_idx(image_path, label_path) -> tuple[np.ndarray, np.ndarray]:
    """Load one IDX image/label file pair.

    Both files are big-endian: images carry a 16-byte header
    (magic 0x803, count, rows, cols) followed by one unsigned byte per
    pixel; labels carry an 8-byte header (magic 0x801, count) followed by
    one unsigned byte per label. Pixels are scaled to [0, 1].
    """
    with open(image_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, "image header"))
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"image file magic is 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
            )
        pixels = _read_exact(f, count * rows * cols, "image data")
    with open(label_path, "rb") as f:
        magic, label_count = struct.unpack(">II", _read_exact(f, 8, "label header"))
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"label file magic is 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
            )
        raw_labels = _read_exact(f, label_count, "label data")
    if label_count != count:
        raise DataFormatError(
            f"label count {label_count} does not match image count {count}"
        )
    features = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows * cols)
    features = features.astype(np.float64) / 255.0
    labels = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    return features, labels


def load_idx_dataset(data_dir, num_classes: int = 10) -> LabeledDataset:
    """Load train and test IDX pairs from a directory using the standard
    FashionMNIST file names (.gz variants are not handled here)."""
    root = Path(data_dir)
    train_x, train_y = load_idx(root / TRAIN_FILES[0], root / TRAIN_FILES[1])
    test_x, test_y = load_idx(root / TEST_FILES[0], root / TEST_FILES[1])
    return LabeledDataset(train_x, train_y, test_x, test_y, num_classes)


def partition_iid(dataset: LabeledDataset, num_clients: int, seed: int) -> list[ClientShard]:
    """Seeded global shuffle of the training set, then contiguous chunks
    whose sizes differ by at most one."""
    n = dataset.train_count
    if num_clients < 1 or num_clients > n:
        raise ConfigurationError(f"cannot split {n} examples into {num_clients} clients")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    shards = []
    for cid, idx in enumerate(np.array_split(order, num_clients)):
        shards.append(
            ClientShard(dataset.train_features[idx], dataset.train_labels[idx], cid)
        )
    return shards


def partition_noniid(
    dataset: LabeledDataset, num_clients: int, classes_per_client: int, seed: int
) -> list[ClientShard]:
    """Label-sorted partitioning giving every client at most
    `classes_per_client` distinct labels.

    The training set is stably sorted by label and cut into
    num_clients * classes_per_client label-pure segments (segments never
    straddle a label boundary; remainders spread round-robin inside each
    label). A seeded permutation then deals `classes_per_client` segments to
    each client.
    """
    if classes_per_client < 1:
        raise ConfigurationError("classes_per_client must be >= 1")
    n = dataset.train_count
    total_segments = num_clients * classes_per_client
    if num_clients < 1 or total_segments > n:
        raise ConfigurationError(
            f"cannot form {total_segments} label segments from {n} examples"
        )

    order = np.argsort(dataset.train_labels, kind="stable")
    sorted_labels = dataset.train_labels[order]
    present, counts = np.unique(sorted_labels, return_counts=True)

    # proportional segment allocation per label, largest remainder first
    quotas = counts * (total_segments / n)
    alloc = np.floor(quotas).astype(np.int64)
    remainder = total_segments - int(alloc.sum())
    if remainder > 0:
        by_frac = np.argsort(-(quotas - alloc), kind="stable")
        alloc[by_frac[:remainder]] += 1
    if np.any(alloc > counts):
        raise ConfigurationError(
            "label distribution too skewed for the requested segment count"
        )

    segments = []
    start = 0
    for label_count, seg_count in zip(counts, alloc):
        block = order[start : start + label_count]
        start += label_count
        if seg_count > 0:
            segments.extend(np.array_split(block, seg_count))

    rng = np.random.default_rng(seed)
    dealt = rng.permutation(len(segments))
    shards = []
    for cid in range(num_clients):
        picks = dealt[cid * classes_per_client : (cid + 1) * classes_per_client]
        idx = np.concatenate([segments[p] for p in picks])
        shards.append(
            ClientShard(dataset.train_features[idx], dataset.train_labels[idx], cid)
        )
    return shards


def synthetic_blobs(
    num_examples: int,
    num_features: int,
    num_classes: int,
    seed: int,
    spread: float = 4.0,
) -> LabeledDataset:
    """Seeded Gaussian class clusters, split 5:1 into train and test.

    Class c is centered at spread * e_(c mod d) (sign-flipped past d), with
    unit-variance noise, so a wide spread gives linearly separable blobs.
    Labels are balanced up to remainder within each split.
    """
    if num_examples < num_classes or num_classes < 1 or num_features < 1:
        raise ConfigurationError("synthetic dataset dimensions are infeasible")
    rng = np.random.default_rng(seed)
    means = np.zeros((num_classes, num_features))
    for c in range(num_classes):
        means[c, c % num_features] = spread * (1.0 if c < num_features else -1.0)

    def make_split(count: int) -> tuple[np.ndarray, np.ndarray]:
        labels = np.arange(count, dtype=np.int64) % num_classes
        features = means[labels] + rng.normal(size=(count, num_features))
        return features, labels

    train_count = (5 * num_examples) // 6
    train_x, train_y = make_split(train_count)
    test_x, test_y = make_split(num_examples - train_count)
    return LabeledDataset(train_x, train_y, test_x, test_y, num_classes)


def save_dataset(dataset: LabeledDataset, path) -> None:
    with open(path, "wb") as f:
        f.write(
            struct.pack(
                "<IIIII",
                DATASET_MAGIC,
                dataset.train_count,
                dataset.test_count,
                dataset.num_features,
                dataset.num_classes,
            )
        )
        f.write(np.ascontiguousarray(dataset.train_features, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(dataset.train_labels, dtype="<i4").tobytes())
        f.write(np.ascontiguousarray(dataset.test_features, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(dataset.test_labels, dtype="<i4").tobytes())


def load_dataset(path) -> LabeledDataset:
    with open(path, "rb") as f:
        magic, n_train, n_test, dim, classes = struct.unpack(
            "<IIIII", _read_exact(f, 20, "dataset header")
        )
        if magic != DATASET_MAGIC:
            raise DataFormatError(
                f"dataset magic is 0x{magic:08x}, expected 0x{DATASET_MAGIC:08x}"
            )

        def read_split(count: int, what: str) -> tuple[np.ndarray, np.ndarray]:
            feats = np.frombuffer(
                _read_exact(f, count * dim * 8, f"{what} features"), dtype="<f8"
            ).reshape(count, dim)
            labels = np.frombuffer(
                _read_exact(f, count * 4, f"{what} labels"), dtype="<i4"
            ).astype(np.int64)
            return feats.astype(np.float64), labels

        train_x, train_y = read_split(n_train, "train")
        test_x, test_y = read_split(n_test, "test")
    return LabeledDataset(train_x, train_y, test_x, test_y, classes)
