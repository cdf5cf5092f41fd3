import struct

import numpy as np
import pytest

from fedsparsify import data
from fedsparsify.errors import ConfigurationError, DataFormatError

from conftest import fashion_mnist_dir, requires_fashion_mnist


def write_idx_pair(tmp_path, pixels, labels, rows=2, cols=2, image_magic=None, label_magic=None,
                   image_count=None, label_count=None, truncate_images=0):
    count = len(labels)
    image_path = tmp_path / "images"
    label_path = tmp_path / "labels"
    body = bytes(pixels)
    if truncate_images:
        body = body[:-truncate_images]
    image_path.write_bytes(
        struct.pack(
            ">IIII",
            data.IDX_IMAGE_MAGIC if image_magic is None else image_magic,
            count if image_count is None else image_count,
            rows,
            cols,
        )
        + body
    )
    label_path.write_bytes(
        struct.pack(
            ">II",
            data.IDX_LABEL_MAGIC if label_magic is None else label_magic,
            count if label_count is None else label_count,
        )
        + bytes(labels)
    )
    return image_path, label_path


def test_load_idx_valid_pair(tmp_path):
    pixels = [0, 128, 255, 64, 255, 0, 0, 32]
    image_path, label_path = write_idx_pair(tmp_path, pixels, [3, 7])
    features, labels = data.load_idx(image_path, label_path)
    assert features.shape == (2, 4)
    assert features[0, 2] == 1.0  # byte 255 scales to exactly 1.0
    assert features[0, 0] == 0.0
    assert features[0, 1] == pytest.approx(128 / 255)
    assert np.array_equal(labels, [3, 7])


def test_load_idx_rejects_bad_image_magic(tmp_path):
    image_path, label_path = write_idx_pair(tmp_path, [0] * 8, [1, 2], image_magic=0xDEAD)
    with pytest.raises(DataFormatError, match="image file magic"):
        data.load_idx(image_path, label_path)


def test_load_idx_rejects_bad_label_magic(tmp_path):
    image_path, label_path = write_idx_pair(tmp_path, [0] * 8, [1, 2], label_magic=0xBEEF)
    with pytest.raises(DataFormatError, match="label file magic"):
        data.load_idx(image_path, label_path)


def test_load_idx_rejects_truncated_images(tmp_path):
    image_path, label_path = write_idx_pair(tmp_path, [0] * 8, [1, 2], truncate_images=3)
    with pytest.raises(DataFormatError, match="truncated image data"):
        data.load_idx(image_path, label_path)


def test_load_idx_rejects_count_mismatch(tmp_path):
    image_path, label_path = write_idx_pair(tmp_path, [0] * 8, [1, 2, 3], image_count=2)
    with pytest.raises(DataFormatError, match="label count 3 does not match image count 2"):
        data.load_idx(image_path, label_path)


@requires_fashion_mnist
def test_fashion_mnist_loader_counts():
    ds = data.load_idx_dataset(fashion_mnist_dir())
    assert ds.train_count == 60_000
    assert ds.test_count == 10_000
    assert ds.num_features == 784
    assert ds.train_features.min() >= 0.0 and ds.train_features.max() <= 1.0


def test_partition_iid_even_split():
    ds = data.synthetic_blobs(120, 4, 3, seed=1)
    shards = data.partition_iid(ds, 10, seed=2)
    assert [s.num_examples for s in shards] == [10] * 10
    _assert_exact_partition(ds, shards)


def test_partition_iid_uneven_split_differs_by_at_most_one():
    ds = data.synthetic_blobs(124, 4, 3, seed=3)  # 103 training examples
    shards = data.partition_iid(ds, 10, seed=4)
    sizes = [s.num_examples for s in shards]
    assert sum(sizes) == ds.train_count
    assert max(sizes) - min(sizes) <= 1


def test_partition_iid_single_client_is_whole_set():
    ds = data.synthetic_blobs(60, 4, 2, seed=5)
    (shard,) = data.partition_iid(ds, 1, seed=6)
    assert shard.num_examples == ds.train_count
    assert sorted(shard.labels.tolist()) == sorted(ds.train_labels.tolist())


def test_partition_iid_rejects_too_many_clients():
    ds = data.synthetic_blobs(12, 4, 2, seed=7)
    with pytest.raises(ConfigurationError):
        data.partition_iid(ds, ds.train_count + 1, seed=8)


def test_partition_noniid_label_bound_and_balance():
    ds = data.synthetic_blobs(720, 6, 10, seed=9)  # 600 train, 60 per class
    shards = data.partition_noniid(ds, 10, 2, seed=10)
    _assert_exact_partition(ds, shards)
    sizes = [s.num_examples for s in shards]
    for shard in shards:
        assert len(set(shard.labels.tolist())) <= 2
    # every label-pure segment has 30 examples here
    assert max(sizes) - min(sizes) <= 30


def test_partition_noniid_classes_equal_to_total_is_vacuous():
    ds = data.synthetic_blobs(240, 5, 4, seed=11)
    shards = data.partition_noniid(ds, 5, 4, seed=12)
    _assert_exact_partition(ds, shards)
    for shard in shards:
        assert len(set(shard.labels.tolist())) <= 4


def test_partition_noniid_same_seed_is_identical():
    ds = data.synthetic_blobs(360, 5, 6, seed=13)
    a = data.partition_noniid(ds, 6, 2, seed=14)
    b = data.partition_noniid(ds, 6, 2, seed=14)
    for x, y in zip(a, b):
        assert np.array_equal(x.features, y.features)
        assert np.array_equal(x.labels, y.labels)


def test_partition_noniid_rejects_infeasible():
    ds = data.synthetic_blobs(24, 4, 2, seed=15)  # 20 training examples
    with pytest.raises(ConfigurationError):
        data.partition_noniid(ds, 15, 2, seed=16)


def test_synthetic_blobs_split_and_balance():
    ds = data.synthetic_blobs(600, 10, 2, seed=17)
    assert ds.train_count == 500
    assert ds.test_count == 100
    assert ds.num_features == 10
    counts = np.bincount(ds.test_labels, minlength=2)
    assert counts.tolist() == [50, 50]


def test_synthetic_blobs_single_class():
    ds = data.synthetic_blobs(30, 3, 1, seed=18)
    assert np.all(ds.train_labels == 0)
    assert np.all(ds.test_labels == 0)


def test_synthetic_blobs_deterministic():
    a = data.synthetic_blobs(90, 4, 3, seed=19)
    b = data.synthetic_blobs(90, 4, 3, seed=19)
    assert np.array_equal(a.train_features, b.train_features)
    assert np.array_equal(a.test_features, b.test_features)
    assert np.array_equal(a.train_labels, b.train_labels)


def test_wide_margin_blobs_are_learnable_to_perfect_train_accuracy():
    # centralized run pinned once: a 10-8-2 net fits blobs(600, 10, 2)
    # perfectly within 20 epochs of plain SGD
    from fedsparsify.masks import ones_mask
    from fedsparsify.metrics import evaluate
    from fedsparsify.nn import MlpModel, OptimizerState, client_opt, init_params

    ds = data.synthetic_blobs(600, 10, 2, seed=7)
    dims = [10, 8, 2]
    params = init_params(dims, np.random.default_rng(0))
    shard = data.ClientShard(ds.train_features, ds.train_labels, 0)
    opt = OptimizerState("sgd", eta=0.1)
    rng = np.random.default_rng(3)
    reached = None
    for epoch in range(20):
        params, _ = client_opt(
            MlpModel(dims, params), ones_mask(params.size), shard,
            epochs=1, batch_size=32, opt=opt, rng=rng,
        )
        accuracy, _ = evaluate(
            MlpModel(dims, params), ones_mask(params.size),
            ds.train_features, ds.train_labels,
        )
        if accuracy == 1.0:
            reached = epoch + 1
            break
    assert reached is not None


def test_dataset_container_round_trip(tmp_path):
    ds = data.synthetic_blobs(60, 3, 2, seed=20)
    path = tmp_path / "blobs.fds"
    data.save_dataset(ds, path)
    back = data.load_dataset(path)
    assert np.array_equal(back.train_features, ds.train_features)
    assert np.array_equal(back.train_labels, ds.train_labels)
    assert np.array_equal(back.test_features, ds.test_features)
    assert np.array_equal(back.test_labels, ds.test_labels)
    assert back.num_classes == ds.num_classes


def test_dataset_container_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.fds"
    path.write_bytes(struct.pack("<IIIII", 0x1234, 0, 0, 1, 1))
    with pytest.raises(DataFormatError, match="dataset magic"):
        data.load_dataset(path)


def test_dataset_container_rejects_truncation(tmp_path):
    ds = data.synthetic_blobs(60, 3, 2, seed=21)
    path = tmp_path / "cut.fds"
    data.save_dataset(ds, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(DataFormatError, match="truncated"):
        data.load_dataset(path)


def _assert_exact_partition(ds, shards):
    total = sum(s.num_examples for s in shards)
    assert total == ds.train_count
    stacked = np.vstack([s.features for s in shards])
    key = np.lexsort(stacked.T)
    origin = np.lexsort(ds.train_features.T)
    assert np.array_equal(stacked[key], ds.train_features[origin])
