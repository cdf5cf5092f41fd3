import numpy as np
import pytest

from fedsparsify import metrics
from fedsparsify.data import ClientShard, synthetic_blobs
from fedsparsify.errors import ConfigurationError, DataFormatError
from fedsparsify.masks import nnz, ones_mask
from fedsparsify.metrics import RoundRecord, TransmissionLedger, message_bits
from fedsparsify.nn import MlpModel, OptimizerState, client_opt, init_params, param_count

from helpers import tiny_model


def test_evaluate_zero_model_on_balanced_set_predicts_first_class():
    ds = synthetic_blobs(600, 10, 10, seed=1)  # test split: 10 examples per class
    model = MlpModel([10, 10], np.zeros(param_count([10, 10])))
    accuracy, loss = metrics.evaluate(model, ones_mask(model.params.size),
                                      ds.test_features, ds.test_labels)
    assert accuracy == pytest.approx(0.1)
    assert loss == pytest.approx(np.log(10), abs=1e-9)


def test_evaluate_all_zero_mask_equals_zero_params():
    ds = synthetic_blobs(120, 5, 4, seed=2)
    model = tiny_model([5, 6, 4], seed=3)
    zero_mask = np.zeros(model.params.size, dtype=bool)
    a = metrics.evaluate(model, zero_mask, ds.test_features, ds.test_labels)
    zero_model = MlpModel([5, 6, 4], np.zeros(model.params.size))
    b = metrics.evaluate(zero_model, ones_mask(model.params.size),
                         ds.test_features, ds.test_labels)
    assert a == b


def test_evaluate_memorized_toy_set_is_perfect():
    features = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    labels = np.array([0, 1, 1, 0])
    dims = [2, 8, 2]
    params = init_params(dims, np.random.default_rng(5))
    shard = ClientShard(features, labels, 0)
    opt = OptimizerState("sgd", eta=0.5)
    rng = np.random.default_rng(9)
    for _ in range(500):
        params, _ = client_opt(
            MlpModel(dims, params), ones_mask(params.size), shard,
            epochs=1, batch_size=4, opt=opt, rng=rng,
        )
    accuracy, _ = metrics.evaluate(
        MlpModel(dims, params), ones_mask(params.size), features, labels
    )
    assert accuracy == 1.0


def test_evaluate_rejects_empty_set():
    model = tiny_model([3, 2])
    with pytest.raises(ConfigurationError):
        metrics.evaluate(model, ones_mask(model.params.size),
                         np.zeros((0, 3)), np.zeros(0, dtype=int))


def test_message_bits_reference_values():
    assert message_bits(118_282, 118_282, include_mask=False) == 3_785_024
    assert message_bits(118_282, 118_282, include_mask=False) / 1e6 == 3.785024
    assert message_bits(0, 118_282, include_mask=True) == 118_282
    assert message_bits(118_282, 118_282, include_mask=True) == 33 * 118_282


def test_message_bits_rejects_nnz_above_total():
    with pytest.raises(ConfigurationError):
        message_bits(11, 10, include_mask=False)


def test_ledger_accumulates_and_rejects_negative():
    ledger = TransmissionLedger().add(up=100, down=50).add(up=1, down=2)
    assert ledger.bits_up == 101
    assert ledger.bits_down == 52
    assert ledger.mbit_up == pytest.approx(101 / 1e6)
    with pytest.raises(ConfigurationError):
        ledger.add(up=-1)


def make_records(n):
    return [
        RoundRecord(
            round_index=t,
            test_accuracy=0.1 + 0.004 * t,
            test_loss=2.3 / (t + 1),
            nnz=1000 - t,
            sparsity=t / 1000,
            cumulative_mbit_up=0.123456789 * t,
            cumulative_mbit_down=0.987654321 * t,
        )
        for t in range(1, n + 1)
    ]


def test_write_records_empty_is_header_only(tmp_path):
    path = tmp_path / "records.csv"
    metrics.write_records([], path)
    assert path.read_text() == metrics.CSV_HEADER + "\n"


def test_write_records_line_count(tmp_path):
    path = tmp_path / "records.csv"
    metrics.write_records(make_records(200), path)
    assert len(path.read_text().splitlines()) == 201


def test_records_round_trip_at_printed_precision(tmp_path):
    path = tmp_path / "records.csv"
    records = make_records(25)
    metrics.write_records(records, path)
    back = metrics.read_records(path)
    assert metrics.record_rows(back) == metrics.record_rows(records)
    assert [r.round_index for r in back] == [r.round_index for r in records]
    assert [r.nnz for r in back] == [r.nnz for r in records]


def test_write_records_is_byte_stable(tmp_path):
    records = make_records(10)
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    metrics.write_records(records, a)
    metrics.write_records(records, b)
    assert a.read_bytes() == b.read_bytes()


def test_json_mirror_embeds_manifest(tmp_path):
    import json

    path = tmp_path / "records.csv"
    metrics.write_records(make_records(3), path, manifest={"seed": 1990})
    mirror = json.loads(path.with_suffix(".json").read_text())
    assert mirror["manifest"]["seed"] == 1990
    assert len(mirror["records"]) == 3


def test_read_records_rejects_bad_header(tmp_path):
    path = tmp_path / "records.csv"
    path.write_text("not,a,header\n")
    with pytest.raises(DataFormatError):
        metrics.read_records(path)


def test_checkpoint_round_trip(tmp_path):
    model = tiny_model([6, 5, 3], seed=8)
    mask = np.random.default_rng(9).random(model.params.size) < 0.7
    path = tmp_path / "model.ckpt"
    metrics.save_checkpoint(model, mask, path)
    back_model, back_mask = metrics.load_checkpoint(path)
    assert back_model.layer_dims == [6, 5, 3]
    assert np.array_equal(back_model.params, model.params)
    assert np.array_equal(back_mask, mask)
    assert nnz(back_mask) == nnz(mask)


def test_checkpoint_rejects_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"\x00" * 8)
    with pytest.raises(DataFormatError, match="magic"):
        metrics.load_checkpoint(path)

    model = tiny_model([4, 3], seed=10)
    good = tmp_path / "good.ckpt"
    metrics.save_checkpoint(model, ones_mask(model.params.size), good)
    blob = good.read_bytes()
    good.write_bytes(blob[:-4])
    with pytest.raises(DataFormatError):
        metrics.load_checkpoint(good)
