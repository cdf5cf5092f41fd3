"""Per-round evaluation, transmission-cost accounting, and records on disk."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataFormatError
from .masks import apply_mask, pack, packed_size, unpack
from .nn import MlpModel, forward

CSV_HEADER = "round,accuracy,loss,nnz,sparsity,mbit_up,mbit_down"
CHECKPOINT_MAGIC = 0x46445343

# Mbit uses the decimal convention: 1 Mbit = 10^6 bits.
BITS_PER_MBIT = 1_000_000


@dataclass
class RoundRecord:
    round_index: int
    test_accuracy: float
    test_loss: float
    nnz: int
    sparsity: float
    cumulative_mbit_up: float
    cumulative_mbit_down: float


@dataclass(frozen=True)
class TransmissionLedger:
    """Running bit counts per direction; grows monotonically."""

    bits_up: int = 0
    bits_down: int = 0

    def add(self, up: int = 0, down: int = 0) -> "TransmissionLedger":
        if up < 0 or down < 0:
            raise ConfigurationError("transmission deltas must be >= 0")
        return TransmissionLedger(self.bits_up + up, self.bits_down + down)

    @property
    def mbit_up(self) -> float:
        return self.bits_up / BITS_PER_MBIT

    @property
    def mbit_down(self) -> float:
        return self.bits_down / BITS_PER_MBIT


def message_bits(nnz: int, total_params: int, include_mask: bool) -> int:
    """Bits for one model transfer: 32 per nonzero weight, plus one bit per
    parameter when the binary mask rides along."""
    if nnz < 0 or nnz > total_params:
        raise ConfigurationError(f"nnz {nnz} outside [0, {total_params}]")
    return 32 * nnz + (total_params if include_mask else 0)


def evaluate(
    model: MlpModel,
    mask: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    batch_size: int = 512,
) -> tuple[float, float]:
    """Masked-model accuracy and mean loss over a held-out set.

    Predictions are the argmax over class scores; ties resolve to the lowest
    class index.
    """
    if features.shape[0] == 0:
        raise ConfigurationError("evaluation set is empty")
    masked = MlpModel(model.layer_dims, apply_mask(model.params, mask))
    correct = 0
    loss_sum = 0.0
    n = features.shape[0]
    for start in range(0, n, batch_size):
        fx = features[start : start + batch_size]
        fy = labels[start : start + batch_size]
        logits, loss = forward(masked, fx, fy)
        correct += int(np.sum(np.argmax(logits, axis=1) == fy))
        loss_sum += loss * fx.shape[0]
    return correct / n, loss_sum / n


def _fmt(value: float) -> str:
    return format(value, ".9g")


def record_rows(records: list[RoundRecord]) -> list[str]:
    rows = []
    for r in records:
        rows.append(
            f"{r.round_index},{_fmt(r.test_accuracy)},{_fmt(r.test_loss)},"
            f"{r.nnz},{_fmt(r.sparsity)},{_fmt(r.cumulative_mbit_up)},"
            f"{_fmt(r.cumulative_mbit_down)}"
        )
    return rows


def write_records(records: list[RoundRecord], path, manifest: dict | None = None) -> None:
    """CSV at `path` (one row per round, 9 significant digits) plus a JSON
    mirror alongside with the run manifest embedded."""
    path = Path(path)
    try:
        path.write_text("\n".join([CSV_HEADER, *record_rows(records)]) + "\n")
        mirror = {
            "manifest": manifest or {},
            "records": [
                {
                    "round": r.round_index,
                    "accuracy": r.test_accuracy,
                    "loss": r.test_loss,
                    "nnz": r.nnz,
                    "sparsity": r.sparsity,
                    "mbit_up": r.cumulative_mbit_up,
                    "mbit_down": r.cumulative_mbit_down,
                }
                for r in records
            ],
        }
        path.with_suffix(".json").write_text(json.dumps(mirror, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write records to {path}: {exc}") from exc


def read_records(path) -> list[RoundRecord]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise DataFormatError(f"{path} does not start with the expected header")
    records = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 7:
            raise DataFormatError(f"malformed record row: {line!r}")
        records.append(
            RoundRecord(
                round_index=int(parts[0]),
                test_accuracy=float(parts[1]),
                test_loss=float(parts[2]),
                nnz=int(parts[3]),
                sparsity=float(parts[4]),
                cumulative_mbit_up=float(parts[5]),
                cumulative_mbit_down=float(parts[6]),
            )
        )
    return records


def save_checkpoint(model: MlpModel, mask: np.ndarray, path) -> None:
    """Model architecture, parameters, and the packed 1-bit mask."""
    with open(path, "wb") as f:
        f.write(struct.pack("<II", CHECKPOINT_MAGIC, len(model.layer_dims)))
        f.write(struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims))
        f.write(np.ascontiguousarray(model.params, dtype="<f8").tobytes())
        f.write(pack(mask))


def load_checkpoint(path) -> tuple[MlpModel, np.ndarray]:
    with open(path, "rb") as f:
        header = f.read(8)
        if len(header) != 8:
            raise DataFormatError("truncated checkpoint header")
        magic, n_layers = struct.unpack("<II", header)
        if magic != CHECKPOINT_MAGIC:
            raise DataFormatError(
                f"checkpoint magic is 0x{magic:08x}, expected 0x{CHECKPOINT_MAGIC:08x}"
            )
        dims_raw = f.read(4 * n_layers)
        if len(dims_raw) != 4 * n_layers:
            raise DataFormatError("truncated checkpoint layer dims")
        dims = list(struct.unpack(f"<{n_layers}I", dims_raw))
        count = sum(a * b + b for a, b in zip(dims, dims[1:]))
        raw = f.read(8 * count)
        if len(raw) != 8 * count:
            raise DataFormatError("truncated checkpoint parameters")
        params = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        packed = f.read(packed_size(count))
        mask = unpack(packed, count)
    return MlpModel(dims, params), mask
