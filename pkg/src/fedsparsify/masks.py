"""Binary parameter masks, purge operators, and pruning schedules.

In memory a mask is a boolean vector with one entry per model parameter
(True = parameter active). On the wire and on disk masks are packed to
1 bit per parameter, LSB-first within each byte: parameter i lands in
byte i // 8 at bit position i % 8.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataFormatError


def ones_mask(length: int) -> np.ndarray:
    return np.ones(length, dtype=bool)


def nnz(mask: np.ndarray) -> int:
    """Number of active parameters."""
    return int(np.count_nonzero(mask))


def sparsity(mask: np.ndarray) -> float:
    return 1.0 - nnz(mask) / mask.size


def apply_mask(params: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Return a copy of params with inactive coordinates set to exactly 0.0."""
    if params.shape != mask.shape:
        raise ConfigurationError(
            f"mask length {mask.size} does not match parameter count {params.size}"
        )
    return np.where(mask, params, 0.0)


def packed_size(length: int) -> int:
    return (length + 7) // 8


def pack(mask: np.ndarray) -> bytes:
    return np.packbits(mask.astype(np.uint8), bitorder="little").tobytes()


def unpack(data: bytes, length: int) -> np.ndarray:
    expected = packed_size(length)
    if len(data) != expected:
        raise DataFormatError(
            f"packed mask is {len(data)} bytes, expected {expected} for {length} bits"
        )
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=length, bitorder="little")
    return bits.astype(bool)


@dataclass(frozen=True)
class PruneSchedule:
    """Progressive pruning schedule: drop a fraction s_p of the active weights
    every `every` rounds, on the given side of the federation."""

    s_p: float
    every: int
    side: str = "global"  # "global" | "local" | "none"

    def __post_init__(self):
        if not 0.0 <= self.s_p < 1.0:
            raise ConfigurationError(f"s_p must be in [0, 1), got {self.s_p}")
        if self.every < 1:
            raise ConfigurationError(f"frequency must be >= 1, got {self.every}")
        if self.side not in ("global", "local", "none"):
            raise ConfigurationError(f"unknown schedule side {self.side!r}")

    def fires(self, round_index: int) -> bool:
        return round_index >= 1 and round_index % self.every == 0


def magnitude_purge(
    params: np.ndarray, mask: np.ndarray, s_p: float
) -> tuple[np.ndarray, np.ndarray]:
    """Zero out the smallest-magnitude active weights.

    Candidates are the active coordinates holding a nonzero value; of those,
    the floor(s_p * count) smallest |value| are dropped, ties going to the
    lower index. Coordinates that are already zero never re-enter.
    """
    if not 0.0 <= s_p < 1.0:
        raise ConfigurationError(f"s_p must be in [0, 1), got {s_p}")
    candidates = np.flatnonzero(mask & (params != 0.0))
    k = int(s_p * candidates.size)
    new_params = params.copy()
    new_mask = mask.copy()
    if k > 0:
        order = np.argsort(np.abs(params[candidates]), kind="stable")
        dropped = candidates[order[:k]]
        new_params[dropped] = 0.0
        new_mask[dropped] = False
    return new_params, new_mask


def random_purge(
    params: np.ndarray, mask: np.ndarray, s_p: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Zero out floor(s_p * nnz) active coordinates chosen uniformly without
    replacement from the active set."""
    if not 0.0 <= s_p < 1.0:
        raise ConfigurationError(f"s_p must be in [0, 1), got {s_p}")
    active = np.flatnonzero(mask)
    k = int(s_p * active.size)
    new_params = params.copy()
    new_mask = mask.copy()
    if k > 0:
        dropped = rng.choice(active, size=k, replace=False)
        new_params[dropped] = 0.0
        new_mask[dropped] = False
    return new_params, new_mask


def expected_nnz(nnz_0: int, s_p: float, every: int, t: int) -> int:
    """Active-parameter count after all purge events up to and including
    round t, under server-side progressive pruning.

    Each event at a round divisible by `every` removes floor(s_p * current)
    coordinates; the closed form nnz_0 * (1 - s_p)^(t // every) holds only up
    to the per-event flooring.
    """
    if t < 0:
        raise ConfigurationError(f"round index must be >= 0, got {t}")
    if every < 1:
        raise ConfigurationError(f"frequency must be >= 1, got {every}")
    if not 0.0 <= s_p < 1.0:
        raise ConfigurationError(f"s_p must be in [0, 1), got {s_p}")
    n = int(nnz_0)
    for _ in range(every, t + 1, every):
        n -= int(s_p * n)
    return n


def prunefl_ratio(s: float, t: int) -> float:
    """Sparsification target for mask readjustment at round t: s * 0.5^(t/1000)."""
    if not 0.0 < s <= 1.0:
        raise ConfigurationError(f"s must be in (0, 1], got {s}")
    if t < 0:
        raise ConfigurationError(f"round index must be >= 0, got {t}")
    return s * 0.5 ** (t / 1000.0)


def prunefl_readjust(scores: np.ndarray, target_ratio: float) -> np.ndarray:
    """Rebuild the mask from per-parameter gradient-magnitude scores.

    With uniform per-parameter execution times the readjustment keeps the
    ceil((1 - target_ratio) * P) highest-scoring parameters. Previously
    pruned coordinates may re-enter (regrowth); the caller re-enters them
    at value zero.
    """
    if not 0.0 < target_ratio <= 1.0:
        raise ConfigurationError(f"target_ratio must be in (0, 1], got {target_ratio}")
    keep = math.ceil((1.0 - target_ratio) * scores.size)
    return top_k_mask(scores, keep)


def top_k_mask(scores: np.ndarray, keep: int) -> np.ndarray:
    """Mask keeping the `keep` highest scores; ties keep the lower index."""
    mask = np.zeros(scores.size, dtype=bool)
    if keep > 0:
        order = np.argsort(-scores, kind="stable")
        mask[order[:keep]] = True
    return mask


def bottom_k_mask(scores: np.ndarray, keep: int) -> np.ndarray:
    """Mask keeping the `keep` lowest scores; ties keep the lower index."""
    mask = np.zeros(scores.size, dtype=bool)
    if keep > 0:
        order = np.argsort(scores, kind="stable")
        mask[order[:keep]] = True
    return mask
