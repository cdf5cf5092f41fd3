"""Merging local models into the global model.

Two rules: size-weighted averaging, and majority voting where a coordinate
survives only when at least half of the round's participants kept it.
Summation order is fixed (ascending client id) so results are bit-identical
regardless of how client training was scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

WEIGHTED_AVERAGE = "weighted_average"
MAJORITY_VOTE = "majority_vote"
MERGE_RULES = (WEIGHTED_AVERAGE, MAJORITY_VOTE)


@dataclass
class ClientUpdate:
    params: np.ndarray
    mask: np.ndarray
    num_examples: int
    client_id: int


def _ordered(updates: list[ClientUpdate]) -> list[ClientUpdate]:
    if not updates:
        raise ConfigurationError("cannot merge an empty update list")
    length = updates[0].params.size
    for u in updates:
        if u.params.size != length or u.mask.size != length:
            raise ConfigurationError("updates have mixed parameter lengths")
    if sum(u.num_examples for u in updates) <= 0:
        raise ConfigurationError("total example count across updates is zero")
    return sorted(updates, key=lambda u: u.client_id)


def _weighted_sum(ordered: list[ClientUpdate]) -> np.ndarray:
    total = sum(u.num_examples for u in ordered)
    out = np.zeros_like(ordered[0].params)
    for u in ordered:
        out += (u.num_examples / total) * u.params
    return out


def weighted_average(updates: list[ClientUpdate]) -> np.ndarray:
    """Size-weighted mean of the client models: sum_k (|D_k| / |D|) w_k."""
    return _weighted_sum(_ordered(updates))


def majority_vote_merge(updates: list[ClientUpdate]) -> tuple[np.ndarray, np.ndarray]:
    """Keep a coordinate only when at least half the participants retain it.

    Kept coordinates take the size-weighted average over all participants,
    including the zeros contributed by clients whose mask dropped the
    coordinate; the rest are zeroed out.
    """
    ordered = _ordered(updates)
    support = np.zeros(ordered[0].mask.size, dtype=np.int64)
    for u in ordered:
        support += u.mask
    kept = support * 2 >= len(ordered)  # integer-exact "support >= N/2"
    out = np.where(kept, _weighted_sum(ordered), 0.0)
    return out, kept


def merge(merge_rule: str, updates: list[ClientUpdate]) -> tuple[np.ndarray, np.ndarray]:
    """Dispatch on the configured merge rule; returns (params, mask).

    Under weighted averaging the output mask is the union of the client
    masks, which collapses to the shared global mask whenever all clients
    carry the same one.
    """
    if merge_rule == MAJORITY_VOTE:
        return majority_vote_merge(updates)
    if merge_rule == WEIGHTED_AVERAGE:
        ordered = _ordered(updates)
        support = np.zeros(ordered[0].mask.size, dtype=bool)
        for u in ordered:
            support |= u.mask
        return _weighted_sum(ordered), support
    raise ConfigurationError(f"unknown merge rule {merge_rule!r}")
