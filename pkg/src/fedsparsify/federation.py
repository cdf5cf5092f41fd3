"""Federation round engine: participant sampling, strategy dispatch, and
global state evolution.

Every source of randomness is a dedicated stream seeded from the experiment
seed plus a stream tag (and round / client indices where applicable), so a
run is bit-reproducible and independent of client execution order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .aggregation import (
    MAJORITY_VOTE,
    MERGE_RULES,
    WEIGHTED_AVERAGE,
    ClientUpdate,
    majority_vote_merge,
    weighted_average,
)
from .data import ClientShard
from .errors import ConfigurationError
from .masks import (
    PruneSchedule,
    apply_mask,
    magnitude_purge,
    nnz,
    ones_mask,
    prunefl_ratio,
    prunefl_readjust,
    random_purge,
)
from .metrics import TransmissionLedger, message_bits
from .nn import MlpModel, OptimizerState, PurgeDirective, client_opt

# rng stream tags; never reuse a tag for two purposes
INIT_STREAM = 101
CLIENT_PICK_STREAM = 102
INIT_BATCH_STREAM = 103
RECONF_STREAM = 104
SUBSAMPLE_STREAM = 105
SAMPLE_STREAM = 201
CLIENT_STREAM = 301
RANDOM_PURGE_STREAM = 302


class StrategyKind(str, Enum):
    FEDAVG_DENSE = "fedavg_dense"
    FEDPROX_DENSE = "fedprox_dense"
    MOMENTUM_DENSE = "momentum_dense"
    FEDSPARSIFY_GLOBAL = "fedsparsify_global"
    FEDSPARSIFY_LOCAL = "fedsparsify_local"
    RANDOM_LOCAL = "random_local"
    SNIP = "snip"
    GRASP = "grasp"
    PRUNEFL = "prunefl"


PROGRESSIVE_KINDS = (
    StrategyKind.FEDSPARSIFY_GLOBAL,
    StrategyKind.FEDSPARSIFY_LOCAL,
    StrategyKind.RANDOM_LOCAL,
)
INIT_PRUNING_KINDS = (StrategyKind.SNIP, StrategyKind.GRASP)
# strategies whose clients send their own mask uplink every round
LOCAL_MASK_KINDS = (StrategyKind.FEDSPARSIFY_LOCAL, StrategyKind.RANDOM_LOCAL)


@dataclass
class StrategyConfig:
    kind: StrategyKind
    schedule: PruneSchedule | None = None
    keep_ratio: float | None = None
    prunefl_s: float = 0.3
    readjust_every: int = 50
    initial_reconfigurations: int = 5
    merge_rule: str | None = None

    def __post_init__(self):
        self.kind = StrategyKind(self.kind)
        if self.kind in PROGRESSIVE_KINDS and self.schedule is None:
            raise ConfigurationError(f"{self.kind.value} needs a prune schedule")
        if self.kind in INIT_PRUNING_KINDS and self.keep_ratio is None:
            raise ConfigurationError(f"{self.kind.value} needs a keep_ratio")
        if self.kind == StrategyKind.PRUNEFL:
            if not 0.0 < self.prunefl_s <= 1.0:
                raise ConfigurationError(f"prunefl s must be in (0, 1], got {self.prunefl_s}")
            if self.readjust_every < 1 or self.initial_reconfigurations < 0:
                raise ConfigurationError("invalid prunefl readjustment settings")
        if self.merge_rule is None:
            self.merge_rule = (
                MAJORITY_VOTE if self.kind in LOCAL_MASK_KINDS else WEIGHTED_AVERAGE
            )
        if self.merge_rule not in MERGE_RULES:
            raise ConfigurationError(f"unknown merge rule {self.merge_rule!r}")
        if self.kind in LOCAL_MASK_KINDS and self.merge_rule != MAJORITY_VOTE:
            raise ConfigurationError(f"{self.kind.value} requires majority-vote merging")
        if self.kind == StrategyKind.FEDSPARSIFY_GLOBAL and self.merge_rule != WEIGHTED_AVERAGE:
            raise ConfigurationError("fedsparsify_global requires weighted-average merging")


@dataclass
class TrainingConfig:
    """Local-training hyperparameters shared by every strategy."""

    layer_dims: list[int]
    eta: float
    epochs: int
    batch_size: int
    optimizer: str = "sgd"
    momentum: float = 0.0
    mu: float = 0.0
    participation_ratio: float = 1.0
    charge_mask_every_round: bool = False

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ConfigurationError(f"learning rate must be > 0, got {self.eta}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch size must be >= 1")
        if not 0.0 < self.participation_ratio <= 1.0:
            raise ConfigurationError(
                f"participation ratio must be in (0, 1], got {self.participation_ratio}"
            )


@dataclass
class FederationState:
    """Global model state between rounds.

    `broadcast_mask` is the mask the clients currently hold; the downlink
    charges the 1-bit mask only on rounds where it differs (all clients are
    assumed to know the dense layout at the start)."""

    round_index: int
    params: np.ndarray
    mask: np.ndarray
    seed: int
    ledger: TransmissionLedger
    broadcast_mask: np.ndarray


def initial_state(params: np.ndarray, mask: np.ndarray, seed: int) -> FederationState:
    return FederationState(
        round_index=0,
        params=apply_mask(params, mask),
        mask=mask,
        seed=seed,
        ledger=TransmissionLedger(),
        broadcast_mask=ones_mask(params.size),
    )


def sample_participants(
    num_clients: int, participation_ratio: float, round_index: int, seed: int
) -> list[int]:
    """Uniform sample without replacement of round(ratio * N) client ids,
    deterministic given (seed, round)."""
    if not 0.0 < participation_ratio <= 1.0:
        raise ConfigurationError(
            f"participation ratio must be in (0, 1], got {participation_ratio}"
        )
    if int(participation_ratio * num_clients) < 1:
        raise ConfigurationError(
            f"ratio {participation_ratio} of {num_clients} clients selects nobody"
        )
    size = int(round(participation_ratio * num_clients))
    if size >= num_clients:
        return list(range(num_clients))
    rng = np.random.default_rng([seed, SAMPLE_STREAM, round_index])
    return sorted(int(c) for c in rng.choice(num_clients, size=size, replace=False))


def client_rng(seed: int, round_index: int, client_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, CLIENT_STREAM, round_index, client_id])


def make_optimizer(train: TrainingConfig, reference: np.ndarray) -> OptimizerState:
    return OptimizerState(
        kind=train.optimizer,
        eta=train.eta,
        momentum=train.momentum,
        mu=train.mu,
        reference=reference if train.optimizer == "fedprox" else None,
    )


def run_round(
    state: FederationState,
    strategy: StrategyConfig,
    train: TrainingConfig,
    clients: list[ClientShard],
) -> FederationState:
    """One federation round: broadcast, local training, merge, prune."""
    t = state.round_index + 1
    total = state.params.size
    participants = sample_participants(
        len(clients), train.participation_ratio, t, state.seed
    )

    mask_is_news = not np.array_equal(state.mask, state.broadcast_mask)
    down_bits = len(participants) * message_bits(
        nnz(state.mask), total, mask_is_news or train.charge_mask_every_round
    )

    directive = None
    if strategy.kind == StrategyKind.FEDSPARSIFY_LOCAL:
        directive = PurgeDirective(strategy.schedule.s_p, t, strategy.schedule.every)
    send_mask_up = strategy.kind in LOCAL_MASK_KINDS

    model = MlpModel(train.layer_dims, state.params)
    updates: list[ClientUpdate] = []
    up_bits = 0
    for cid in participants:
        opt = make_optimizer(train, state.params)
        params_k, mask_k = client_opt(
            model,
            state.mask,
            clients[cid],
            epochs=train.epochs,
            batch_size=train.batch_size,
            opt=opt,
            rng=client_rng(state.seed, t, cid),
            purge=directive,
        )
        if strategy.kind == StrategyKind.RANDOM_LOCAL and strategy.schedule.fires(t):
            # one shared stream per round; independent per-client drops would
            # almost never reach majority support, so nothing would ever prune
            purge_rng = np.random.default_rng([state.seed, RANDOM_PURGE_STREAM, t])
            params_k, mask_k = random_purge(params_k, mask_k, strategy.schedule.s_p, purge_rng)
        updates.append(ClientUpdate(params_k, mask_k, clients[cid].num_examples, cid))
        up_bits += message_bits(nnz(mask_k), total, send_mask_up)

    if strategy.merge_rule == MAJORITY_VOTE:
        merged, new_mask = majority_vote_merge(updates)
    else:
        # weighted averaging leaves the global mask untouched
        merged = weighted_average(updates)
        new_mask = state.mask

    if strategy.kind == StrategyKind.FEDSPARSIFY_GLOBAL and strategy.schedule.fires(t):
        merged, new_mask = magnitude_purge(merged, new_mask, strategy.schedule.s_p)

    if strategy.kind == StrategyKind.PRUNEFL and t % strategy.readjust_every == 0:
        scores = np.zeros(total)
        for u in updates:
            scores += np.abs(state.params - u.params)
        scores /= len(updates)
        new_mask = prunefl_readjust(scores, prunefl_ratio(strategy.prunefl_s, t))
        merged = apply_mask(merged, new_mask)  # regrown coordinates re-enter at 0

    return FederationState(
        round_index=t,
        params=merged,
        mask=new_mask,
        seed=state.seed,
        ledger=state.ledger.add(up=up_bits, down=down_bits),
        broadcast_mask=state.mask,
    )
