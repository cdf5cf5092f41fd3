"""Whole-experiment driver: data materialization, initial-mask construction,
the round loop, and record/manifest output."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .data import (
    LabeledDataset,
    load_dataset,
    load_idx_dataset,
    partition_iid,
    partition_noniid,
    synthetic_blobs,
)
from .errors import ConfigurationError
from .federation import (
    CLIENT_PICK_STREAM,
    INIT_BATCH_STREAM,
    INIT_STREAM,
    RECONF_STREAM,
    SUBSAMPLE_STREAM,
    FederationState,
    StrategyConfig,
    StrategyKind,
    TrainingConfig,
    make_optimizer,
    initial_state,
    run_round,
)
from .masks import apply_mask, nnz, ones_mask, prunefl_ratio, prunefl_readjust, sparsity
from .metrics import RoundRecord, evaluate, save_checkpoint, write_records
from .nn import MlpModel, client_opt, init_params
from .saliency import grasp_mask, snip_mask

INIT_BATCH_SIZE = 32


@dataclass
class ExperimentResult:
    records: list[RoundRecord]
    state: FederationState
    manifest: dict

    @property
    def model(self) -> MlpModel:
        return MlpModel(self.manifest["model"]["layer_dims"], self.state.params)


def materialize_dataset(config: ExperimentConfig) -> LabeledDataset:
    ds = config.dataset
    if ds.kind == "synthetic":
        seed = ds.dataset_seed if ds.dataset_seed is not None else config.seed
        return synthetic_blobs(
            ds.num_examples, ds.num_features, ds.num_classes, seed, spread=ds.spread
        )
    if ds.kind == "fashion_mnist":
        dataset = load_idx_dataset(ds.data_dir)
    else:
        dataset = load_dataset(ds.path)
    if ds.train_subsample is not None:
        if not 0 < ds.train_subsample <= dataset.train_count:
            raise ConfigurationError(
                f"train_subsample {ds.train_subsample} outside 1..{dataset.train_count}"
            )
        rng = np.random.default_rng([config.seed, SUBSAMPLE_STREAM])
        keep = rng.choice(dataset.train_count, size=ds.train_subsample, replace=False)
        dataset = LabeledDataset(
            dataset.train_features[keep],
            dataset.train_labels[keep],
            dataset.test_features,
            dataset.test_labels,
            dataset.num_classes,
        )
    return dataset


def make_shards(config: ExperimentConfig, dataset: LabeledDataset):
    seed = config.partition.seed if config.partition.seed is not None else config.seed
    if config.partition.scheme == "noniid":
        return partition_noniid(
            dataset, config.num_clients, config.partition.classes_per_client, seed
        )
    return partition_iid(dataset, config.num_clients, seed)


def _initial_mask(
    config: ExperimentConfig,
    strategy: StrategyConfig,
    train: TrainingConfig,
    params: np.ndarray,
    shards,
) -> tuple[np.ndarray, int | None]:
    """Construct the pre-training mask for the init-pruning strategies.

    The scoring client is drawn from the experiment seed; its first seeded
    batch feeds the single scoring pass."""
    kind = strategy.kind
    if kind not in (StrategyKind.SNIP, StrategyKind.GRASP, StrategyKind.PRUNEFL):
        return ones_mask(params.size), None

    seed = config.seed
    picked = int(np.random.default_rng([seed, CLIENT_PICK_STREAM]).integers(len(shards)))
    shard = shards[picked]
    mask = ones_mask(params.size)

    if kind in (StrategyKind.SNIP, StrategyKind.GRASP):
        order = np.random.default_rng([seed, INIT_BATCH_STREAM]).permutation(
            shard.num_examples
        )[:INIT_BATCH_SIZE]
        batch_x, batch_y = shard.features[order], shard.labels[order]
        model = MlpModel(config.layer_dims, params)
        score = snip_mask if kind == StrategyKind.SNIP else grasp_mask
        mask = score(model, batch_x, batch_y, strategy.keep_ratio)
        return mask, picked

    # mask-only reconfiguration cycles: brief local training scores the
    # parameters, the trained weights themselves are discarded
    for i in range(strategy.initial_reconfigurations):
        start = apply_mask(params, mask)
        trained, _ = client_opt(
            MlpModel(config.layer_dims, params),
            mask,
            shard,
            epochs=1,
            batch_size=train.batch_size,
            opt=make_optimizer(train, start),
            rng=np.random.default_rng([seed, RECONF_STREAM, i]),
        )
        scores = np.abs(trained - start)
        mask = prunefl_readjust(scores, prunefl_ratio(strategy.prunefl_s, 0))
    return mask, picked


def build_manifest(config: ExperimentConfig, init_pruning_client: int | None) -> dict:
    st = config.strategy
    return {
        "package": "fedsparsify",
        "version": __version__,
        "seed": config.seed,
        "rounds": config.rounds,
        "model": {"layer_dims": list(config.layer_dims)},
        "dataset": {
            "kind": config.dataset.kind,
            "data_dir": config.dataset.data_dir,
            "path": config.dataset.path,
            "num_examples": config.dataset.num_examples,
            "num_features": config.dataset.num_features,
            "num_classes": config.dataset.num_classes,
            "spread": config.dataset.spread,
            "dataset_seed": config.dataset.dataset_seed,
            "train_subsample": config.dataset.train_subsample,
        },
        "partition": {
            "scheme": config.partition.scheme,
            "classes_per_client": config.partition.classes_per_client,
            "seed": config.partition.seed,
        },
        "strategy": {
            "kind": st.kind.value,
            "s_p": st.schedule.s_p if st.schedule else None,
            "frequency": st.schedule.every if st.schedule else None,
            "keep_ratio": st.keep_ratio,
            "prunefl_s": st.prunefl_s,
            "readjust_every": st.readjust_every,
            "initial_reconfigurations": st.initial_reconfigurations,
            "merge_rule": st.merge_rule,
        },
        "training": {
            "optimizer": config.optimizer,
            "eta": config.eta,
            "momentum": config.momentum,
            "mu": config.mu,
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "num_clients": config.num_clients,
            "participation_ratio": config.participation_ratio,
        },
        "charge_mask_every_round": config.charge_mask_every_round,
        "init_pruning_client": init_pruning_client,
    }


def run_experiment(config: ExperimentConfig, on_round=None) -> ExperimentResult:
    """Run one seeded experiment end to end, one record per round.

    The model is evaluated on the held-out test set after each round's merge
    and pruning steps. `on_round` is an optional callback receiving each
    RoundRecord as it is produced.
    """
    dataset = materialize_dataset(config)
    dims = config.layer_dims
    if dims[0] != dataset.num_features:
        raise ConfigurationError(
            f"model input width {dims[0]} does not match "
            f"dataset features {dataset.num_features}"
        )
    if dims[-1] < dataset.num_classes:
        raise ConfigurationError(
            f"model output width {dims[-1]} is smaller than "
            f"the {dataset.num_classes} dataset classes"
        )
    shards = make_shards(config, dataset)
    strategy = config.strategy
    train = config.training()

    params = init_params(dims, np.random.default_rng([config.seed, INIT_STREAM]))
    mask, init_client = _initial_mask(config, strategy, train, params, shards)
    manifest = build_manifest(config, init_client)

    out_dir = None
    if config.output_dir is not None:
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    state = initial_state(params, mask, config.seed)
    records: list[RoundRecord] = []
    for _ in range(config.rounds):
        state = run_round(state, strategy, train, shards)
        accuracy, loss = evaluate(
            MlpModel(dims, state.params),
            state.mask,
            dataset.test_features,
            dataset.test_labels,
        )
        record = RoundRecord(
            round_index=state.round_index,
            test_accuracy=accuracy,
            test_loss=loss,
            nnz=nnz(state.mask),
            sparsity=sparsity(state.mask),
            cumulative_mbit_up=state.ledger.mbit_up,
            cumulative_mbit_down=state.ledger.mbit_down,
        )
        records.append(record)
        if on_round is not None:
            on_round(record)

    if out_dir is not None:
        write_records(records, out_dir / "records.csv", manifest)
        save_checkpoint(MlpModel(dims, state.params), state.mask, out_dir / "model.ckpt")
    return ExperimentResult(records=records, state=state, manifest=manifest)
