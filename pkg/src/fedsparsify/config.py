"""Experiment configuration: file parsing (TOML or JSON) and resolution."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigurationError
from .federation import StrategyConfig, StrategyKind, TrainingConfig
from .masks import PruneSchedule

DATASET_KINDS = ("synthetic", "fashion_mnist", "file")
PARTITION_SCHEMES = ("iid", "noniid")


@dataclass
class DatasetConfig:
    kind: str
    data_dir: str | None = None
    path: str | None = None
    num_examples: int = 600
    num_features: int = 10
    num_classes: int = 2
    spread: float = 4.0
    dataset_seed: int | None = None
    train_subsample: int | None = None

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigurationError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "fashion_mnist" and not self.data_dir:
            raise ConfigurationError("fashion_mnist dataset needs data_dir")
        if self.kind == "file" and not self.path:
            raise ConfigurationError("file dataset needs path")


@dataclass
class PartitionConfig:
    scheme: str = "iid"
    classes_per_client: int = 2
    seed: int | None = None

    def __post_init__(self):
        if self.scheme not in PARTITION_SCHEMES:
            raise ConfigurationError(f"unknown partition scheme {self.scheme!r}")


@dataclass
class ExperimentConfig:
    seed: int
    rounds: int
    layer_dims: list[int]
    dataset: DatasetConfig
    strategy: StrategyConfig
    eta: float = 0.02
    epochs: int = 4
    batch_size: int = 32
    num_clients: int = 10
    participation_ratio: float = 1.0
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    optimizer: str | None = None
    momentum: float = 0.75
    mu: float = 0.001
    output_dir: str | None = None
    charge_mask_every_round: bool = False

    def __post_init__(self):
        if self.rounds < 0:
            raise ConfigurationError(f"rounds must be >= 0, got {self.rounds}")
        if self.num_clients < 1:
            raise ConfigurationError(f"num_clients must be >= 1, got {self.num_clients}")
        if self.optimizer is None:
            self.optimizer = {
                StrategyKind.FEDPROX_DENSE: "fedprox",
                StrategyKind.MOMENTUM_DENSE: "momentum",
            }.get(self.strategy.kind, "sgd")
        if self.optimizer not in ("sgd", "momentum", "fedprox"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")

    def training(self) -> TrainingConfig:
        return TrainingConfig(
            layer_dims=self.layer_dims,
            eta=self.eta,
            epochs=self.epochs,
            batch_size=self.batch_size,
            optimizer=self.optimizer,
            momentum=self.momentum,
            mu=self.mu,
            participation_ratio=self.participation_ratio,
            charge_mask_every_round=self.charge_mask_every_round,
        )


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            return tomllib.loads(text.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON in {path}: {exc}") from exc


def _take(section: dict, known: dict, where: str) -> dict:
    unknown = set(section) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown {where} keys: {sorted(unknown)}")
    picked = dict(known)
    picked.update(section)
    return picked


def resolve_config(raw: dict) -> ExperimentConfig:
    """Build a validated ExperimentConfig from a parsed config mapping."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a mapping")
    for key in ("seed", "rounds", "model", "dataset", "strategy"):
        if key not in raw:
            raise ConfigurationError(f"config is missing required key {key!r}")

    model = raw["model"]
    layer_dims = model.get("layer_dims") if isinstance(model, dict) else None
    if not layer_dims or len(layer_dims) < 2:
        raise ConfigurationError("model.layer_dims must list input, hidden..., output widths")

    ds = _take(
        raw["dataset"],
        dict(
            kind=None,
            data_dir=None,
            path=None,
            num_examples=600,
            num_features=10,
            num_classes=2,
            spread=4.0,
            dataset_seed=None,
            train_subsample=None,
        ),
        "dataset",
    )
    if ds["kind"] is None:
        raise ConfigurationError("dataset.kind is required")
    dataset = DatasetConfig(**ds)

    st = _take(
        raw["strategy"],
        dict(
            kind=None,
            s_p=0.02,
            frequency=2,
            keep_ratio=None,
            prunefl_s=0.3,
            readjust_every=50,
            initial_reconfigurations=5,
            merge_rule=None,
        ),
        "strategy",
    )
    if st["kind"] is None:
        raise ConfigurationError("strategy.kind is required")
    try:
        kind = StrategyKind(st["kind"])
    except ValueError:
        raise ConfigurationError(
            f"unknown strategy kind {st['kind']!r}; valid kinds: "
            f"{[k.value for k in StrategyKind]}"
        ) from None
    schedule = None
    if kind in (
        StrategyKind.FEDSPARSIFY_GLOBAL,
        StrategyKind.FEDSPARSIFY_LOCAL,
        StrategyKind.RANDOM_LOCAL,
    ):
        side = "global" if kind == StrategyKind.FEDSPARSIFY_GLOBAL else "local"
        schedule = PruneSchedule(s_p=st["s_p"], every=st["frequency"], side=side)
    strategy = StrategyConfig(
        kind=kind,
        schedule=schedule,
        keep_ratio=st["keep_ratio"],
        prunefl_s=st["prunefl_s"],
        readjust_every=st["readjust_every"],
        initial_reconfigurations=st["initial_reconfigurations"],
        merge_rule=st["merge_rule"],
    )

    pt = _take(
        raw.get("partition", {}),
        dict(scheme="iid", classes_per_client=2, seed=None),
        "partition",
    )
    partition = PartitionConfig(**pt)

    top = _take(
        {k: v for k, v in raw.items() if k not in ("model", "dataset", "strategy", "partition")},
        dict(
            seed=None,
            rounds=None,
            eta=0.02,
            epochs=4,
            batch_size=32,
            num_clients=10,
            participation_ratio=1.0,
            optimizer=None,
            momentum=0.75,
            mu=0.001,
            output_dir=None,
            charge_mask_every_round=False,
        ),
        "top-level",
    )
    return ExperimentConfig(
        seed=int(top["seed"]),
        rounds=int(top["rounds"]),
        layer_dims=[int(d) for d in layer_dims],
        dataset=dataset,
        strategy=strategy,
        eta=float(top["eta"]),
        epochs=int(top["epochs"]),
        batch_size=int(top["batch_size"]),
        num_clients=int(top["num_clients"]),
        participation_ratio=float(top["participation_ratio"]),
        partition=partition,
        optimizer=top["optimizer"],
        momentum=float(top["momentum"]),
        mu=float(top["mu"]),
        output_dir=top["output_dir"],
        charge_mask_every_round=bool(top["charge_mask_every_round"]),
    )


def load_config(path) -> ExperimentConfig:
    return resolve_config(load_config_file(path))
