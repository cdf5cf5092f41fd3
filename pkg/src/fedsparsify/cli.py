"""Command-line entry point.

Subcommands: `run` executes one experiment from a config file, `partition`
writes client shards to disk, `evaluate` scores a saved checkpoint against
a dataset. Exit codes: 0 success, 2 configuration error, 3 data-format
error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .data import (
    LabeledDataset,
    load_dataset,
    load_idx_dataset,
    partition_iid,
    partition_noniid,
    save_dataset,
)
from .errors import ConfigurationError, DataFormatError
from .experiment import run_experiment
from .masks import nnz, sparsity
from .metrics import evaluate, load_checkpoint


def _resolve_dataset(name: str, data_dir: str | None) -> LabeledDataset:
    if name == "fashion-mnist":
        if not data_dir:
            raise ConfigurationError("--dataset fashion-mnist requires --data-dir")
        return load_idx_dataset(data_dir)
    path = Path(name)
    if not path.exists():
        raise ConfigurationError(f"dataset {name!r} is neither fashion-mnist nor a file")
    return load_dataset(path)


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.output is not None:
        config.output_dir = args.output
    if args.charge_mask_every_round:
        config.charge_mask_every_round = True

    def report(record):
        if not args.quiet:
            print(
                f"round {record.round_index:4d}  "
                f"acc {record.test_accuracy:.4f}  loss {record.test_loss:.4f}  "
                f"sparsity {record.sparsity:.4f}  "
                f"up {record.cumulative_mbit_up:.3f} Mbit  "
                f"down {record.cumulative_mbit_down:.3f} Mbit"
            )

    result = run_experiment(config, on_round=report)
    if config.output_dir:
        print(f"wrote {len(result.records)} round records to {config.output_dir}")
    return 0


def _cmd_partition(args) -> int:
    dataset = _resolve_dataset(args.dataset, args.data_dir)
    if args.scheme == "noniid":
        shards = partition_noniid(dataset, args.clients, args.classes_per_client, args.seed)
    else:
        shards = partition_iid(dataset, args.clients, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for shard in shards:
        shard_ds = LabeledDataset(
            shard.features,
            shard.labels,
            shard.features[:0],
            shard.labels[:0],
            dataset.num_classes,
        )
        save_dataset(shard_ds, out / f"client_{shard.client_id:03d}.fds")
    print(f"wrote {len(shards)} shards to {out}")
    return 0


def _cmd_evaluate(args) -> int:
    model, mask = load_checkpoint(args.checkpoint)
    dataset = _resolve_dataset(args.dataset, args.data_dir)
    accuracy, loss = evaluate(model, mask, dataset.test_features, dataset.test_labels)
    print(
        f"accuracy {accuracy:.6f}  loss {loss:.6f}  "
        f"nnz {nnz(mask)}  sparsity {sparsity(mask):.6f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsparsify", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True, help="TOML or JSON experiment config")
    p_run.add_argument("--output", default=None, help="override the config output_dir")
    p_run.add_argument(
        "--charge-mask-every-round",
        action="store_true",
        help="charge the downlink mask every round instead of only when it changes",
    )
    p_run.add_argument("--quiet", action="store_true", help="suppress per-round lines")
    p_run.set_defaults(func=_cmd_run)

    p_part = sub.add_parser("partition", help="write client shards to a directory")
    p_part.add_argument(
        "--dataset", required=True, help="'fashion-mnist' or path to a dataset file"
    )
    p_part.add_argument("--data-dir", default=None, help="directory with the IDX files")
    p_part.add_argument("--clients", type=int, required=True)
    p_part.add_argument("--scheme", choices=["iid", "noniid"], default="iid")
    p_part.add_argument("--classes-per-client", type=int, default=2)
    p_part.add_argument("--seed", type=int, required=True)
    p_part.add_argument("--out", required=True, help="output directory")
    p_part.set_defaults(func=_cmd_partition)

    p_eval = sub.add_parser("evaluate", help="score a checkpoint on a test set")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument(
        "--dataset", required=True, help="'fashion-mnist' or path to a dataset file"
    )
    p_eval.add_argument("--data-dir", default=None)
    p_eval.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
