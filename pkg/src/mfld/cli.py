"""Command-line entry point: ``mfld <subcommand> [--config PATH] [--seed S] [--out DIR]``.

Exit status is 0 on success, 1 for usage or configuration errors and 2
when a run fails.
"""
import argparse
import dataclasses
import os
import sys

from . import harness
from .config import ConfigError, Experiment, default_config, load_config
from .datagen import dataset_write
from .ensemble import load_adapter, lora_merge, merge, prune_random, write_matrix
from .records import emit_csv


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON config or manifest")
    parser.add_argument("--seed", type=int, default=default, help="master seed (u64)")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker threads for independent networks")


EXPERIMENT_COMMANDS = {
    "heatmap": Experiment.MERGE_HEATMAP,
    "lambda-sweep": Experiment.LAMBDA_SWEEP,
    "stationary": Experiment.STATIONARY_CHECK,
    "lora": Experiment.LORA_MERGE,
    "train": Experiment.TRAIN,
    "gen-data": Experiment.TRAIN,
}


def build_parser():
    parser = _Parser(prog="mfld", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    helps = {
        "gen-data": "generate and split the configured dataset",
        "train": "train one network and write a checkpoint",
        "heatmap": "sup-norm heatmap over (N, M)",
        "lambda-sweep": "per-epoch ln(MSE) and merged MSE across temperatures",
        "stationary": "noise calibration against the OU stationary variance",
        "lora": "noisy-AdamW adapters on synthetic low-rank tasks, merged",
    }
    for name, text in helps.items():
        _global_flags(sub.add_parser(name, help=text), suppress=True)
    p = sub.add_parser("merge", help="merge checkpoints (or LoRA adapters with --lora)")
    _global_flags(p, suppress=True)
    p.add_argument("inputs", nargs="+", help="checkpoint CSVs or adapter stems")
    p.add_argument("--lora", action="store_true", help="inputs are adapter stems")
    p = sub.add_parser("prune", help="randomly keep a subset of a checkpoint's neurons")
    _global_flags(p, suppress=True)
    p.add_argument("input", help="checkpoint CSV")
    p.add_argument("--keep", type=int, required=True, help="number of neurons to keep")
    return parser


def _resolve(args, experiment):
    cfg = (load_config(args.config, experiment) if args.config
           else default_config(experiment))
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    try:
        return dataclasses.replace(cfg, **changes) if changes else cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _announce(path, what):
    print(f"wrote {path}: {what}")


def _run(args):
    if args.command in ("merge", "prune"):
        out = args.out or "."
        os.makedirs(out, exist_ok=True)
        if args.command == "prune":
            system = harness.read_checkpoint(args.input)
            pruned = prune_random(system, args.keep, 0 if args.seed is None else args.seed)
            path = os.path.join(out, "pruned.csv")
            harness.write_checkpoint(pruned, path)
            _announce(path, f"{pruned.n_particles} of {system.n_particles} neurons")
        elif args.lora:
            delta = lora_merge(load_adapter(stem) for stem in args.inputs)
            path = os.path.join(out, "merged_delta.csv")
            write_matrix(delta, path)
            _announce(path, f"{delta.shape[0]}x{delta.shape[1]} merged update "
                            f"from {len(args.inputs)} adapters")
        else:
            systems = [harness.read_checkpoint(p) for p in args.inputs]
            merged = merge(systems)
            path = os.path.join(out, "merged.csv")
            harness.write_checkpoint(merged, path)
            _announce(path, f"{merged.n_particles} neurons from {len(systems)} networks")
        return

    cfg = _resolve(args, EXPERIMENT_COMMANDS[args.command])
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    artifacts = []
    if args.command == "gen-data":
        tr, te = harness.load_task(cfg)
        for name, data in (("train.csv", tr), ("test.csv", te)):
            dataset_write(data, os.path.join(out, name))
            artifacts.append(name)
            _announce(os.path.join(out, name), f"{len(data)} rows, dim {data.input_dim}")
    elif args.command == "train":
        system, records = harness.run_train(cfg)
        harness.write_checkpoint(system, os.path.join(out, "network.csv"))
        emit_csv(records, os.path.join(out, "trajectory.csv"))
        artifacts += ["network.csv", "trajectory.csv"]
        _announce(os.path.join(out, "network.csv"), f"{system.n_particles} neurons")
        _announce(os.path.join(out, "trajectory.csv"), f"{len(records)} records")
    else:
        records = harness.RUNNERS[cfg.experiment](cfg, threads=max(1, args.threads))
        stem = {"heatmap": "heatmap", "lambda-sweep": "lambda_sweep",
                "stationary": "stationary", "lora": "lora_merge"}[args.command]
        emit_csv(records, os.path.join(out, stem + ".csv"))
        artifacts.append(stem + ".csv")
        _announce(os.path.join(out, stem + ".csv"), f"{len(records)} records")
        if args.command == "heatmap":
            harness.emit_heatmap_svg(records, os.path.join(out, "heatmap.svg"))
            artifacts.append("heatmap.svg")
            _announce(os.path.join(out, "heatmap.svg"),
                      f"{len(cfg.n_list)}x{len(cfg.members_to_merge)} cells")
    path = harness.write_manifest(cfg, out, artifacts)
    _announce(path, f"resolved config, master_seed={cfg.master_seed}")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError(parser.format_usage() + "mfld: error: a subcommand is required")
        _run(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"mfld: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 2
        print(f"mfld: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
